// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "air/corpus.hpp"
#include "air/errors.hpp"
#include "air/head_detect.hpp"

using namespace air;

namespace {

ForwardTrace make_trace(int layers, int heads, std::size_t seq) {
    ForwardTrace trace;
    trace.seq_len = seq;
    trace.num_layers = layers;
    trace.num_heads = heads;
    trace.vocab_size = 0;
    trace.attention.assign(static_cast<std::size_t>(layers * heads),
                           std::vector<double>(seq * (seq + 1) / 2, 0.0));
    trace.token_losses.assign(seq, 0.0);
    trace.loss_mask.assign(seq, 0);
    return trace;
}

void set_row(ForwardTrace& trace, int layer, int head, std::size_t query,
             const std::vector<double>& row) {
    auto& buf = trace.attention[static_cast<std::size_t>(layer * trace.num_heads + head)];
    std::copy(row.begin(), row.end(), buf.begin() + static_cast<std::ptrdiff_t>(
                                                        query * (query + 1) / 2));
}

Sample make_sample(std::vector<TokenId> prompt, std::vector<TokenId> output,
                   TokenRange needle) {
    Sample s;
    s.id = "hand";
    s.prompt_tokens = std::move(prompt);
    s.output_tokens = std::move(output);
    s.step_bounds = {TokenRange{0, s.output_tokens.size()}};
    s.needle = needle;
    return s;
}

}  // namespace

TEST_CASE("copy_events: maximal attention on the copied needle position earns an event") {
    // prompt positions:   0   1   2   3   4      output
    const Sample sample = make_sample({10, 20, 30, 40, 0}, {20}, TokenRange{1, 3});
    ForwardTrace trace = make_trace(1, 2, 6);
    // Query position 4 predicts output token 0. Head (0,0) looks at the
    // needle position holding the generated token; head (0,1) looks away.
    set_row(trace, 0, 0, 4, {0.02, 0.90, 0.02, 0.03, 0.03});
    set_row(trace, 0, 1, 4, {0.90, 0.02, 0.02, 0.03, 0.03});
    const HeadEvents events = copy_events(trace, sample);
    CHECK(events.positions[0] == std::vector<std::size_t>{1});
    CHECK(events.positions[1].empty());
}

TEST_CASE("copy_events: C1 failure (generated token outside the needle) blocks all events") {
    const Sample sample = make_sample({10, 20, 30, 40, 0}, {55}, TokenRange{1, 3});
    ForwardTrace trace = make_trace(1, 1, 6);
    set_row(trace, 0, 0, 4, {0.02, 0.90, 0.02, 0.03, 0.03});
    const HeadEvents events = copy_events(trace, sample);
    CHECK(events.positions[0].empty());
}

TEST_CASE("copy_events: exact argmax ties credit the lowest needle position") {
    // Positions 1 and 3 both hold the generated token inside the needle.
    const Sample sample = make_sample({10, 20, 5, 20, 0}, {20}, TokenRange{1, 4});
    ForwardTrace trace = make_trace(1, 1, 6);
    set_row(trace, 0, 0, 4, {0.1, 0.4, 0.05, 0.4, 0.05});
    const HeadEvents events = copy_events(trace, sample);
    CHECK(events.positions[0] == std::vector<std::size_t>{1});
}

TEST_CASE("copy_events: an argmax outside the needle span does not count") {
    // Position 0 holds the same token value but sits outside the needle.
    const Sample sample = make_sample({20, 9, 20, 8, 0}, {20}, TokenRange{2, 3});
    ForwardTrace trace = make_trace(1, 1, 6);
    set_row(trace, 0, 0, 4, {0.90, 0.02, 0.03, 0.03, 0.02});
    const HeadEvents events = copy_events(trace, sample);
    CHECK(events.positions[0].empty());
}

TEST_CASE("copy_events requires the needle") {
    Sample sample = make_sample({1, 2, 3, 4, 0}, {2}, TokenRange{1, 2});
    sample.needle.reset();
    ForwardTrace trace = make_trace(1, 1, 6);
    CHECK_THROWS_AS(copy_events(trace, sample), ValidationError);
}

TEST_CASE("retrieval_scores: recall arithmetic") {
    const ModelConfig config{1, 1, 4, 64, 64, 0};
    Sample sample = make_sample({0, 1, 2, 3, 4, 5}, {1, 2, 3, 4}, TokenRange{1, 5});
    sample.id = "s0";

    HeadEvents half;
    half.positions = {{1, 3}};  // 2 of 4 needle positions
    std::vector<HeadEvents> events{half};
    std::vector<Sample> samples{sample};
    CHECK(retrieval_scores(config, events, samples)[0] == 0.5);

    HeadEvents full;
    full.positions = {{1, 2, 3, 4}};
    events = {full};
    CHECK(retrieval_scores(config, events, samples)[0] == 1.0);

    HeadEvents none;
    none.positions = {{}};
    events = {none};
    CHECK(retrieval_scores(config, events, samples)[0] == 0.0);

    CHECK_THROWS_AS(retrieval_scores(config, std::span<const HeadEvents>{},
                                     std::span<const Sample>{}),
                    ValidationError);
}

TEST_CASE("retrieval_scores are invariant under sample permutation") {
    const ModelConfig config{2, 2, 8, 64, 64, 0};
    std::mt19937_64 rng(41);
    std::vector<Sample> samples;
    std::vector<HeadEvents> events;
    for (int i = 0; i < 12; ++i) {
        Sample s = make_sample({0, 1, 2, 3, 4, 5, 6, 7}, {1, 2, 3}, TokenRange{1, 4});
        s.id = "s" + std::to_string(i);
        samples.push_back(s);
        HeadEvents e;
        e.positions.resize(4);
        for (auto& pos : e.positions) {
            for (std::size_t p = 1; p < 4; ++p) {
                if (rng() % 2 == 0) {
                    pos.push_back(p);
                }
            }
        }
        events.push_back(e);
    }
    const std::vector<double> base = retrieval_scores(config, events, samples);

    std::vector<std::size_t> order{5, 2, 9, 0, 11, 3, 7, 1, 10, 4, 8, 6};
    std::vector<Sample> shuffled_samples;
    std::vector<HeadEvents> shuffled_events;
    for (std::size_t i : order) {
        shuffled_samples.push_back(samples[i]);
        shuffled_events.push_back(events[i]);
    }
    const std::vector<double> permuted =
        retrieval_scores(config, shuffled_events, shuffled_samples);
    for (std::size_t h = 0; h < base.size(); ++h) {
        CHECK(base[h] == doctest::Approx(permuted[h]).epsilon(1e-15));
    }
    CHECK(select_critical_heads(base, config, 0.3) ==
          select_critical_heads(permuted, config, 0.3));
}

TEST_CASE("select_critical_heads: sizes, ties and errors") {
    const ModelConfig config{2, 4, 8, 64, 64, 0};  // 8 heads
    const std::vector<double> scores{0.1, 0.9, 0.3, 0.2, 0.8, 0.05, 0.4, 0.6};

    const auto top1 = select_critical_heads(scores, config, 0.05);
    REQUIRE(top1.size() == 1);  // max(1, ceil(0.4)) = 1
    CHECK(top1[0] == HeadId{0, 1});

    const auto top4 = select_critical_heads(scores, config, 0.5);
    REQUIRE(top4.size() == 4);
    CHECK(std::find(top4.begin(), top4.end(), HeadId{0, 1}) != top4.end());
    CHECK(std::find(top4.begin(), top4.end(), HeadId{1, 0}) != top4.end());
    CHECK(std::find(top4.begin(), top4.end(), HeadId{1, 3}) != top4.end());
    CHECK(std::find(top4.begin(), top4.end(), HeadId{1, 2}) != top4.end());

    const std::vector<double> equal(8, 0.5);
    const auto tied = select_critical_heads(equal, config, 0.25);
    REQUIRE(tied.size() == 2);
    CHECK(tied[0] == HeadId{0, 0});
    CHECK(tied[1] == HeadId{0, 1});

    CHECK_THROWS_AS(select_critical_heads(scores, config, 0.0), ValidationError);
    CHECK_THROWS_AS(select_critical_heads(scores, config, 1.0), ValidationError);
}

TEST_CASE("shrinking delta never adds heads") {
    const ModelConfig config{2, 4, 8, 64, 64, 0};
    std::mt19937_64 rng(43);
    std::vector<double> scores(8);
    for (double& s : scores) {
        s = static_cast<double>(rng() % 100) / 100.0;
    }
    std::vector<HeadId> previous;
    for (double delta = 0.05; delta < 1.0; delta += 0.05) {
        const auto current = select_critical_heads(scores, config, delta);
        for (const HeadId& h : previous) {
            CHECK(std::find(current.begin(), current.end(), h) != current.end());
        }
        previous = current;
    }
}

TEST_CASE("an oracle head that always attends to the copied position scores exactly 1") {
    const ModelConfig config{1, 2, 8, 64, 64, 0};
    const auto samples = gen_copy_task(CopyTaskConfig{64, 24, 6, 20, 7});
    std::vector<HeadEvents> events;
    std::vector<double> scores;
    for (const Sample& sample : samples) {
        const std::size_t prompt_len = sample.prompt_tokens.size();
        const std::size_t total = prompt_len + sample.output_tokens.size();
        ForwardTrace trace = make_trace(1, 2, total);
        for (std::size_t j = 0; j < sample.output_tokens.size(); ++j) {
            const std::size_t query = prompt_len - 1 + j;
            std::vector<double> row(query + 1, 0.0);
            row[sample.needle->begin + j] = 1.0;  // oracle head
            set_row(trace, 0, 0, query, row);
            std::vector<double> away(query + 1, 0.0);
            away[0] = 1.0;  // head 1 stares at the first token
            set_row(trace, 0, 1, query, away);
        }
        events.push_back(copy_events(trace, sample));
    }
    scores = retrieval_scores(config, events, samples);
    CHECK(scores[0] == 1.0);
    const auto critical = select_critical_heads(scores, config, 0.05);
    REQUIRE(critical.size() == 1);
    CHECK(critical[0] == HeadId{0, 0});
}

TEST_CASE("head report JSON round-trips") {
    HeadReport report;
    report.delta = 0.25;
    report.samples_evaluated = 64;
    report.heads = {
        {HeadId{0, 0}, 0.75, 12, true},
        {HeadId{0, 1}, 0.25, 3, false},
        {HeadId{1, 0}, 0.5, 6, true},
        {HeadId{1, 1}, 0.0, 0, false},
    };
    std::ostringstream out;
    write_head_report(report, out);
    std::istringstream in(out.str());
    const HeadReport loaded = read_head_report(in, "<test>");
    CHECK(loaded.delta == report.delta);
    CHECK(loaded.samples_evaluated == report.samples_evaluated);
    REQUIRE(loaded.heads.size() == 4);
    CHECK(loaded.critical_heads() == std::vector<HeadId>{{0, 0}, {1, 0}});

    std::istringstream bad("{\"heads\": []}");
    CHECK_THROWS_AS(read_head_report(bad, "<test>"), ValidationError);
    std::istringstream out_of_range(
        "{\"delta\": 0.1, \"heads\": [{\"layer\": 0, \"head\": 0, "
        "\"retrieval_score\": 1.5, \"critical\": false}]}");
    CHECK_THROWS_AS(read_head_report(out_of_range, "<test>"), ValidationError);
}
