// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "air/head_detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "air/errors.hpp"
#include "json_io.hpp"

namespace air {

using nlohmann::json;

HeadEvents copy_events(const ForwardTrace& trace, const Sample& sample) {
    sample.validate();
    if (!sample.needle.has_value()) {
        throw ValidationError("copy_events: sample '" + sample.id + "' has no needle");
    }
    const std::size_t prompt_len = sample.prompt_tokens.size();
    const std::size_t total = prompt_len + sample.output_tokens.size();
    if (trace.seq_len != total) {
        std::ostringstream oss;
        oss << "copy_events: trace length " << trace.seq_len << " does not match prompt+output "
            << total << " for sample '" << sample.id << "'";
        throw ValidationError(oss.str());
    }

    const TokenRange needle = *sample.needle;
    std::unordered_set<TokenId> needle_values;
    for (std::size_t p = needle.begin; p < needle.end; ++p) {
        needle_values.insert(sample.prompt_tokens[p]);
    }

    const std::size_t head_count = static_cast<std::size_t>(trace.num_layers) *
                                   static_cast<std::size_t>(trace.num_heads);
    std::vector<std::unordered_set<std::size_t>> hits(head_count);

    for (std::size_t j = 0; j < sample.output_tokens.size(); ++j) {
        const TokenId generated = sample.output_tokens[j];
        if (!needle_values.contains(generated)) {
            continue;  // C1 fails
        }
        const std::size_t query = prompt_len - 1 + j;
        for (int l = 0; l < trace.num_layers; ++l) {
            for (int h = 0; h < trace.num_heads; ++h) {
                const auto row = trace.head_row(l, h, query);
                double max_attn = row[0];
                for (double a : row) {
                    max_attn = a > max_attn ? a : max_attn;
                }
                // C2: among exact argmax positions, the lowest one that sits
                // in the needle span and holds the generated token.
                std::size_t matched = total;
                for (std::size_t pos = needle.begin; pos < needle.end && pos < row.size();
                     ++pos) {
                    if (row[pos] == max_attn && sample.prompt_tokens[pos] == generated) {
                        matched = pos;
                        break;
                    }
                }
                if (matched < total) {
                    hits[static_cast<std::size_t>(l * trace.num_heads + h)].insert(matched);
                }
            }
        }
    }

    HeadEvents events;
    events.positions.resize(head_count);
    for (std::size_t h = 0; h < head_count; ++h) {
        events.positions[h].assign(hits[h].begin(), hits[h].end());
        std::sort(events.positions[h].begin(), events.positions[h].end());
    }
    return events;
}

std::vector<double> retrieval_scores(const ModelConfig& config,
                                     std::span<const HeadEvents> per_sample_events,
                                     std::span<const Sample> samples) {
    if (samples.empty()) {
        throw ValidationError("retrieval_scores: empty sample list");
    }
    if (per_sample_events.size() != samples.size()) {
        throw ValidationError("retrieval_scores: events/samples size mismatch");
    }
    const std::size_t head_count = static_cast<std::size_t>(config.total_heads());
    std::vector<double> scores(head_count, 0.0);
    for (std::size_t s = 0; s < samples.size(); ++s) {
        if (!samples[s].needle.has_value() || samples[s].needle->size() == 0) {
            throw ValidationError("retrieval_scores: sample '" + samples[s].id +
                                  "' has no needle");
        }
        if (per_sample_events[s].positions.size() != head_count) {
            throw ValidationError("retrieval_scores: head count mismatch in events");
        }
        const double k = static_cast<double>(samples[s].needle->size());
        for (std::size_t h = 0; h < head_count; ++h) {
            scores[h] += static_cast<double>(per_sample_events[s].positions[h].size()) / k;
        }
    }
    const double inv = 1.0 / static_cast<double>(samples.size());
    for (double& s : scores) {
        s *= inv;
    }
    return scores;
}

std::vector<HeadId> select_critical_heads(std::span<const double> scores,
                                          const ModelConfig& config, double delta) {
    if (!(delta > 0.0) || !(delta < 1.0)) {
        std::ostringstream oss;
        oss << "select_critical_heads: delta must lie in (0, 1), got " << delta;
        throw ValidationError(oss.str());
    }
    const std::size_t head_count = static_cast<std::size_t>(config.total_heads());
    if (scores.size() != head_count || head_count == 0) {
        throw ValidationError("select_critical_heads: score vector does not match head count");
    }
    // A hair below the product guards against fp noise pushing ceil past an
    // exact integer; keeps |H_critical| monotone in delta.
    const std::size_t count = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::ceil(delta * static_cast<double>(head_count) - 1e-9)));

    std::vector<std::size_t> order(head_count);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return a < b;  // flat index ascending == (lower layer, lower head)
    });

    std::vector<HeadId> critical;
    critical.reserve(count);
    for (std::size_t i = 0; i < count && i < head_count; ++i) {
        const int flat = static_cast<int>(order[i]);
        critical.push_back(HeadId{flat / config.num_heads, flat % config.num_heads});
    }
    std::sort(critical.begin(), critical.end());
    return critical;
}

std::vector<HeadId> HeadReport::critical_heads() const {
    std::vector<HeadId> out;
    for (const Entry& e : heads) {
        if (e.critical) {
            out.push_back(e.head);
        }
    }
    return out;
}

HeadReport detect_heads(const Parameters& params, std::span<const Sample> samples,
                        double delta) {
    if (samples.empty()) {
        throw ValidationError("detect-heads: empty corpus");
    }
    std::vector<HeadEvents> events;
    events.reserve(samples.size());
    for (const Sample& sample : samples) {
        if (!sample.needle.has_value()) {
            throw ValidationError("detect-heads: sample '" + sample.id + "' has no needle");
        }
        const TeacherForced tf = teacher_forced(sample);
        const ForwardTrace trace = forward(params, tf.tokens);
        events.push_back(copy_events(trace, sample));
    }
    const std::vector<double> scores = retrieval_scores(params.config, events, samples);
    const std::vector<HeadId> critical = select_critical_heads(scores, params.config, delta);

    HeadReport report;
    report.delta = delta;
    report.samples_evaluated = samples.size();
    for (int l = 0; l < params.config.num_layers; ++l) {
        for (int h = 0; h < params.config.num_heads; ++h) {
            HeadReport::Entry entry;
            entry.head = HeadId{l, h};
            const std::size_t flat = static_cast<std::size_t>(head_index(params.config, entry.head));
            entry.retrieval_score = scores[flat];
            std::size_t total_events = 0;
            for (const HeadEvents& e : events) {
                total_events += e.positions[flat].size();
            }
            entry.events = total_events;
            entry.critical = std::binary_search(critical.begin(), critical.end(), entry.head);
            report.heads.push_back(entry);
        }
    }
    return report;
}

namespace detail {

json head_report_to_json(const HeadReport& report) {
    json doc;
    doc["delta"] = report.delta;
    doc["samples_evaluated"] = report.samples_evaluated;
    json heads = json::array();
    std::vector<HeadReport::Entry> sorted = report.heads;
    std::sort(sorted.begin(), sorted.end(),
              [](const HeadReport::Entry& a, const HeadReport::Entry& b) {
                  return a.head < b.head;
              });
    for (const HeadReport::Entry& e : sorted) {
        json entry;
        entry["layer"] = e.head.layer;
        entry["head"] = e.head.head;
        entry["retrieval_score"] = e.retrieval_score;
        entry["events"] = e.events;
        entry["critical"] = e.critical;
        heads.push_back(entry);
    }
    doc["heads"] = heads;
    return doc;
}

}  // namespace detail

void write_head_report(const HeadReport& report, std::ostream& out) {
    out << detail::head_report_to_json(report).dump(2) << "\n";
    if (!out) {
        throw RuntimeError("head report: write failed");
    }
}

void write_head_report(const HeadReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw RuntimeError("head report: cannot open " + path + " for writing");
    }
    write_head_report(report, out);
}

HeadReport read_head_report(std::istream& in, const std::string& source_name) {
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& err) {
        throw ValidationError(source_name + ": malformed head report: " + err.what());
    }
    if (!doc.is_object() || !doc.contains("delta") || !doc.contains("heads") ||
        !doc["heads"].is_array()) {
        throw ValidationError(source_name + ": head report needs \"delta\" and \"heads\"");
    }
    HeadReport report;
    report.delta = doc["delta"].get<double>();
    if (doc.contains("samples_evaluated")) {
        report.samples_evaluated = doc["samples_evaluated"].get<std::size_t>();
    }
    for (const auto& entry : doc["heads"]) {
        if (!entry.is_object() || !entry.contains("layer") || !entry.contains("head") ||
            !entry.contains("retrieval_score") || !entry.contains("critical")) {
            throw ValidationError(source_name +
                                  ": head entries need layer/head/retrieval_score/critical");
        }
        HeadReport::Entry e;
        e.head.layer = entry["layer"].get<int>();
        e.head.head = entry["head"].get<int>();
        if (e.head.layer < 0 || e.head.head < 0) {
            throw ValidationError(source_name + ": negative head coordinates");
        }
        e.retrieval_score = entry["retrieval_score"].get<double>();
        if (!std::isfinite(e.retrieval_score) || e.retrieval_score < 0.0 ||
            e.retrieval_score > 1.0) {
            throw ValidationError(source_name + ": retrieval_score outside [0, 1]");
        }
        if (entry.contains("events")) {
            e.events = entry["events"].get<std::size_t>();
        }
        e.critical = entry["critical"].get<bool>();
        report.heads.push_back(e);
    }
    return report;
}

HeadReport read_head_report(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("head report: cannot open " + path);
    }
    return read_head_report(in, path);
}

}  // namespace air
