// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "air/influence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "air/errors.hpp"

namespace air {

using nlohmann::json;

ForwardTrace base_forward(const Parameters& params, const Sample& sample) {
    const TeacherForced tf = teacher_forced(sample);
    return forward(params, tf.tokens, tf.targets, tf.loss_mask);
}

ForwardTrace weakened_forward(const Parameters& params, const Sample& sample,
                              std::span<const HeadId> critical_heads) {
    const TeacherForced tf = teacher_forced(sample);
    return forward(params, tf.tokens, tf.targets, tf.loss_mask, critical_heads);
}

std::vector<double> token_gap(const ForwardTrace& base, const ForwardTrace& ref) {
    if (base.seq_len != ref.seq_len || base.loss_mask != ref.loss_mask) {
        throw ValidationError("token_gap: traces differ in length or loss mask");
    }
    std::vector<double> gap;
    for (std::size_t i = 0; i < base.seq_len; ++i) {
        if (base.loss_mask[i] != 0) {
            gap.push_back(ref.token_losses[i] - base.token_losses[i]);
        }
    }
    return gap;
}

std::vector<double> masked_losses(const ForwardTrace& trace) {
    std::vector<double> losses;
    for (std::size_t i = 0; i < trace.seq_len; ++i) {
        if (trace.loss_mask[i] != 0) {
            losses.push_back(trace.token_losses[i]);
        }
    }
    return losses;
}

double sample_score(std::span<const double> gap, std::span<const double> base_losses) {
    if (gap.size() != base_losses.size()) {
        throw ValidationError("sample_score: gap/base_losses length mismatch");
    }
    double gap_sum = 0.0;
    double base_sum = 0.0;
    for (std::size_t i = 0; i < gap.size(); ++i) {
        gap_sum += gap[i];
        base_sum += base_losses[i];
    }
    if (base_sum <= kDegenerateLossEps) {
        std::ostringstream oss;
        oss << "degenerate-denominator: base loss sum " << base_sum << " <= "
            << kDegenerateLossEps;
        throw ValidationError(oss.str());
    }
    return gap_sum / base_sum;
}

std::vector<double> step_scores(std::span<const double> gap,
                                std::span<const TokenRange> step_bounds) {
    if (step_bounds.empty()) {
        throw ValidationError("step_scores: no step bounds");
    }
    std::size_t cursor = 0;
    std::vector<double> scores;
    scores.reserve(step_bounds.size());
    for (const TokenRange& r : step_bounds) {
        if (r.begin != cursor || r.end <= r.begin || r.end > gap.size()) {
            throw ValidationError("step_scores: bounds do not partition the gap vector");
        }
        double sum = 0.0;
        for (std::size_t t = r.begin; t < r.end; ++t) {
            sum += gap[t];
        }
        scores.push_back(sum / static_cast<double>(r.size()));
        cursor = r.end;
    }
    if (cursor != gap.size()) {
        throw ValidationError("step_scores: bounds do not cover the gap vector");
    }
    return scores;
}

InfluenceProfile score_sample(const Parameters& params, const Sample& sample,
                              std::span<const HeadId> critical_heads) {
    const ForwardTrace base = base_forward(params, sample);
    const ForwardTrace ref = weakened_forward(params, sample, critical_heads);

    InfluenceProfile profile;
    profile.sample_id = sample.id;
    profile.category = sample.category;
    profile.token_gap = token_gap(base, ref);
    const std::vector<double> base_losses = masked_losses(base);
    profile.step_scores = step_scores(profile.token_gap, sample.step_bounds);
    profile.sample_score = sample_score(profile.token_gap, base_losses);
    profile.base_loss_sum = 0.0;
    for (double l : base_losses) {
        profile.base_loss_sum += l;
    }
    return profile;
}

std::vector<InfluenceProfile> score_corpus(const Parameters& params,
                                           std::span<const Sample> samples,
                                           std::span<const HeadId> critical_heads,
                                           int workers) {
    if (workers < 1) {
        throw ValidationError("score_corpus: workers must be >= 1");
    }
    std::vector<InfluenceProfile> profiles(samples.size());
    const std::size_t n = samples.size();
    const std::size_t thread_count = std::min<std::size_t>(static_cast<std::size_t>(workers), n);

    if (thread_count <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            profiles[i] = score_sample(params, samples[i], critical_heads);
        }
    } else {
        std::vector<std::thread> threads;
        std::exception_ptr first_error;
        std::mutex error_mutex;
        for (std::size_t w = 0; w < thread_count; ++w) {
            threads.emplace_back([&, w]() {
                try {
                    for (std::size_t i = w; i < n; i += thread_count) {
                        profiles[i] = score_sample(params, samples[i], critical_heads);
                    }
                } catch (...) {
                    const std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) {
                        first_error = std::current_exception();
                    }
                }
            });
        }
        for (std::thread& t : threads) {
            t.join();
        }
        if (first_error) {
            std::rethrow_exception(first_error);
        }
    }

    std::sort(profiles.begin(), profiles.end(),
              [](const InfluenceProfile& a, const InfluenceProfile& b) {
                  return a.sample_id < b.sample_id;
              });
    return profiles;
}

void write_scores(std::span<const InfluenceProfile> profiles, std::ostream& out) {
    std::vector<const InfluenceProfile*> sorted;
    sorted.reserve(profiles.size());
    for (const InfluenceProfile& p : profiles) {
        sorted.push_back(&p);
    }
    std::sort(sorted.begin(), sorted.end(),
              [](const InfluenceProfile* a, const InfluenceProfile* b) {
                  return a->sample_id < b->sample_id;
              });
    for (const InfluenceProfile* p : sorted) {
        json record;
        record["id"] = p->sample_id;
        record["category"] = p->category;
        record["sample_score"] = p->sample_score;
        record["step_scores"] = p->step_scores;
        record["base_loss_sum"] = p->base_loss_sum;
        out << record.dump() << "\n";
    }
    if (!out) {
        throw RuntimeError("scores: write failed");
    }
}

void write_scores(std::span<const InfluenceProfile> profiles, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw RuntimeError("scores: cannot open " + path + " for writing");
    }
    write_scores(profiles, out);
}

std::vector<ScoreRecord> read_scores(std::istream& in, const std::string& source_name) {
    std::vector<ScoreRecord> records;
    std::string line;
    std::size_t line_no = 0;
    std::unordered_map<std::string, bool> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::ostringstream where;
        where << source_name << ":" << line_no;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& err) {
            throw ValidationError(where.str() + ": malformed line: " + err.what());
        }
        if (record.is_object() && record.contains("_air")) {
            continue;
        }
        if (!record.is_object() || !record.contains("id") || !record.contains("sample_score") ||
            !record.contains("step_scores")) {
            throw ValidationError(where.str() +
                                  ": score records need id/sample_score/step_scores");
        }
        ScoreRecord r;
        r.id = record["id"].get<std::string>();
        r.category = record.value("category", std::string("default"));
        r.sample_score = record["sample_score"].get<double>();
        if (!record["step_scores"].is_array() || record["step_scores"].empty()) {
            throw ValidationError(where.str() + ": step_scores must be a nonempty array");
        }
        for (const auto& s : record["step_scores"]) {
            r.step_scores.push_back(s.get<double>());
        }
        r.base_loss_sum = record.value("base_loss_sum", 0.0);
        if (!std::isfinite(r.sample_score)) {
            throw ValidationError(where.str() + ": non-finite sample_score for '" + r.id + "'");
        }
        if (seen.contains(r.id)) {
            throw ValidationError(where.str() + ": duplicate id '" + r.id + "'");
        }
        seen[r.id] = true;
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<ScoreRecord> read_scores(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("scores: cannot open " + path);
    }
    return read_scores(in, path);
}

}  // namespace air
