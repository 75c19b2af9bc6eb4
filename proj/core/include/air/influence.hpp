// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Attention influence scoring: the weakened-model view of a sample, the
// per-token loss gap against the base model, and its step- and sample-level
// aggregates.

#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "air/corpus.hpp"
#include "air/forward.hpp"
#include "air/model.hpp"

namespace air {

/// Denominators at or below this are degenerate (a sample on which the base
/// model has essentially zero loss cannot carry a relative divergence).
inline constexpr double kDegenerateLossEps = 1e-9;

struct InfluenceProfile {
    std::string sample_id;
    std::string category;
    std::vector<double> token_gap;    // per output token, nats
    std::vector<double> step_scores;  // mean gap per step, nats
    double sample_score = 0.0;        // relative loss divergence
    double base_loss_sum = 0.0;       // nats
};

/// Teacher-forced base pass; losses only on output positions.
ForwardTrace base_forward(const Parameters& params, const Sample& sample);

/// Same pass with the critical heads' attention rows overridden to uniform.
/// The weakened model is never materialized: identical weights, altered
/// forward pass.
ForwardTrace weakened_forward(const Parameters& params, const Sample& sample,
                              std::span<const HeadId> critical_heads);

/// Per masked position: loss(ref) - loss(base). Traces must share the mask.
std::vector<double> token_gap(const ForwardTrace& base, const ForwardTrace& ref);

/// Losses at mask-true positions, in position order.
std::vector<double> masked_losses(const ForwardTrace& trace);

/// sum(gap) / sum(base); throws on a degenerate denominator.
double sample_score(std::span<const double> gap, std::span<const double> base_losses);

/// Mean gap per step; bounds must partition the gap vector.
std::vector<double> step_scores(std::span<const double> gap,
                                std::span<const TokenRange> step_bounds);

InfluenceProfile score_sample(const Parameters& params, const Sample& sample,
                              std::span<const HeadId> critical_heads);

/// Profiles for a whole corpus, sorted by sample id. `workers` > 1 fans the
/// samples out across threads; the result is byte-identical either way.
std::vector<InfluenceProfile> score_corpus(const Parameters& params,
                                           std::span<const Sample> samples,
                                           std::span<const HeadId> critical_heads,
                                           int workers = 1);

/// Scores JSONL, one record per line, sorted by id:
///   {"id": str, "category": str, "sample_score": f,
///    "step_scores": [f, ...], "base_loss_sum": f}
struct ScoreRecord {
    std::string id;
    std::string category;
    double sample_score = 0.0;
    std::vector<double> step_scores;
    double base_loss_sum = 0.0;
};

void write_scores(std::span<const InfluenceProfile> profiles, std::ostream& out);
void write_scores(std::span<const InfluenceProfile> profiles, const std::string& path);
std::vector<ScoreRecord> read_scores(std::istream& in, const std::string& source_name);
std::vector<ScoreRecord> read_scores(const std::string& path);

}  // namespace air
