// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Sample selection under per-category quotas, critical-step selection, and
// step-weight amplification with sequence-level normalization.

#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace air {

struct QuotaSpec {
    std::size_t total = 0;                        // V
    std::map<std::string, double> proportions;    // sums to 1

    void validate() const;
};

/// Largest-remainder apportionment of `total` over the proportions; the
/// per-category quotas sum to exactly V. Remainder ties break by (larger
/// remainder, category name ascending).
std::map<std::string, std::size_t> apportion_quotas(const QuotaSpec& quota);

struct ScoredSample {
    std::string id;
    std::string category;
    double sample_score = 0.0;
};

struct SelectionEntry {
    std::string id;
    std::string category;
    std::size_t rank_in_category = 0;  // 1-based rank by (score desc, id asc)
};

/// Within each category candidates rank by (score descending, id ascending);
/// the result is sorted by id. Deterministic and invariant under input
/// permutation. Throws when a category cannot fill its quota.
std::vector<SelectionEntry> select_samples(std::span<const ScoredSample> candidates,
                                           const QuotaSpec& quota);

/// Indices of the max(1, round_half_up(p_percent/100 * K)) highest-scoring
/// steps; ties prefer the lower step index. Returned sorted ascending.
/// p_percent must lie in (0, 100].
std::vector<std::size_t> critical_steps(std::span<const double> step_scores,
                                        double p_percent);

struct WeightPlan {
    std::vector<std::size_t> critical;   // K_P, sorted ascending
    std::vector<double> raw_weights;     // 1 + (alpha-1) * [k in K_P]
    std::vector<double> step_weights;    // normalized: sum_k |s_k| w_k = N
    std::vector<double> token_weights;   // step weight expanded per token
    std::size_t total_tokens = 0;        // N
    double alpha = 1.0;
    double p_percent = 0.0;
};

/// Raw amplification and normalization so the weighted token mass equals N.
/// alpha must be >= 1 and total_tokens must equal the sum of step sizes.
WeightPlan step_weights(std::span<const std::size_t> critical, double alpha,
                        std::span<const std::size_t> step_sizes, std::size_t total_tokens);

/// critical_steps + step_weights in one call; records p_percent in the plan.
WeightPlan make_weight_plan(std::span<const double> step_scores,
                            std::span<const std::size_t> step_sizes, double p_percent,
                            double alpha);

/// (1/N) sum_k w_k sum_{t in step k} loss_t. Token losses align with the
/// plan's token weights.
double weighted_sft_loss(std::span<const double> token_losses, const WeightPlan& plan);

// ---------------------------------------------------------------------------
// File formats.

/// Selection manifest JSONL: {"id": str, "category": str, "rank_in_category": int}
void write_manifest(std::span<const SelectionEntry> entries, std::ostream& out);
void write_manifest(std::span<const SelectionEntry> entries, const std::string& path);
std::vector<SelectionEntry> read_manifest(std::istream& in, const std::string& source_name);
std::vector<SelectionEntry> read_manifest(const std::string& path);

/// Weight plan JSONL: {"id": str, "alpha": f, "p_percent": f,
///                     "critical_steps": [int], "step_weights": [f]}
struct PlanRecord {
    std::string id;
    double alpha = 1.0;
    double p_percent = 0.0;
    std::vector<std::size_t> critical;
    std::vector<double> step_weights;
};

void write_plans(std::span<const PlanRecord> plans, std::ostream& out);
void write_plans(std::span<const PlanRecord> plans, const std::string& path);
std::vector<PlanRecord> read_plans(std::istream& in, const std::string& source_name);
std::vector<PlanRecord> read_plans(const std::string& path);

}  // namespace air
