// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pipeline-level configuration and the training loops shared by the
// train-probe and sft stages.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "air/corpus.hpp"
#include "air/model.hpp"
#include "air/select.hpp"

namespace air {

/// Every knob of the pipeline with its default value. Flags and config-file
/// keys carry the same kebab-case names.
struct PipelineConfig {
    ModelConfig model{2, 4, 64, 64, 128, 0};

    // head detection / selection / weighting
    double delta = 0.05;
    double p_percent = 20.0;
    double alpha = 2.0;
    std::size_t budget = 0;  // V; required by the select stage
    std::string quotas;      // "cat=frac,..."; empty = derive from the pool

    // optimizer schedule
    double lr = 1e-5;
    double warmup_frac = 0.05;
    int epochs = 5;
    int batch_size = 16;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 1e-4;

    // synthetic copy task
    int context_len = 32;
    int needle_len = 8;
    int num_samples = 256;

    // run
    std::uint64_t seed = 42;
    int workers = 1;
};

/// Deterministic per-stage split of the root seed.
std::uint64_t stage_seed(std::uint64_t root_seed, std::string_view stage);

/// Hash of the canonical key=value rendering of the whole config.
std::string config_hash_hex(const PipelineConfig& config);

/// "math=0.7,science=0.3" (also accepts ':' as the pair separator).
QuotaSpec parse_quota_string(const std::string& text, std::size_t total);

/// Proportions from category counts, e.g. of a reference corpus.
QuotaSpec quota_from_categories(std::span<const std::string> categories, std::size_t total);

// ---------------------------------------------------------------------------

struct FitOptions {
    double lr = 1e-5;
    double warmup_frac = 0.05;
    int epochs = 5;
    int batch_size = 16;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 1e-4;
    std::uint64_t shuffle_seed = 0;
    std::ostream* log = nullptr;  // per-epoch loss lines when set
};

/// Trains over the samples with per-token weights taken from the aligned
/// plans (uniform 1.0 on output positions when `plans` is empty). Samples
/// are shuffled each epoch from shuffle_seed; the schedule runs over
/// epochs * ceil(n / batch_size) steps.
Parameters fit(const Parameters& start, std::span<const Sample> samples,
               std::span<const WeightPlan> plans, const FitOptions& options);

/// Teacher-forced argmax accuracy over output positions.
double copy_accuracy(const Parameters& params, std::span<const Sample> samples);

}  // namespace air
