// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "air/model.hpp"

namespace air {

/// Decoupled-weight-decay adaptive-moment optimizer settings plus the
/// learning-rate schedule: linear warmup over the first warmup_frac of
/// total_steps, then cosine decay to zero.
struct TrainConfig {
    double base_lr = 1e-5;
    double warmup_frac = 0.05;
    std::int64_t total_steps = 1;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 1e-4;
    double adam_eps = 1e-8;

    void validate() const;
};

struct TrainState {
    std::vector<double> m;  // first moments
    std::vector<double> v;  // second moments
    std::int64_t step = 0;
    TrainConfig config;
};

TrainState init_train_state(const Parameters& params, const TrainConfig& config);

/// Learning rate applied at 1-based step `step`.
double learning_rate_at(const TrainConfig& config, std::int64_t step);

/// One training sequence: teacher-forced tokens with per-position targets,
/// loss mask and nonnegative per-token weights. Masked-off positions must
/// carry weight 0.
struct TrainSequence {
    std::span<const TokenId> tokens;
    std::span<const TokenId> targets;
    std::span<const unsigned char> loss_mask;
    std::span<const double> weights;
};

/// Mean weighted cross-entropy over the batch, (1/N) sum_t w_t * loss_t with
/// N = number of mask-true positions, and its analytic gradient. `grad_out`
/// must hold layout.total entries; it is overwritten.
double weighted_loss_and_gradient(const Parameters& params,
                                  std::span<const TrainSequence> batch,
                                  std::span<double> grad_out);

struct TrainStepResult {
    Parameters params;
    TrainState state;
    double loss = 0.0;
};

/// One optimizer update. Throws ValidationError on negative weights or
/// misaligned spans; throws RuntimeError on a non-finite loss/gradient (the
/// caller's parameters are left untouched — the update never happens).
/// An all-zero-weight batch only bumps the version and step counters.
TrainStepResult train_step(const Parameters& params, const TrainState& state,
                           std::span<const TrainSequence> batch);

}  // namespace air
