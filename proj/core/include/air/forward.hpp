// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "air/model.hpp"

namespace air {

/// Everything one teacher-forced pass produces: logits, the exact causal
/// attention row of every head at every query position, and per-position
/// cross-entropy losses in nats.
struct ForwardTrace {
    std::size_t seq_len = 0;
    int num_layers = 0;
    int num_heads = 0;
    int vocab_size = 0;

    /// Row-major seq_len x vocab_size.
    std::vector<double> logits;

    /// One triangular buffer per (layer, head): the row for query position i
    /// starts at i*(i+1)/2 and has i+1 entries (visible positions 0..i).
    std::vector<std::vector<double>> attention;

    /// Cross-entropy in nats where loss_mask is true, exactly 0 elsewhere.
    std::vector<double> token_losses;
    std::vector<unsigned char> loss_mask;

    std::span<const double> logits_at(std::size_t pos) const {
        return std::span<const double>(logits).subspan(pos * static_cast<std::size_t>(vocab_size),
                                                       static_cast<std::size_t>(vocab_size));
    }

    std::span<const double> head_row(int layer, int head, std::size_t query) const {
        const auto& buf = attention[static_cast<std::size_t>(layer * num_heads + head)];
        return std::span<const double>(buf).subspan(query * (query + 1) / 2, query + 1);
    }
};

/// Teacher-forced forward pass with attention capture.
///
/// Heads in `override_heads` get their post-softmax attention rows replaced
/// by the exact uniform row 1/(i+1) over the i+1 visible positions; the
/// uniform row is what mixes the values, so overriding changes the outputs
/// of everything downstream while leaving all weights untouched.
///
/// `targets`, when non-empty, must align one-per-position (caller applies
/// the next-token shift). `loss_mask` defaults to all-true when targets are
/// given; positions with a false mask carry loss 0.
ForwardTrace forward(const Parameters& params,
                     std::span<const TokenId> tokens,
                     std::span<const TokenId> targets = {},
                     std::span<const unsigned char> loss_mask = {},
                     std::span<const HeadId> override_heads = {});

}  // namespace air
