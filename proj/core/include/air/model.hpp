// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Toy decoder-only transformer: configuration, parameter storage and
// deterministic initialization. Pre-norm blocks, learned positional
// embeddings, 4x MLP, no biases; everything in 64-bit reals.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace air {

using TokenId = std::int32_t;

struct ModelConfig {
    int num_layers = 1;
    int num_heads = 1;
    int model_dim = 8;
    int vocab_size = 16;
    int max_seq_len = 32;
    std::int64_t seed = 0;

    int head_dim() const { return model_dim / num_heads; }
    int total_heads() const { return num_layers * num_heads; }
    int mlp_dim() const { return 4 * model_dim; }

    /// Throws ValidationError on dimension mismatch or non-positive sizes.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

/// One attention head, addressed by (layer, head) within a ModelConfig.
struct HeadId {
    int layer = 0;
    int head = 0;

    bool operator==(const HeadId&) const = default;
    auto operator<=>(const HeadId&) const = default;
};

/// Flat index of a head in [0, total_heads).
inline int head_index(const ModelConfig& config, HeadId id) {
    return id.layer * config.num_heads + id.head;
}

struct LayerOffsets {
    std::size_t wq = 0;      // model_dim x model_dim
    std::size_t wk = 0;      // model_dim x model_dim
    std::size_t wv = 0;      // model_dim x model_dim
    std::size_t wo = 0;      // model_dim x model_dim
    std::size_t w_fc = 0;    // mlp_dim x model_dim
    std::size_t w_proj = 0;  // model_dim x mlp_dim
};

struct TensorInfo {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t count() const { return rows * cols; }
};

/// Offsets (in doubles) of every tensor inside the flat parameter blob.
/// `tensors` lists them in declared order, which is also the checkpoint
/// serialization order.
struct ParamLayout {
    std::size_t tok_emb = 0;  // vocab_size x model_dim
    std::size_t pos_emb = 0;  // max_seq_len x model_dim
    std::vector<LayerOffsets> layers;
    std::size_t unemb = 0;    // vocab_size x model_dim
    std::size_t total = 0;
    std::vector<TensorInfo> tensors;
};

ParamLayout make_layout(const ModelConfig& config);

/// Learnable weights as one contiguous blob. Immutable by convention once
/// produced; training returns a fresh value with a bumped version counter.
struct Parameters {
    ModelConfig config;
    std::vector<double> data;
    std::uint64_t version = 0;

    std::span<const double> span(std::size_t offset, std::size_t count) const {
        return std::span<const double>(data).subspan(offset, count);
    }
    std::span<double> span(std::size_t offset, std::size_t count) {
        return std::span<double>(data).subspan(offset, count);
    }

    /// Throws ValidationError on shape mismatch or non-finite entries.
    void validate() const;
};

/// Deterministic function of config.seed: equal configs give bit-identical
/// parameters. Gaussian init with variance 1/model_dim.
Parameters init_model(const ModelConfig& config);

/// FNV-1a over the raw parameter bytes (config and version excluded).
std::uint64_t parameter_checksum(const Parameters& params);

}  // namespace air
