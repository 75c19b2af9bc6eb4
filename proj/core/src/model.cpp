// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "air/model.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "air/errors.hpp"
#include "air/hash.hpp"

namespace air {

void ModelConfig::validate() const {
    std::ostringstream oss;
    if (num_layers <= 0 || num_heads <= 0 || model_dim <= 0 || vocab_size <= 0) {
        oss << "invalid-config: all sizes must be positive (layers=" << num_layers
            << ", heads=" << num_heads << ", dim=" << model_dim << ", vocab=" << vocab_size
            << ")";
        throw ValidationError(oss.str());
    }
    if (model_dim % num_heads != 0) {
        oss << "invalid-config: model_dim " << model_dim << " not divisible by num_heads "
            << num_heads;
        throw ValidationError(oss.str());
    }
    if (max_seq_len < 2) {
        oss << "invalid-config: max_seq_len must be >= 2, got " << max_seq_len;
        throw ValidationError(oss.str());
    }
}

ParamLayout make_layout(const ModelConfig& config) {
    config.validate();
    const auto d = static_cast<std::size_t>(config.model_dim);
    const auto mlp = static_cast<std::size_t>(config.mlp_dim());
    const auto vocab = static_cast<std::size_t>(config.vocab_size);
    const auto max_seq = static_cast<std::size_t>(config.max_seq_len);

    ParamLayout layout;
    std::size_t cursor = 0;
    auto add = [&](const std::string& name, std::size_t rows, std::size_t cols) {
        std::size_t offset = cursor;
        layout.tensors.push_back({name, offset, rows, cols});
        cursor += rows * cols;
        return offset;
    };

    layout.tok_emb = add("tok_emb", vocab, d);
    layout.pos_emb = add("pos_emb", max_seq, d);
    layout.layers.resize(static_cast<std::size_t>(config.num_layers));
    for (int l = 0; l < config.num_layers; ++l) {
        const std::string prefix = "layer" + std::to_string(l) + ".";
        auto& lo = layout.layers[static_cast<std::size_t>(l)];
        lo.wq = add(prefix + "wq", d, d);
        lo.wk = add(prefix + "wk", d, d);
        lo.wv = add(prefix + "wv", d, d);
        lo.wo = add(prefix + "wo", d, d);
        lo.w_fc = add(prefix + "w_fc", mlp, d);
        lo.w_proj = add(prefix + "w_proj", d, mlp);
    }
    layout.unemb = add("unemb", vocab, d);
    layout.total = cursor;
    return layout;
}

void Parameters::validate() const {
    config.validate();
    const ParamLayout layout = make_layout(config);
    if (data.size() != layout.total) {
        std::ostringstream oss;
        oss << "parameters: blob holds " << data.size() << " values, layout expects "
            << layout.total;
        throw ValidationError(oss.str());
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i])) {
            std::ostringstream oss;
            oss << "parameters: non-finite value at index " << i;
            throw ValidationError(oss.str());
        }
    }
}

namespace {

// Self-contained Gaussian sampler (Box-Muller with cached spare) so that
// initialization is pinned to the mt19937_64 stream rather than the standard
// library's unspecified normal_distribution algorithm.
class Gaussian {
public:
    explicit Gaussian(std::uint64_t seed) : rng_(seed) {}

    double next(double stddev) {
        if (has_spare_) {
            has_spare_ = false;
            return spare_ * stddev;
        }
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double radius = std::sqrt(-2.0 * std::log1p(-u1));  // log(1-u1), u1 in [0,1)
        const double angle = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle) * stddev;
    }

private:
    double uniform01() {
        // 53-bit mantissa construction, value in [0, 1).
        return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    }

    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace

Parameters init_model(const ModelConfig& config) {
    config.validate();
    const ParamLayout layout = make_layout(config);

    Parameters params;
    params.config = config;
    params.data.assign(layout.total, 0.0);
    params.version = 0;

    Gaussian gauss(static_cast<std::uint64_t>(config.seed));
    const double stddev = 1.0 / std::sqrt(static_cast<double>(config.model_dim));
    for (double& value : params.data) {
        value = gauss.next(stddev);
    }
    return params;
}

std::uint64_t parameter_checksum(const Parameters& params) {
    return fnv1a64(std::span<const unsigned char>(
        reinterpret_cast<const unsigned char*>(params.data.data()),
        params.data.size() * sizeof(double)));
}

std::string to_hex(std::uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xF];
        value >>= 4;
    }
    return out;
}

}  // namespace air
