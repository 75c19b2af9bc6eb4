// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared dense primitives for the forward pass and the trainer. Both paths
// must produce bit-identical losses, so they go through these exact loops.

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace air::detail {

inline constexpr double kRmsEps = 1e-5;

// y = W x with W row-major (rows x cols).
inline void matvec(std::span<const double> w, std::span<const double> x,
                   std::span<double> y, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* wr = w.data() + r * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            acc += wr[c] * x[c];
        }
        y[r] = acc;
    }
}

// dx += W^T dy, row-major W (rows x cols).
inline void matvec_transpose_acc(std::span<const double> w, std::span<const double> dy,
                                 std::span<double> dx, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* wr = w.data() + r * cols;
        const double s = dy[r];
        if (s == 0.0) {
            continue;
        }
        for (std::size_t c = 0; c < cols; ++c) {
            dx[c] += wr[c] * s;
        }
    }
}

// dW += dy x^T (outer product accumulate), row-major dW (rows x cols).
inline void outer_acc(std::span<double> dw, std::span<const double> dy,
                      std::span<const double> x, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* dwr = dw.data() + r * cols;
        const double s = dy[r];
        if (s == 0.0) {
            continue;
        }
        for (std::size_t c = 0; c < cols; ++c) {
            dwr[c] += s * x[c];
        }
    }
}

// y = x / sqrt(mean(x^2) + eps); returns 1/sqrt(mean(x^2) + eps).
inline double rmsnorm(std::span<const double> x, std::span<double> y) {
    const std::size_t d = x.size();
    double mean_sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        mean_sq += x[i] * x[i];
    }
    mean_sq /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(mean_sq + kRmsEps);
    for (std::size_t i = 0; i < d; ++i) {
        y[i] = x[i] * inv;
    }
    return inv;
}

// dx += backward of rmsnorm given cached input x and inv = 1/sqrt(ms+eps).
inline void rmsnorm_backward(std::span<const double> x, double inv,
                             std::span<const double> dy, std::span<double> dx) {
    const std::size_t d = x.size();
    double dot = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        dot += dy[i] * x[i];
    }
    const double k = inv * inv * inv * dot / static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i) {
        dx[i] += dy[i] * inv - k * x[i];
    }
}

inline constexpr double kGeluC = 0.7978845608028653558798921198687;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

inline double gelu(double x) {
    const double inner = kGeluC * (x + kGeluA * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(inner));
}

inline double gelu_grad(double x) {
    const double inner = kGeluC * (x + kGeluA * x * x * x);
    const double t = std::tanh(inner);
    const double sech2 = 1.0 - t * t;
    return 0.5 * (1.0 + t) + 0.5 * x * sech2 * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

// In-place softmax over a short row.
inline void softmax(std::span<double> row) {
    double mx = row[0];
    for (double v : row) {
        mx = v > mx ? v : mx;
    }
    double sum = 0.0;
    for (double& v : row) {
        v = std::exp(v - mx);
        sum += v;
    }
    const double inv = 1.0 / sum;
    for (double& v : row) {
        v *= inv;
    }
}

inline double logsumexp(std::span<const double> row) {
    double mx = row[0];
    for (double v : row) {
        mx = v > mx ? v : mx;
    }
    double sum = 0.0;
    for (double v : row) {
        sum += std::exp(v - mx);
    }
    return mx + std::log(sum);
}

}  // namespace air::detail
