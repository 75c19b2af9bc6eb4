// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "air/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "air/errors.hpp"
#include "net_detail.hpp"

namespace air {

void TrainConfig::validate() const {
    if (!(base_lr > 0.0) || !std::isfinite(base_lr)) {
        throw ValidationError("train-config: base_lr must be positive");
    }
    if (warmup_frac < 0.0 || warmup_frac > 1.0) {
        throw ValidationError("train-config: warmup_frac must lie in [0, 1]");
    }
    if (total_steps < 1) {
        throw ValidationError("train-config: total_steps must be >= 1");
    }
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw ValidationError("train-config: betas must lie in [0, 1)");
    }
    if (weight_decay < 0.0) {
        throw ValidationError("train-config: weight_decay must be >= 0");
    }
}

TrainState init_train_state(const Parameters& params, const TrainConfig& config) {
    config.validate();
    TrainState state;
    state.m.assign(params.data.size(), 0.0);
    state.v.assign(params.data.size(), 0.0);
    state.step = 0;
    state.config = config;
    return state;
}

double learning_rate_at(const TrainConfig& config, std::int64_t step) {
    const std::int64_t warmup = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(
               std::ceil(config.warmup_frac * static_cast<double>(config.total_steps))));
    if (step <= warmup) {
        return config.base_lr * static_cast<double>(step) / static_cast<double>(warmup);
    }
    if (config.total_steps <= warmup) {
        return config.base_lr;
    }
    const double progress = static_cast<double>(step - warmup) /
                            static_cast<double>(config.total_steps - warmup);
    return config.base_lr * 0.5 *
           (1.0 + std::cos(3.141592653589793238462643383279502884 * std::min(progress, 1.0)));
}

namespace {

void validate_sequence(const Parameters& params, const TrainSequence& seq, std::size_t index) {
    const std::size_t n = seq.tokens.size();
    std::ostringstream oss;
    if (n == 0) {
        oss << "train batch[" << index << "]: empty token sequence";
        throw ValidationError(oss.str());
    }
    if (n > static_cast<std::size_t>(params.config.max_seq_len)) {
        oss << "train batch[" << index << "]: sequence-too-long (" << n << ")";
        throw ValidationError(oss.str());
    }
    if (seq.targets.size() != n || seq.loss_mask.size() != n || seq.weights.size() != n) {
        oss << "train batch[" << index << "]: targets/loss_mask/weights must align with tokens";
        throw ValidationError(oss.str());
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (seq.tokens[i] < 0 || seq.tokens[i] >= params.config.vocab_size) {
            oss << "train batch[" << index << "]: unknown token id " << seq.tokens[i]
                << " at position " << i;
            throw ValidationError(oss.str());
        }
        if (seq.weights[i] < 0.0 || !std::isfinite(seq.weights[i])) {
            oss << "train batch[" << index << "]: negative weight at position " << i;
            throw ValidationError(oss.str());
        }
        if (seq.loss_mask[i] == 0 && seq.weights[i] != 0.0) {
            oss << "train batch[" << index << "]: masked position " << i
                << " must carry weight 0";
            throw ValidationError(oss.str());
        }
        if (seq.loss_mask[i] != 0 &&
            (seq.targets[i] < 0 || seq.targets[i] >= params.config.vocab_size)) {
            oss << "train batch[" << index << "]: unknown target id " << seq.targets[i]
                << " at position " << i;
            throw ValidationError(oss.str());
        }
    }
}

// Per-layer activations cached by the fused forward for the backward sweep.
struct LayerCache {
    std::vector<double> x_in;     // seq x d, residual entering the layer
    std::vector<double> inv1;     // seq
    std::vector<double> normed1;  // seq x d
    std::vector<double> q, k, v;  // seq x d
    std::vector<double> probs;    // per head triangular, concatenated
    std::vector<double> mix;      // seq x d
    std::vector<double> x_mid;    // seq x d, residual after attention
    std::vector<double> inv2;     // seq
    std::vector<double> normed2;  // seq x d
    std::vector<double> fc_pre;   // seq x mlp
    std::vector<double> act;      // seq x mlp
};

// Runs the same arithmetic as air::forward (shared primitives, same loop
// order) while keeping every intermediate needed by the backward pass.
// Accumulates gradients into `grad`; returns the weighted loss numerator.
double accumulate_sequence_gradient(const Parameters& params, const ParamLayout& layout,
                                    const TrainSequence& seq, double inv_total_tokens,
                                    std::span<double> grad) {
    const ModelConfig& cfg = params.config;
    const std::size_t n = seq.tokens.size();
    const std::size_t d = static_cast<std::size_t>(cfg.model_dim);
    const std::size_t dh = static_cast<std::size_t>(cfg.head_dim());
    const std::size_t mlp = static_cast<std::size_t>(cfg.mlp_dim());
    const std::size_t vocab = static_cast<std::size_t>(cfg.vocab_size);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    const auto tok_emb = params.span(layout.tok_emb, vocab * d);
    const auto pos_emb = params.span(layout.pos_emb, static_cast<std::size_t>(cfg.max_seq_len) * d);
    const auto unemb = params.span(layout.unemb, vocab * d);

    std::vector<LayerCache> caches(static_cast<std::size_t>(cfg.num_layers));
    std::vector<double> x(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t tok = static_cast<std::size_t>(seq.tokens[i]);
        for (std::size_t c = 0; c < d; ++c) {
            x[i * d + c] = tok_emb[tok * d + c] + pos_emb[i * d + c];
        }
    }

    for (int l = 0; l < cfg.num_layers; ++l) {
        auto& cache = caches[static_cast<std::size_t>(l)];
        const auto& lo = layout.layers[static_cast<std::size_t>(l)];
        const auto wq = params.span(lo.wq, d * d);
        const auto wk = params.span(lo.wk, d * d);
        const auto wv = params.span(lo.wv, d * d);
        const auto wo = params.span(lo.wo, d * d);
        const auto w_fc = params.span(lo.w_fc, mlp * d);
        const auto w_proj = params.span(lo.w_proj, d * mlp);

        cache.x_in = x;
        cache.inv1.resize(n);
        cache.normed1.resize(n * d);
        cache.q.resize(n * d);
        cache.k.resize(n * d);
        cache.v.resize(n * d);
        cache.probs.assign(static_cast<std::size_t>(cfg.num_heads) * n * (n + 1) / 2, 0.0);
        cache.mix.assign(n * d, 0.0);

        for (std::size_t i = 0; i < n; ++i) {
            cache.inv1[i] = detail::rmsnorm(std::span<const double>(x).subspan(i * d, d),
                                            std::span<double>(cache.normed1).subspan(i * d, d));
            detail::matvec(wq, std::span<const double>(cache.normed1).subspan(i * d, d),
                           std::span<double>(cache.q).subspan(i * d, d), d, d);
            detail::matvec(wk, std::span<const double>(cache.normed1).subspan(i * d, d),
                           std::span<double>(cache.k).subspan(i * d, d), d, d);
            detail::matvec(wv, std::span<const double>(cache.normed1).subspan(i * d, d),
                           std::span<double>(cache.v).subspan(i * d, d), d, d);
        }

        const std::size_t tri = n * (n + 1) / 2;
        for (int h = 0; h < cfg.num_heads; ++h) {
            const std::size_t off = static_cast<std::size_t>(h) * dh;
            double* rows = cache.probs.data() + static_cast<std::size_t>(h) * tri;
            for (std::size_t i = 0; i < n; ++i) {
                double* row = rows + i * (i + 1) / 2;
                for (std::size_t j = 0; j <= i; ++j) {
                    double acc = 0.0;
                    const double* qi = cache.q.data() + i * d + off;
                    const double* kj = cache.k.data() + j * d + off;
                    for (std::size_t c = 0; c < dh; ++c) {
                        acc += qi[c] * kj[c];
                    }
                    row[j] = acc * scale;
                }
                detail::softmax(std::span<double>(row, i + 1));
                double* out = cache.mix.data() + i * d + off;
                for (std::size_t j = 0; j <= i; ++j) {
                    const double a = row[j];
                    const double* vj = cache.v.data() + j * d + off;
                    for (std::size_t c = 0; c < dh; ++c) {
                        out[c] += a * vj[c];
                    }
                }
            }
        }

        cache.inv2.resize(n);
        cache.normed2.resize(n * d);
        cache.fc_pre.resize(n * mlp);
        cache.act.resize(n * mlp);
        cache.x_mid.resize(n * d);
        std::vector<double> attn_out(d), proj(d);
        for (std::size_t i = 0; i < n; ++i) {
            detail::matvec(wo, std::span<const double>(cache.mix).subspan(i * d, d),
                           std::span<double>(attn_out), d, d);
            for (std::size_t c = 0; c < d; ++c) {
                x[i * d + c] += attn_out[c];
                cache.x_mid[i * d + c] = x[i * d + c];
            }
            cache.inv2[i] = detail::rmsnorm(std::span<const double>(x).subspan(i * d, d),
                                            std::span<double>(cache.normed2).subspan(i * d, d));
            detail::matvec(w_fc, std::span<const double>(cache.normed2).subspan(i * d, d),
                           std::span<double>(cache.fc_pre).subspan(i * mlp, mlp), mlp, d);
            for (std::size_t c = 0; c < mlp; ++c) {
                cache.act[i * mlp + c] = detail::gelu(cache.fc_pre[i * mlp + c]);
            }
            detail::matvec(w_proj, std::span<const double>(cache.act).subspan(i * mlp, mlp),
                           std::span<double>(proj), d, mlp);
            for (std::size_t c = 0; c < d; ++c) {
                x[i * d + c] += proj[c];
            }
        }
    }

    // Final norm + logits + loss.
    std::vector<double> x_final = x;
    std::vector<double> inv_f(n);
    std::vector<double> normed_f(n * d);
    std::vector<double> logits(vocab);
    std::vector<double> dnormed(d);
    std::vector<double> dx(n * d, 0.0);
    double loss_numerator = 0.0;

    const auto grad_unemb = grad.subspan(layout.unemb, vocab * d);
    for (std::size_t i = 0; i < n; ++i) {
        inv_f[i] = detail::rmsnorm(std::span<const double>(x_final).subspan(i * d, d),
                                   std::span<double>(normed_f).subspan(i * d, d));
        if (seq.loss_mask[i] == 0) {
            continue;
        }
        detail::matvec(unemb, std::span<const double>(normed_f).subspan(i * d, d),
                       std::span<double>(logits), vocab, d);
        const double lse = detail::logsumexp(logits);
        const std::size_t target = static_cast<std::size_t>(seq.targets[i]);
        loss_numerator += seq.weights[i] * (lse - logits[target]);

        // dlogits = (w/N) * (softmax - onehot)
        const double coeff = seq.weights[i] * inv_total_tokens;
        if (coeff == 0.0) {
            continue;
        }
        std::fill(dnormed.begin(), dnormed.end(), 0.0);
        for (std::size_t t = 0; t < vocab; ++t) {
            double dlogit = coeff * std::exp(logits[t] - lse);
            if (t == target) {
                dlogit -= coeff;
            }
            if (dlogit == 0.0) {
                continue;
            }
            const double* ur = unemb.data() + t * d;
            double* gr = grad_unemb.data() + t * d;
            const double* nf = normed_f.data() + i * d;
            for (std::size_t c = 0; c < d; ++c) {
                dnormed[c] += ur[c] * dlogit;
                gr[c] += dlogit * nf[c];
            }
        }
        detail::rmsnorm_backward(std::span<const double>(x_final).subspan(i * d, d), inv_f[i],
                                 std::span<const double>(dnormed),
                                 std::span<double>(dx).subspan(i * d, d));
    }

    // Backward through the layers, last to first.
    std::vector<double> dmix(n * d), dq(n * d), dk(n * d), dv(n * d);
    std::vector<double> dproj(d), dact(mlp), dfc(mlp), dnormed_wide(d), dattn(d);
    for (int l = cfg.num_layers - 1; l >= 0; --l) {
        auto& cache = caches[static_cast<std::size_t>(l)];
        const auto& lo = layout.layers[static_cast<std::size_t>(l)];
        const auto wq = params.span(lo.wq, d * d);
        const auto wk = params.span(lo.wk, d * d);
        const auto wv = params.span(lo.wv, d * d);
        const auto wo = params.span(lo.wo, d * d);
        const auto w_fc = params.span(lo.w_fc, mlp * d);
        const auto w_proj = params.span(lo.w_proj, d * mlp);
        auto gq = grad.subspan(lo.wq, d * d);
        auto gk = grad.subspan(lo.wk, d * d);
        auto gv = grad.subspan(lo.wv, d * d);
        auto go = grad.subspan(lo.wo, d * d);
        auto gfc = grad.subspan(lo.w_fc, mlp * d);
        auto gproj = grad.subspan(lo.w_proj, d * mlp);

        // MLP half: dx is the gradient at the layer output; turn it into the
        // gradient at x_mid (residual + norm + fc/act/proj chain).
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < d; ++c) {
                dproj[c] = dx[i * d + c];
            }
            std::fill(dact.begin(), dact.end(), 0.0);
            detail::matvec_transpose_acc(w_proj, std::span<const double>(dproj),
                                         std::span<double>(dact), d, mlp);
            detail::outer_acc(gproj, std::span<const double>(dproj),
                              std::span<const double>(cache.act).subspan(i * mlp, mlp), d, mlp);
            for (std::size_t c = 0; c < mlp; ++c) {
                dfc[c] = dact[c] * detail::gelu_grad(cache.fc_pre[i * mlp + c]);
            }
            std::fill(dnormed_wide.begin(), dnormed_wide.end(), 0.0);
            detail::matvec_transpose_acc(w_fc, std::span<const double>(dfc),
                                         std::span<double>(dnormed_wide), mlp, d);
            detail::outer_acc(gfc, std::span<const double>(dfc),
                              std::span<const double>(cache.normed2).subspan(i * d, d), mlp, d);
            // dx currently equals d(x_out); the residual keeps it, the norm
            // path adds to it.
            detail::rmsnorm_backward(std::span<const double>(cache.x_mid).subspan(i * d, d),
                                     cache.inv2[i], std::span<const double>(dnormed_wide),
                                     std::span<double>(dx).subspan(i * d, d));
        }

        // Attention half: dx now holds the gradient at x_mid.
        std::fill(dmix.begin(), dmix.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < d; ++c) {
                dattn[c] = dx[i * d + c];
            }
            detail::matvec_transpose_acc(wo, std::span<const double>(dattn),
                                         std::span<double>(dmix).subspan(i * d, d), d, d);
            detail::outer_acc(go, std::span<const double>(dattn),
                              std::span<const double>(cache.mix).subspan(i * d, d), d, d);
        }

        std::fill(dq.begin(), dq.end(), 0.0);
        std::fill(dk.begin(), dk.end(), 0.0);
        std::fill(dv.begin(), dv.end(), 0.0);
        const std::size_t tri = n * (n + 1) / 2;
        std::vector<double> da(n), ds(n);
        for (int h = 0; h < cfg.num_heads; ++h) {
            const std::size_t off = static_cast<std::size_t>(h) * dh;
            const double* rows = cache.probs.data() + static_cast<std::size_t>(h) * tri;
            for (std::size_t i = 0; i < n; ++i) {
                const double* row = rows + i * (i + 1) / 2;
                const double* dmix_i = dmix.data() + i * d + off;
                double dot_av = 0.0;
                for (std::size_t j = 0; j <= i; ++j) {
                    const double* vj = cache.v.data() + j * d + off;
                    double acc = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) {
                        acc += vj[c] * dmix_i[c];
                    }
                    da[j] = acc;
                    dot_av += acc * row[j];
                    double* dvj = dv.data() + j * d + off;
                    const double a = row[j];
                    for (std::size_t c = 0; c < dh; ++c) {
                        dvj[c] += a * dmix_i[c];
                    }
                }
                double* dqi = dq.data() + i * d + off;
                const double* qi = cache.q.data() + i * d + off;
                for (std::size_t j = 0; j <= i; ++j) {
                    const double s = row[j] * (da[j] - dot_av) * scale;
                    if (s == 0.0) {
                        continue;
                    }
                    const double* kj = cache.k.data() + j * d + off;
                    double* dkj = dk.data() + j * d + off;
                    for (std::size_t c = 0; c < dh; ++c) {
                        dqi[c] += s * kj[c];
                        dkj[c] += s * qi[c];
                    }
                }
            }
        }

        for (std::size_t i = 0; i < n; ++i) {
            std::fill(dnormed_wide.begin(), dnormed_wide.end(), 0.0);
            detail::matvec_transpose_acc(wq, std::span<const double>(dq).subspan(i * d, d),
                                         std::span<double>(dnormed_wide), d, d);
            detail::matvec_transpose_acc(wk, std::span<const double>(dk).subspan(i * d, d),
                                         std::span<double>(dnormed_wide), d, d);
            detail::matvec_transpose_acc(wv, std::span<const double>(dv).subspan(i * d, d),
                                         std::span<double>(dnormed_wide), d, d);
            const auto normed1_i = std::span<const double>(cache.normed1).subspan(i * d, d);
            detail::outer_acc(gq, std::span<const double>(dq).subspan(i * d, d), normed1_i, d, d);
            detail::outer_acc(gk, std::span<const double>(dk).subspan(i * d, d), normed1_i, d, d);
            detail::outer_acc(gv, std::span<const double>(dv).subspan(i * d, d), normed1_i, d, d);
            detail::rmsnorm_backward(std::span<const double>(cache.x_in).subspan(i * d, d),
                                     cache.inv1[i], std::span<const double>(dnormed_wide),
                                     std::span<double>(dx).subspan(i * d, d));
        }
    }

    // Embedding gradients.
    auto grad_tok = grad.subspan(layout.tok_emb, vocab * d);
    auto grad_pos = grad.subspan(layout.pos_emb, static_cast<std::size_t>(cfg.max_seq_len) * d);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t tok = static_cast<std::size_t>(seq.tokens[i]);
        for (std::size_t c = 0; c < d; ++c) {
            grad_tok[tok * d + c] += dx[i * d + c];
            grad_pos[i * d + c] += dx[i * d + c];
        }
    }
    return loss_numerator;
}

}  // namespace

double weighted_loss_and_gradient(const Parameters& params,
                                  std::span<const TrainSequence> batch,
                                  std::span<double> grad_out) {
    params.validate();
    const ParamLayout layout = make_layout(params.config);
    if (grad_out.size() != layout.total) {
        throw ValidationError("gradient buffer size mismatch");
    }
    std::fill(grad_out.begin(), grad_out.end(), 0.0);

    std::size_t total_tokens = 0;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        validate_sequence(params, batch[s], s);
        for (unsigned char on : batch[s].loss_mask) {
            total_tokens += on != 0 ? 1 : 0;
        }
    }
    if (total_tokens == 0) {
        return 0.0;
    }
    const double inv_total = 1.0 / static_cast<double>(total_tokens);
    double numerator = 0.0;
    for (const TrainSequence& seq : batch) {
        numerator += accumulate_sequence_gradient(params, layout, seq, inv_total, grad_out);
    }
    return numerator * inv_total;
}

TrainStepResult train_step(const Parameters& params, const TrainState& state,
                           std::span<const TrainSequence> batch) {
    state.config.validate();
    if (state.m.size() != params.data.size() || state.v.size() != params.data.size()) {
        throw ValidationError("train state does not match parameter shape");
    }

    bool any_weight = false;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        validate_sequence(params, batch[s], s);
        for (double w : batch[s].weights) {
            any_weight = any_weight || w != 0.0;
        }
    }

    TrainStepResult result;
    if (!any_weight) {
        result.params = params;
        result.params.version += 1;
        result.state = state;
        result.state.step += 1;
        result.loss = 0.0;
        return result;
    }

    std::vector<double> grad(params.data.size(), 0.0);
    const double loss = weighted_loss_and_gradient(params, batch, grad);
    if (!std::isfinite(loss)) {
        throw RuntimeError("nan-gradient: loss is not finite; parameters left unchanged");
    }
    for (double g : grad) {
        if (!std::isfinite(g)) {
            throw RuntimeError("nan-gradient: gradient is not finite; parameters left unchanged");
        }
    }

    result.params = params;
    result.params.version += 1;
    result.state = state;
    result.state.step += 1;
    result.loss = loss;

    const TrainConfig& cfg = state.config;
    const std::int64_t t = result.state.step;
    const double lr = learning_rate_at(cfg, t);
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < grad.size(); ++i) {
        double& m = result.state.m[i];
        double& v = result.state.v[i];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad[i];
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double m_hat = m / bc1;
        const double v_hat = v / bc2;
        double& p = result.params.data[i];
        p -= lr * (m_hat / (std::sqrt(v_hat) + cfg.adam_eps) + cfg.weight_decay * p);
    }
    return result;
}

}  // namespace air
