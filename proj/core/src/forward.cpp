// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "air/forward.hpp"

#include <cmath>
#include <sstream>

#include "air/errors.hpp"
#include "net_detail.hpp"

namespace air {

namespace {

void validate_request(const Parameters& params, std::span<const TokenId> tokens,
                      std::span<const TokenId> targets,
                      std::span<const unsigned char> loss_mask,
                      std::span<const HeadId> override_heads) {
    const ModelConfig& cfg = params.config;
    if (tokens.empty()) {
        throw ValidationError("forward: empty token sequence");
    }
    if (tokens.size() > static_cast<std::size_t>(cfg.max_seq_len)) {
        std::ostringstream oss;
        oss << "sequence-too-long: " << tokens.size() << " > max_seq_len " << cfg.max_seq_len;
        throw ValidationError(oss.str());
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] < 0 || tokens[i] >= cfg.vocab_size) {
            std::ostringstream oss;
            oss << "unknown token id " << tokens[i] << " at position " << i;
            throw ValidationError(oss.str());
        }
    }
    if (!targets.empty()) {
        if (targets.size() != tokens.size()) {
            throw ValidationError("forward: targets must align one-per-position with tokens");
        }
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const bool masked_off = !loss_mask.empty() && loss_mask[i] == 0;
            if (!masked_off && (targets[i] < 0 || targets[i] >= cfg.vocab_size)) {
                std::ostringstream oss;
                oss << "unknown target id " << targets[i] << " at position " << i;
                throw ValidationError(oss.str());
            }
        }
    }
    if (!loss_mask.empty() && loss_mask.size() != tokens.size()) {
        throw ValidationError("forward: loss_mask must align one-per-position with tokens");
    }
    for (const HeadId& id : override_heads) {
        if (id.layer < 0 || id.layer >= cfg.num_layers || id.head < 0 ||
            id.head >= cfg.num_heads) {
            std::ostringstream oss;
            oss << "override head out of range: layer " << id.layer << ", head " << id.head;
            throw ValidationError(oss.str());
        }
    }
}

}  // namespace

ForwardTrace forward(const Parameters& params, std::span<const TokenId> tokens,
                     std::span<const TokenId> targets,
                     std::span<const unsigned char> loss_mask,
                     std::span<const HeadId> override_heads) {
    params.validate();
    validate_request(params, tokens, targets, loss_mask, override_heads);

    const ModelConfig& cfg = params.config;
    const ParamLayout layout = make_layout(cfg);
    const std::size_t seq = tokens.size();
    const std::size_t d = static_cast<std::size_t>(cfg.model_dim);
    const std::size_t dh = static_cast<std::size_t>(cfg.head_dim());
    const std::size_t mlp = static_cast<std::size_t>(cfg.mlp_dim());
    const std::size_t vocab = static_cast<std::size_t>(cfg.vocab_size);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<unsigned char> overridden(
        static_cast<std::size_t>(cfg.total_heads()), 0);
    for (const HeadId& id : override_heads) {
        overridden[static_cast<std::size_t>(head_index(cfg, id))] = 1;
    }

    ForwardTrace trace;
    trace.seq_len = seq;
    trace.num_layers = cfg.num_layers;
    trace.num_heads = cfg.num_heads;
    trace.vocab_size = cfg.vocab_size;
    trace.attention.assign(static_cast<std::size_t>(cfg.total_heads()),
                           std::vector<double>(seq * (seq + 1) / 2, 0.0));
    trace.logits.assign(seq * vocab, 0.0);
    trace.token_losses.assign(seq, 0.0);
    trace.loss_mask.assign(seq, 0);

    // Residual stream, seq x d.
    std::vector<double> x(seq * d, 0.0);
    const auto tok_emb = params.span(layout.tok_emb, vocab * d);
    const auto pos_emb = params.span(layout.pos_emb, static_cast<std::size_t>(cfg.max_seq_len) * d);
    for (std::size_t i = 0; i < seq; ++i) {
        const std::size_t tok = static_cast<std::size_t>(tokens[i]);
        for (std::size_t c = 0; c < d; ++c) {
            x[i * d + c] = tok_emb[tok * d + c] + pos_emb[i * d + c];
        }
    }

    std::vector<double> normed(seq * d);
    std::vector<double> q(seq * d), k(seq * d), v(seq * d), mix(seq * d);
    std::vector<double> attn_out(d), fc(mlp), act(mlp), proj(d);

    for (int l = 0; l < cfg.num_layers; ++l) {
        const auto& lo = layout.layers[static_cast<std::size_t>(l)];
        const auto wq = params.span(lo.wq, d * d);
        const auto wk = params.span(lo.wk, d * d);
        const auto wv = params.span(lo.wv, d * d);
        const auto wo = params.span(lo.wo, d * d);
        const auto w_fc = params.span(lo.w_fc, mlp * d);
        const auto w_proj = params.span(lo.w_proj, d * mlp);

        for (std::size_t i = 0; i < seq; ++i) {
            detail::rmsnorm(std::span<const double>(x).subspan(i * d, d),
                            std::span<double>(normed).subspan(i * d, d));
            detail::matvec(wq, std::span<const double>(normed).subspan(i * d, d),
                           std::span<double>(q).subspan(i * d, d), d, d);
            detail::matvec(wk, std::span<const double>(normed).subspan(i * d, d),
                           std::span<double>(k).subspan(i * d, d), d, d);
            detail::matvec(wv, std::span<const double>(normed).subspan(i * d, d),
                           std::span<double>(v).subspan(i * d, d), d, d);
        }

        for (int h = 0; h < cfg.num_heads; ++h) {
            const std::size_t off = static_cast<std::size_t>(h) * dh;
            auto& rows = trace.attention[static_cast<std::size_t>(l * cfg.num_heads + h)];
            const bool uniform = overridden[static_cast<std::size_t>(l * cfg.num_heads + h)] != 0;
            for (std::size_t i = 0; i < seq; ++i) {
                double* row = rows.data() + i * (i + 1) / 2;
                if (uniform) {
                    const double u = 1.0 / static_cast<double>(i + 1);
                    for (std::size_t j = 0; j <= i; ++j) {
                        row[j] = u;
                    }
                } else {
                    for (std::size_t j = 0; j <= i; ++j) {
                        double acc = 0.0;
                        const double* qi = q.data() + i * d + off;
                        const double* kj = k.data() + j * d + off;
                        for (std::size_t c = 0; c < dh; ++c) {
                            acc += qi[c] * kj[c];
                        }
                        row[j] = acc * scale;
                    }
                    detail::softmax(std::span<double>(row, i + 1));
                }
                double* out = mix.data() + i * d + off;
                for (std::size_t c = 0; c < dh; ++c) {
                    out[c] = 0.0;
                }
                for (std::size_t j = 0; j <= i; ++j) {
                    const double a = row[j];
                    const double* vj = v.data() + j * d + off;
                    for (std::size_t c = 0; c < dh; ++c) {
                        out[c] += a * vj[c];
                    }
                }
            }
        }

        for (std::size_t i = 0; i < seq; ++i) {
            detail::matvec(wo, std::span<const double>(mix).subspan(i * d, d),
                           std::span<double>(attn_out), d, d);
            for (std::size_t c = 0; c < d; ++c) {
                x[i * d + c] += attn_out[c];
            }
            detail::rmsnorm(std::span<const double>(x).subspan(i * d, d),
                            std::span<double>(normed).subspan(i * d, d));
            detail::matvec(w_fc, std::span<const double>(normed).subspan(i * d, d),
                           std::span<double>(fc), mlp, d);
            for (std::size_t c = 0; c < mlp; ++c) {
                act[c] = detail::gelu(fc[c]);
            }
            detail::matvec(w_proj, std::span<const double>(act), std::span<double>(proj), d, mlp);
            for (std::size_t c = 0; c < d; ++c) {
                x[i * d + c] += proj[c];
            }
        }
    }

    const auto unemb = params.span(layout.unemb, vocab * d);
    for (std::size_t i = 0; i < seq; ++i) {
        detail::rmsnorm(std::span<const double>(x).subspan(i * d, d),
                        std::span<double>(normed).subspan(i * d, d));
        detail::matvec(unemb, std::span<const double>(normed).subspan(i * d, d),
                       std::span<double>(trace.logits).subspan(i * vocab, vocab), vocab, d);
    }

    if (!targets.empty()) {
        for (std::size_t i = 0; i < seq; ++i) {
            const bool on = loss_mask.empty() || loss_mask[i] != 0;
            trace.loss_mask[i] = on ? 1 : 0;
            if (on) {
                const auto row = trace.logits_at(i);
                const double lse = detail::logsumexp(row);
                trace.token_losses[i] = lse - row[static_cast<std::size_t>(targets[i])];
            }
        }
    }
    return trace;
}

}  // namespace air
