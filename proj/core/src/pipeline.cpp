// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "air/pipeline.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "air/errors.hpp"
#include "air/forward.hpp"
#include "air/hash.hpp"
#include "air/train.hpp"

namespace air {

using nlohmann::json;

std::uint64_t stage_seed(std::uint64_t root_seed, std::string_view stage) {
    return mix64(root_seed ^ fnv1a64(stage));
}

std::string config_hash_hex(const PipelineConfig& config) {
    json doc;
    doc["num-layers"] = config.model.num_layers;
    doc["num-heads"] = config.model.num_heads;
    doc["model-dim"] = config.model.model_dim;
    doc["vocab-size"] = config.model.vocab_size;
    doc["max-seq-len"] = config.model.max_seq_len;
    doc["model-seed"] = config.model.seed;
    doc["delta"] = config.delta;
    doc["p-percent"] = config.p_percent;
    doc["alpha"] = config.alpha;
    doc["budget"] = config.budget;
    doc["quotas"] = config.quotas;
    doc["lr"] = config.lr;
    doc["warmup-frac"] = config.warmup_frac;
    doc["epochs"] = config.epochs;
    doc["batch-size"] = config.batch_size;
    doc["beta1"] = config.beta1;
    doc["beta2"] = config.beta2;
    doc["weight-decay"] = config.weight_decay;
    doc["context-len"] = config.context_len;
    doc["needle-len"] = config.needle_len;
    doc["num-samples"] = config.num_samples;
    doc["seed"] = config.seed;
    doc["workers"] = config.workers;
    return to_hex(fnv1a64(doc.dump()));
}

QuotaSpec parse_quota_string(const std::string& text, std::size_t total) {
    QuotaSpec quota;
    quota.total = total;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t comma = text.find(',', start);
        if (comma == std::string::npos) {
            comma = text.size();
        }
        const std::string pair = text.substr(start, comma - start);
        if (!pair.empty()) {
            std::size_t sep = pair.find('=');
            if (sep == std::string::npos) {
                sep = pair.find(':');
            }
            if (sep == std::string::npos || sep == 0) {
                throw ValidationError("quotas: malformed pair '" + pair +
                                      "' (expected category=fraction)");
            }
            const std::string category = pair.substr(0, sep);
            double fraction = 0.0;
            try {
                std::size_t consumed = 0;
                fraction = std::stod(pair.substr(sep + 1), &consumed);
                if (consumed != pair.size() - sep - 1) {
                    throw std::invalid_argument("trailing characters");
                }
            } catch (const std::exception&) {
                throw ValidationError("quotas: malformed fraction in '" + pair + "'");
            }
            if (quota.proportions.contains(category)) {
                throw ValidationError("quotas: duplicate category '" + category + "'");
            }
            quota.proportions[category] = fraction;
        }
        if (comma == text.size()) {
            break;
        }
        start = comma + 1;
    }
    quota.validate();
    return quota;
}

QuotaSpec quota_from_categories(std::span<const std::string> categories, std::size_t total) {
    if (categories.empty()) {
        throw ValidationError("quotas: no categories to derive proportions from");
    }
    std::map<std::string, std::size_t> counts;
    for (const std::string& c : categories) {
        counts[c] += 1;
    }
    QuotaSpec quota;
    quota.total = total;
    const double denom = static_cast<double>(categories.size());
    for (const auto& [category, count] : counts) {
        quota.proportions[category] = static_cast<double>(count) / denom;
    }
    quota.validate();
    return quota;
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = n * (UINT64_MAX / n);
    std::uint64_t r = rng();
    while (r >= limit) {
        r = rng();
    }
    return r % n;
}

struct PreparedSample {
    std::vector<TokenId> tokens;
    std::vector<TokenId> targets;
    std::vector<unsigned char> loss_mask;
    std::vector<double> weights;
};

PreparedSample prepare(const Sample& sample, const WeightPlan* plan) {
    PreparedSample prep;
    TeacherForced tf = teacher_forced(sample);
    prep.tokens = std::move(tf.tokens);
    prep.targets = std::move(tf.targets);
    prep.loss_mask = std::move(tf.loss_mask);
    prep.weights.assign(prep.tokens.size(), 0.0);
    const std::size_t prompt_len = sample.prompt_tokens.size();
    const std::size_t out_len = sample.output_tokens.size();
    if (plan != nullptr) {
        if (plan->token_weights.size() != out_len) {
            throw ValidationError("fit: weight plan for sample '" + sample.id +
                                  "' does not match its output length");
        }
        for (std::size_t j = 0; j < out_len; ++j) {
            prep.weights[prompt_len - 1 + j] = plan->token_weights[j];
        }
    } else {
        for (std::size_t j = 0; j < out_len; ++j) {
            prep.weights[prompt_len - 1 + j] = 1.0;
        }
    }
    return prep;
}

}  // namespace

Parameters fit(const Parameters& start, std::span<const Sample> samples,
               std::span<const WeightPlan> plans, const FitOptions& options) {
    if (samples.empty()) {
        throw ValidationError("fit: empty sample list");
    }
    if (!plans.empty() && plans.size() != samples.size()) {
        throw ValidationError("fit: plans must align one-per-sample");
    }
    if (options.epochs < 1 || options.batch_size < 1) {
        throw ValidationError("fit: epochs and batch_size must be >= 1");
    }

    std::vector<PreparedSample> prepared;
    prepared.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        prepared.push_back(prepare(samples[i], plans.empty() ? nullptr : &plans[i]));
    }

    const std::size_t n = samples.size();
    const std::size_t batch = static_cast<std::size_t>(options.batch_size);
    const std::int64_t steps_per_epoch = static_cast<std::int64_t>((n + batch - 1) / batch);

    TrainConfig train_config;
    train_config.base_lr = options.lr;
    train_config.warmup_frac = options.warmup_frac;
    train_config.total_steps = steps_per_epoch * options.epochs;
    train_config.beta1 = options.beta1;
    train_config.beta2 = options.beta2;
    train_config.weight_decay = options.weight_decay;

    Parameters params = start;
    TrainState state = init_train_state(params, train_config);
    std::mt19937_64 rng(options.shuffle_seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = bounded(rng, i);
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0;
        std::int64_t epoch_steps = 0;
        for (std::size_t begin = 0; begin < n; begin += batch) {
            const std::size_t end = std::min(n, begin + batch);
            std::vector<TrainSequence> sequences;
            sequences.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) {
                const PreparedSample& p = prepared[order[i]];
                sequences.push_back(TrainSequence{p.tokens, p.targets, p.loss_mask, p.weights});
            }
            TrainStepResult result = train_step(params, state, sequences);
            params = std::move(result.params);
            state = std::move(result.state);
            epoch_loss += result.loss;
            ++epoch_steps;
        }
        if (options.log != nullptr) {
            *options.log << "epoch " << (epoch + 1) << "/" << options.epochs
                         << " mean loss " << (epoch_loss / static_cast<double>(epoch_steps))
                         << "\n";
        }
    }
    return params;
}

double copy_accuracy(const Parameters& params, std::span<const Sample> samples) {
    if (samples.empty()) {
        throw ValidationError("copy_accuracy: empty sample list");
    }
    std::size_t correct = 0;
    std::size_t total = 0;
    for (const Sample& sample : samples) {
        const TeacherForced tf = teacher_forced(sample);
        const ForwardTrace trace = forward(params, tf.tokens, tf.targets, tf.loss_mask);
        for (std::size_t i = 0; i < trace.seq_len; ++i) {
            if (trace.loss_mask[i] == 0) {
                continue;
            }
            const auto logits = trace.logits_at(i);
            std::size_t best = 0;
            for (std::size_t t = 1; t < logits.size(); ++t) {
                if (logits[t] > logits[best]) {
                    best = t;
                }
            }
            correct += static_cast<std::size_t>(best) ==
                               static_cast<std::size_t>(tf.targets[i])
                           ? 1
                           : 0;
            ++total;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace air
