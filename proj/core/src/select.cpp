// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "air/select.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "air/errors.hpp"

namespace air {

using nlohmann::json;

void QuotaSpec::validate() const {
    if (total == 0) {
        throw ValidationError("quota: total V must be positive");
    }
    if (proportions.empty()) {
        throw ValidationError("quota: no category proportions");
    }
    double sum = 0.0;
    for (const auto& [category, fraction] : proportions) {
        if (!(fraction >= 0.0) || !(fraction <= 1.0)) {
            throw ValidationError("quota: proportion for '" + category +
                                  "' outside [0, 1]");
        }
        sum += fraction;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        std::ostringstream oss;
        oss << "quota: proportions sum to " << sum << ", expected 1";
        throw ValidationError(oss.str());
    }
}

std::map<std::string, std::size_t> apportion_quotas(const QuotaSpec& quota) {
    quota.validate();
    std::map<std::string, std::size_t> quotas;
    std::vector<std::pair<double, std::string>> remainders;  // (remainder, category)
    std::size_t assigned = 0;
    for (const auto& [category, fraction] : quota.proportions) {
        const double exact = fraction * static_cast<double>(quota.total);
        const double base = std::floor(exact);
        quotas[category] = static_cast<std::size_t>(base);
        assigned += static_cast<std::size_t>(base);
        remainders.emplace_back(exact - base, category);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) {
            return a.first > b.first;
        }
        return a.second < b.second;
    });
    std::size_t leftover = quota.total - assigned;
    for (std::size_t i = 0; i < remainders.size() && leftover > 0; ++i, --leftover) {
        quotas[remainders[i].second] += 1;
    }
    return quotas;
}

std::vector<SelectionEntry> select_samples(std::span<const ScoredSample> candidates,
                                           const QuotaSpec& quota) {
    const std::map<std::string, std::size_t> quotas = apportion_quotas(quota);

    std::map<std::string, std::vector<const ScoredSample*>> by_category;
    for (const ScoredSample& c : candidates) {
        by_category[c.category].push_back(&c);
    }

    std::vector<SelectionEntry> selected;
    for (const auto& [category, want] : quotas) {
        if (want == 0) {
            continue;
        }
        auto it = by_category.find(category);
        const std::size_t have = it == by_category.end() ? 0 : it->second.size();
        if (have < want) {
            std::ostringstream oss;
            oss << "infeasible quota: category '" << category << "' has " << have
                << " candidates, quota is " << want;
            throw ValidationError(oss.str());
        }
        std::vector<const ScoredSample*>& pool = it->second;
        std::sort(pool.begin(), pool.end(), [](const ScoredSample* a, const ScoredSample* b) {
            if (a->sample_score != b->sample_score) {
                return a->sample_score > b->sample_score;
            }
            return a->id < b->id;
        });
        for (std::size_t rank = 0; rank < want; ++rank) {
            selected.push_back(SelectionEntry{pool[rank]->id, category, rank + 1});
        }
    }
    std::sort(selected.begin(), selected.end(),
              [](const SelectionEntry& a, const SelectionEntry& b) { return a.id < b.id; });
    return selected;
}

std::vector<std::size_t> critical_steps(std::span<const double> step_scores,
                                        double p_percent) {
    if (step_scores.empty()) {
        throw ValidationError("critical_steps: need at least one step");
    }
    if (!(p_percent > 0.0) || p_percent > 100.0) {
        std::ostringstream oss;
        oss << "critical_steps: p_percent must lie in (0, 100], got " << p_percent;
        throw ValidationError(oss.str());
    }
    const std::size_t k = step_scores.size();
    const double exact = p_percent / 100.0 * static_cast<double>(k);
    const std::size_t count =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(exact + 0.5)));

    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (step_scores[a] != step_scores[b]) {
            return step_scores[a] > step_scores[b];
        }
        return a < b;
    });
    std::vector<std::size_t> chosen(order.begin(),
                                    order.begin() + static_cast<std::ptrdiff_t>(
                                                        std::min(count, k)));
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

WeightPlan step_weights(std::span<const std::size_t> critical, double alpha,
                        std::span<const std::size_t> step_sizes, std::size_t total_tokens) {
    if (!(alpha >= 1.0)) {
        std::ostringstream oss;
        oss << "step_weights: alpha must be >= 1, got " << alpha;
        throw ValidationError(oss.str());
    }
    if (step_sizes.empty()) {
        throw ValidationError("step_weights: no steps");
    }
    std::size_t size_sum = 0;
    for (std::size_t s : step_sizes) {
        if (s == 0) {
            throw ValidationError("step_weights: empty step");
        }
        size_sum += s;
    }
    if (size_sum != total_tokens) {
        std::ostringstream oss;
        oss << "step_weights: step sizes sum to " << size_sum << ", expected N = "
            << total_tokens;
        throw ValidationError(oss.str());
    }
    const std::size_t k = step_sizes.size();
    std::vector<unsigned char> is_critical(k, 0);
    for (std::size_t c : critical) {
        if (c >= k) {
            throw ValidationError("step_weights: critical step index out of range");
        }
        is_critical[c] = 1;
    }

    WeightPlan plan;
    plan.critical.assign(critical.begin(), critical.end());
    std::sort(plan.critical.begin(), plan.critical.end());
    plan.alpha = alpha;
    plan.total_tokens = total_tokens;
    plan.raw_weights.resize(k);
    double mass = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        plan.raw_weights[i] = 1.0 + (alpha - 1.0) * (is_critical[i] != 0 ? 1.0 : 0.0);
        mass += static_cast<double>(step_sizes[i]) * plan.raw_weights[i];
    }
    const double scale = static_cast<double>(total_tokens) / mass;
    plan.step_weights.resize(k);
    plan.token_weights.reserve(total_tokens);
    for (std::size_t i = 0; i < k; ++i) {
        plan.step_weights[i] = plan.raw_weights[i] * scale;
        for (std::size_t t = 0; t < step_sizes[i]; ++t) {
            plan.token_weights.push_back(plan.step_weights[i]);
        }
    }
    return plan;
}

WeightPlan make_weight_plan(std::span<const double> step_scores,
                            std::span<const std::size_t> step_sizes, double p_percent,
                            double alpha) {
    if (step_scores.size() != step_sizes.size()) {
        throw ValidationError("make_weight_plan: step_scores/step_sizes length mismatch");
    }
    std::size_t total = 0;
    for (std::size_t s : step_sizes) {
        total += s;
    }
    const std::vector<std::size_t> chosen = critical_steps(step_scores, p_percent);
    WeightPlan plan = step_weights(chosen, alpha, step_sizes, total);
    plan.p_percent = p_percent;
    return plan;
}

double weighted_sft_loss(std::span<const double> token_losses, const WeightPlan& plan) {
    if (token_losses.size() != plan.token_weights.size() ||
        token_losses.size() != plan.total_tokens) {
        throw ValidationError("weighted_sft_loss: losses do not align with the plan");
    }
    double sum = 0.0;
    for (std::size_t t = 0; t < token_losses.size(); ++t) {
        sum += plan.token_weights[t] * token_losses[t];
    }
    return sum / static_cast<double>(plan.total_tokens);
}

// ---------------------------------------------------------------------------

void write_manifest(std::span<const SelectionEntry> entries, std::ostream& out) {
    std::vector<const SelectionEntry*> sorted;
    for (const SelectionEntry& e : entries) {
        sorted.push_back(&e);
    }
    std::sort(sorted.begin(), sorted.end(),
              [](const SelectionEntry* a, const SelectionEntry* b) { return a->id < b->id; });
    for (const SelectionEntry* e : sorted) {
        json record;
        record["id"] = e->id;
        record["category"] = e->category;
        record["rank_in_category"] = e->rank_in_category;
        out << record.dump() << "\n";
    }
    if (!out) {
        throw RuntimeError("manifest: write failed");
    }
}

void write_manifest(std::span<const SelectionEntry> entries, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw RuntimeError("manifest: cannot open " + path + " for writing");
    }
    write_manifest(entries, out);
}

std::vector<SelectionEntry> read_manifest(std::istream& in, const std::string& source_name) {
    std::vector<SelectionEntry> entries;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::ostringstream where;
        where << source_name << ":" << line_no;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& err) {
            throw ValidationError(where.str() + ": malformed line: " + err.what());
        }
        if (record.is_object() && record.contains("_air")) {
            continue;
        }
        if (!record.is_object() || !record.contains("id")) {
            throw ValidationError(where.str() + ": manifest records need an id");
        }
        SelectionEntry e;
        e.id = record["id"].get<std::string>();
        e.category = record.value("category", std::string("default"));
        e.rank_in_category = record.value("rank_in_category", std::size_t{0});
        if (!seen.insert(e.id).second) {
            throw ValidationError(where.str() + ": duplicate id '" + e.id + "'");
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<SelectionEntry> read_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("manifest: cannot open " + path);
    }
    return read_manifest(in, path);
}

void write_plans(std::span<const PlanRecord> plans, std::ostream& out) {
    std::vector<const PlanRecord*> sorted;
    for (const PlanRecord& p : plans) {
        sorted.push_back(&p);
    }
    std::sort(sorted.begin(), sorted.end(),
              [](const PlanRecord* a, const PlanRecord* b) { return a->id < b->id; });
    for (const PlanRecord* p : sorted) {
        json record;
        record["id"] = p->id;
        record["alpha"] = p->alpha;
        record["p_percent"] = p->p_percent;
        record["critical_steps"] = p->critical;
        record["step_weights"] = p->step_weights;
        out << record.dump() << "\n";
    }
    if (!out) {
        throw RuntimeError("plans: write failed");
    }
}

void write_plans(std::span<const PlanRecord> plans, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw RuntimeError("plans: cannot open " + path + " for writing");
    }
    write_plans(plans, out);
}

std::vector<PlanRecord> read_plans(std::istream& in, const std::string& source_name) {
    std::vector<PlanRecord> plans;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::ostringstream where;
        where << source_name << ":" << line_no;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& err) {
            throw ValidationError(where.str() + ": malformed line: " + err.what());
        }
        if (record.is_object() && record.contains("_air")) {
            continue;
        }
        if (!record.is_object() || !record.contains("id") ||
            !record.contains("step_weights") || !record["step_weights"].is_array()) {
            throw ValidationError(where.str() + ": plan records need id and step_weights");
        }
        PlanRecord p;
        p.id = record["id"].get<std::string>();
        p.alpha = record.value("alpha", 1.0);
        p.p_percent = record.value("p_percent", 0.0);
        if (record.contains("critical_steps")) {
            for (const auto& c : record["critical_steps"]) {
                p.critical.push_back(c.get<std::size_t>());
            }
        }
        for (const auto& w : record["step_weights"]) {
            const double weight = w.get<double>();
            if (!std::isfinite(weight) || weight < 0.0) {
                throw ValidationError(where.str() + ": invalid step weight for '" + p.id + "'");
            }
            p.step_weights.push_back(weight);
        }
        if (p.step_weights.empty()) {
            throw ValidationError(where.str() + ": empty step_weights for '" + p.id + "'");
        }
        if (!seen.insert(p.id).second) {
            throw ValidationError(where.str() + ": duplicate id '" + p.id + "'");
        }
        plans.push_back(std::move(p));
    }
    return plans;
}

std::vector<PlanRecord> read_plans(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("plans: cannot open " + path);
    }
    return read_plans(in, path);
}

}  // namespace air
