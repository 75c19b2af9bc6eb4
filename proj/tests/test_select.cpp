// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "air/errors.hpp"
#include "air/select.hpp"

using namespace air;

namespace {

// Independent largest-remainder + full-sort selection used as the oracle.
std::vector<std::string> brute_force_select(std::vector<ScoredSample> pool,
                                            const QuotaSpec& quota) {
    std::map<std::string, long> quotas;
    std::vector<std::pair<double, std::string>> rem;
    long assigned = 0;
    for (const auto& [cat, frac] : quota.proportions) {
        const double exact = frac * static_cast<double>(quota.total);
        quotas[cat] = static_cast<long>(std::floor(exact));
        assigned += quotas[cat];
        rem.emplace_back(exact - std::floor(exact), cat);
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (long left = static_cast<long>(quota.total) - assigned; left > 0; --left) {
        quotas[rem[static_cast<std::size_t>(static_cast<long>(quota.total) - assigned - left)]
                   .second] += 1;
    }

    std::vector<std::string> picked;
    for (const auto& [cat, count] : quotas) {
        std::vector<ScoredSample> members;
        for (const ScoredSample& s : pool) {
            if (s.category == cat) {
                members.push_back(s);
            }
        }
        std::sort(members.begin(), members.end(), [](const auto& a, const auto& b) {
            return a.sample_score != b.sample_score ? a.sample_score > b.sample_score
                                                    : a.id < b.id;
        });
        for (long i = 0; i < count; ++i) {
            picked.push_back(members[static_cast<std::size_t>(i)].id);
        }
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

std::vector<std::size_t> brute_force_steps(const std::vector<double>& scores, double p) {
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
    });
    const double exact = p / 100.0 * static_cast<double>(scores.size());
    const std::size_t count =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(exact + 0.5)));
    std::vector<std::size_t> chosen(order.begin(),
                                    order.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

}  // namespace

TEST_CASE("largest-remainder apportionment") {
    QuotaSpec quota;
    quota.total = 10;
    quota.proportions = {{"math", 0.7}, {"sci", 0.3}};
    const auto quotas = apportion_quotas(quota);
    CHECK(quotas.at("math") == 7);
    CHECK(quotas.at("sci") == 3);

    QuotaSpec thirds;
    thirds.total = 10;
    thirds.proportions = {{"a", 1.0 / 3.0}, {"b", 1.0 / 3.0}, {"c", 1.0 / 3.0}};
    const auto q3 = apportion_quotas(thirds);
    CHECK(q3.at("a") + q3.at("b") + q3.at("c") == 10);
    CHECK(q3.at("a") == 4);  // remainder tie broken by category name
    CHECK(q3.at("b") == 3);
    CHECK(q3.at("c") == 3);

    QuotaSpec bad;
    bad.total = 10;
    bad.proportions = {{"a", 0.5}, {"b", 0.6}};
    CHECK_THROWS_AS(apportion_quotas(bad), ValidationError);
}

TEST_CASE("single category degenerates to global top-V") {
    std::vector<ScoredSample> pool;
    for (int i = 0; i < 10; ++i) {
        pool.push_back({"id-" + std::to_string(i), "only", static_cast<double>(i)});
    }
    QuotaSpec quota;
    quota.total = 3;
    quota.proportions = {{"only", 1.0}};
    const auto selected = select_samples(pool, quota);
    REQUIRE(selected.size() == 3);
    CHECK(selected[0].id == "id-7");
    CHECK(selected[1].id == "id-8");
    CHECK(selected[2].id == "id-9");
    CHECK(selected[2].rank_in_category >= 1);
}

TEST_CASE("equal scores at the cut select the lexicographically smaller id") {
    std::vector<ScoredSample> pool{
        {"idb", "c", 1.0}, {"ida", "c", 1.0}, {"idc", "c", 2.0}};
    QuotaSpec quota;
    quota.total = 2;
    quota.proportions = {{"c", 1.0}};
    const auto selected = select_samples(pool, quota);
    REQUIRE(selected.size() == 2);
    CHECK(selected[0].id == "ida");
    CHECK(selected[1].id == "idc");
}

TEST_CASE("underfull categories are an infeasible-quota error") {
    std::vector<ScoredSample> pool{{"a", "math", 1.0}};
    QuotaSpec quota;
    quota.total = 3;
    quota.proportions = {{"math", 0.5}, {"sci", 0.5}};
    CHECK_THROWS_WITH_AS(select_samples(pool, quota), doctest::Contains("infeasible"),
                         ValidationError);
}

TEST_CASE("critical_steps: counts, order and errors") {
    std::vector<double> ten(10, 0.0);
    for (std::size_t i = 0; i < 10; ++i) {
        ten[i] = static_cast<double>(i);
    }
    CHECK(critical_steps(ten, 20.0).size() == 2);

    const std::vector<double> spec_case{5, 1, 4, 2, 3, 0, 9, 8, 7, 6};
    CHECK(critical_steps(spec_case, 20.0) == std::vector<std::size_t>{6, 7});

    const std::vector<double> three{0.1, 0.9, 0.5};
    CHECK(critical_steps(three, 20.0) == std::vector<std::size_t>{1});  // max(1, round(0.6))

    const std::vector<double> tied{1.0, 1.0, 0.0, 1.0};
    CHECK(critical_steps(tied, 50.0) == std::vector<std::size_t>{0, 1});

    CHECK(critical_steps(ten, 100.0).size() == 10);
    CHECK_THROWS_AS(critical_steps(ten, 0.0), ValidationError);
    CHECK_THROWS_AS(critical_steps(ten, 100.5), ValidationError);
    CHECK_THROWS_AS(critical_steps(std::vector<double>{}, 20.0), ValidationError);
}

TEST_CASE("step_weights: amplification and normalization") {
    const std::vector<std::size_t> critical{0};
    const std::vector<std::size_t> sizes{3, 7};
    const WeightPlan plan = step_weights(critical, 2.0, sizes, 10);
    CHECK(plan.raw_weights == std::vector<double>{2.0, 1.0});
    CHECK(plan.step_weights[0] == doctest::Approx(20.0 / 13.0).epsilon(1e-15));
    CHECK(plan.step_weights[1] == doctest::Approx(10.0 / 13.0).epsilon(1e-15));
    const double mass = 3.0 * plan.step_weights[0] + 7.0 * plan.step_weights[1];
    CHECK(std::abs(mass - 10.0) < 1e-9);
    REQUIRE(plan.token_weights.size() == 10);
    CHECK(plan.token_weights[0] == plan.step_weights[0]);
    CHECK(plan.token_weights[9] == plan.step_weights[1]);

    // alpha = 1 collapses to exact unit weights.
    const WeightPlan unit = step_weights({}, 1.0, sizes, 10);
    for (double w : unit.step_weights) {
        CHECK(w == 1.0);
    }

    // A single step cancels any alpha.
    const std::vector<std::size_t> one{4};
    const std::vector<std::size_t> first{0};
    const WeightPlan single = step_weights(first, 7.0, one, 4);
    CHECK(single.step_weights[0] == doctest::Approx(1.0).epsilon(1e-12));

    const std::vector<std::size_t> oob{5};
    CHECK_THROWS_AS(step_weights(first, 0.5, sizes, 10), ValidationError);
    CHECK_THROWS_AS(step_weights(first, 2.0, sizes, 11), ValidationError);
    CHECK_THROWS_AS(step_weights(oob, 2.0, sizes, 10), ValidationError);
}

TEST_CASE("weighted_sft_loss: hand-checked values") {
    const std::vector<std::size_t> sizes{3, 7};
    const std::vector<std::size_t> first{0};
    const WeightPlan plan = step_weights(first, 2.0, sizes, 10);

    std::vector<double> losses{1, 1, 1, 2, 2, 2, 2, 2, 2, 2};
    CHECK(weighted_sft_loss(losses, plan) == doctest::Approx(20.0 / 13.0).epsilon(1e-12));

    const WeightPlan uniform = step_weights({}, 1.0, sizes, 10);
    double mean = 0.0;
    for (double l : losses) {
        mean += l;
    }
    mean /= 10.0;
    CHECK(weighted_sft_loss(losses, uniform) == doctest::Approx(mean).epsilon(1e-15));

    const std::vector<double> constant(10, 3.25);
    CHECK(weighted_sft_loss(constant, plan) == doctest::Approx(3.25).epsilon(1e-12));

    const std::vector<double> short_losses(9, 1.0);
    CHECK_THROWS_AS(weighted_sft_loss(short_losses, plan), ValidationError);
}

TEST_CASE("normalization identity holds over 1000 randomized plans") {
    std::mt19937_64 rng(71);
    for (int iter = 0; iter < 1000; ++iter) {
        const std::size_t k = 1 + rng() % 50;
        std::vector<std::size_t> sizes(k);
        std::size_t total = 0;
        for (auto& s : sizes) {
            s = 1 + rng() % 9;
            total += s;
        }
        std::vector<double> scores(k);
        for (auto& s : scores) {
            s = static_cast<double>(static_cast<std::int64_t>(rng() % 4001) - 2000) / 500.0;
        }
        const double p = static_cast<double>(1 + rng() % 1000) / 10.0;  // (0, 100]
        const double alpha = 1.0 + static_cast<double>(rng() % 9000) / 1000.0;
        const WeightPlan plan = make_weight_plan(scores, sizes, p, alpha);
        double mass = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            mass += static_cast<double>(sizes[i]) * plan.step_weights[i];
        }
        CHECK(std::abs(mass - static_cast<double>(total)) < 1e-9);
    }
}

TEST_CASE("raising alpha moves weight toward the critical set") {
    const std::vector<std::size_t> sizes{2, 3, 5, 2};
    const std::vector<std::size_t> critical{1, 3};
    const WeightPlan low = step_weights(critical, 1.5, sizes, 12);
    const WeightPlan high = step_weights(critical, 4.0, sizes, 12);
    CHECK(high.step_weights[1] > low.step_weights[1]);
    CHECK(high.step_weights[3] > low.step_weights[3]);
    CHECK(high.step_weights[0] < low.step_weights[0]);
    CHECK(high.step_weights[2] < low.step_weights[2]);
}

TEST_CASE("quota selection matches the brute-force oracle on 1000 instances") {
    std::mt19937_64 rng(73);
    for (int iter = 0; iter < 1000; ++iter) {
        const int categories = 1 + static_cast<int>(rng() % 4);
        QuotaSpec quota;
        std::vector<double> weights(static_cast<std::size_t>(categories));
        double sum = 0.0;
        for (auto& w : weights) {
            w = 0.05 + static_cast<double>(rng() % 100) / 100.0;
            sum += w;
        }
        for (int c = 0; c < categories; ++c) {
            quota.proportions["cat" + std::to_string(c)] =
                weights[static_cast<std::size_t>(c)] / sum;
        }
        quota.total = 1 + rng() % 30;

        const auto quotas = apportion_quotas(quota);
        std::vector<ScoredSample> pool;
        for (const auto& [cat, count] : quotas) {
            const std::size_t extra = rng() % 5;
            for (std::size_t i = 0; i < count + extra; ++i) {
                ScoredSample s;
                s.id = cat + "-" + std::to_string(100 + i);
                s.category = cat;
                s.sample_score = static_cast<double>(rng() % 8) / 4.0;  // ties likely
                pool.push_back(s);
            }
        }

        const auto selected = select_samples(pool, quota);
        std::vector<std::string> got;
        for (const auto& e : selected) {
            got.push_back(e.id);
        }
        CHECK(got == brute_force_select(pool, quota));

        // Permutation invariance.
        std::vector<ScoredSample> shuffled = pool;
        for (std::size_t i = shuffled.size(); i > 1; --i) {
            std::swap(shuffled[i - 1], shuffled[rng() % i]);
        }
        const auto reselected = select_samples(shuffled, quota);
        std::vector<std::string> again;
        for (const auto& e : reselected) {
            again.push_back(e.id);
        }
        CHECK(got == again);
    }
}

TEST_CASE("critical-step selection matches a full-sort oracle on 1000 instances") {
    std::mt19937_64 rng(79);
    for (int iter = 0; iter < 1000; ++iter) {
        const std::size_t k = 1 + rng() % 50;
        std::vector<double> scores(k);
        for (auto& s : scores) {
            s = static_cast<double>(rng() % 12) / 3.0;  // ties likely
        }
        const double p = static_cast<double>(1 + rng() % 1000) / 10.0;
        CHECK(critical_steps(scores, p) == brute_force_steps(scores, p));
    }
}

TEST_CASE("critical-step selection is equivariant under permutation of distinct scores") {
    std::mt19937_64 rng(83);
    for (int iter = 0; iter < 200; ++iter) {
        const std::size_t k = 2 + rng() % 20;
        std::vector<double> scores(k);
        for (std::size_t i = 0; i < k; ++i) {
            scores[i] = static_cast<double>(i) + static_cast<double>(rng() % 100) / 1000.0;
        }
        std::vector<std::size_t> perm(k);
        for (std::size_t i = 0; i < k; ++i) {
            perm[i] = i;
        }
        for (std::size_t i = k; i > 1; --i) {
            std::swap(perm[i - 1], perm[rng() % i]);
        }
        std::vector<double> permuted(k);
        for (std::size_t i = 0; i < k; ++i) {
            permuted[i] = scores[perm[i]];
        }
        const double p = static_cast<double>(1 + rng() % 1000) / 10.0;

        const auto base = critical_steps(scores, p);
        const auto moved = critical_steps(permuted, p);
        std::vector<std::size_t> mapped;
        for (std::size_t idx : moved) {
            mapped.push_back(perm[idx]);
        }
        std::sort(mapped.begin(), mapped.end());
        CHECK(mapped == base);
    }
}

TEST_CASE("manifest and plan JSONL round-trips") {
    const std::vector<SelectionEntry> entries{{"b", "math", 2}, {"a", "sci", 1}};
    std::ostringstream manifest_out;
    write_manifest(entries, manifest_out);
    std::istringstream manifest_in(manifest_out.str());
    const auto loaded = read_manifest(manifest_in, "<test>");
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].id == "a");  // writer sorts by id
    CHECK(loaded[1].id == "b");
    CHECK(loaded[1].rank_in_category == 2);

    std::vector<PlanRecord> plans;
    PlanRecord p;
    p.id = "a";
    p.alpha = 2.0;
    p.p_percent = 20.0;
    p.critical = {0, 2};
    p.step_weights = {1.25, 0.75, 1.25};
    plans.push_back(p);
    std::ostringstream plans_out;
    write_plans(plans, plans_out);
    std::istringstream plans_in(plans_out.str());
    const auto plans_loaded = read_plans(plans_in, "<test>");
    REQUIRE(plans_loaded.size() == 1);
    CHECK(plans_loaded[0].id == "a");
    CHECK(plans_loaded[0].alpha == 2.0);
    CHECK(plans_loaded[0].critical == std::vector<std::size_t>{0, 2});
    CHECK(plans_loaded[0].step_weights == p.step_weights);

    std::istringstream bad_plan("{\"id\":\"x\",\"step_weights\":[-1.0]}\n");
    CHECK_THROWS_AS(read_plans(bad_plan, "p.jsonl"), ValidationError);
}
