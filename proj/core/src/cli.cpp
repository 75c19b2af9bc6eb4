// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pipeline driver. Every stage is resumable from files, writes a
// reproducibility header into its output, and is byte-reproducible for
// identical inputs and configuration.

#include "air/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "air/analytics.hpp"
#include "air/checkpoint.hpp"
#include "air/corpus.hpp"
#include "air/errors.hpp"
#include "air/head_detect.hpp"
#include "air/influence.hpp"
#include "air/pipeline.hpp"
#include "air/select.hpp"
#include "air/version.hpp"
#include "json_io.hpp"

namespace air {

namespace {

using nlohmann::json;

struct StageContext {
    PipelineConfig cfg;
    std::string model_path;
    std::string corpus_path;
    std::string heads_path;
    std::string scores_path;
    std::string manifest_path;
    std::string plans_path;
    std::string lexicons_dir;
    std::string corpus_out;
    std::string out_path;
};

json make_meta(const PipelineConfig& cfg, const char* stage) {
    json meta;
    meta["version"] = kVersion;
    meta["stage"] = stage;
    meta["config_hash"] = config_hash_hex(cfg);
    meta["seed"] = cfg.seed;
    meta["stage_seed"] = stage_seed(cfg.seed, stage);
    return meta;
}

std::string header_line(const PipelineConfig& cfg, const char* stage) {
    json doc;
    doc["_air"] = make_meta(cfg, stage);
    return doc.dump();
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw RuntimeError("cannot open " + path + " for writing");
    }
    return out;
}

void write_json_doc(const std::string& path, const json& doc) {
    std::ofstream out = open_output(path);
    out << doc.dump(2) << "\n";
    if (!out) {
        throw RuntimeError("write failed for " + path);
    }
}

// ---------------------------------------------------------------------------

void cmd_train_probe(StageContext& ctx) {
    PipelineConfig& cfg = ctx.cfg;
    std::vector<Sample> samples;
    if (!ctx.corpus_path.empty()) {
        samples = read_corpus(ctx.corpus_path);
    } else {
        CopyTaskConfig task;
        task.vocab_size = cfg.model.vocab_size;
        task.context_len = cfg.context_len;
        task.needle_len = cfg.needle_len;
        task.num_samples = cfg.num_samples;
        task.seed = stage_seed(cfg.seed, "copy-task");
        samples = gen_copy_task(task);
    }

    ModelConfig model_config = cfg.model;
    model_config.seed = static_cast<std::int64_t>(stage_seed(cfg.seed, "init-model"));
    Parameters params = init_model(model_config);

    FitOptions options;
    options.lr = cfg.lr;
    options.warmup_frac = cfg.warmup_frac;
    options.epochs = cfg.epochs;
    options.batch_size = cfg.batch_size;
    options.beta1 = cfg.beta1;
    options.beta2 = cfg.beta2;
    options.weight_decay = cfg.weight_decay;
    options.shuffle_seed = stage_seed(cfg.seed, "probe-shuffle");
    options.log = &std::cout;
    params = fit(params, samples, {}, options);

    const double accuracy = copy_accuracy(params, samples);
    std::cout << "copy accuracy: " << accuracy << " over " << samples.size() << " samples\n";

    save_checkpoint(params, ctx.out_path);
    if (!ctx.corpus_out.empty()) {
        std::ofstream out = open_output(ctx.corpus_out);
        out << header_line(cfg, "train-probe") << "\n";
        write_corpus(samples, out);
    }
}

void cmd_detect_heads(StageContext& ctx) {
    const Parameters params = load_checkpoint(ctx.model_path);
    const std::vector<Sample> samples = read_corpus(ctx.corpus_path);
    const HeadReport report = detect_heads(params, samples, ctx.cfg.delta);
    json doc = detail::head_report_to_json(report);
    doc["_air"] = make_meta(ctx.cfg, "detect-heads");
    write_json_doc(ctx.out_path, doc);
    std::cout << "scored " << report.heads.size() << " heads over " << report.samples_evaluated
              << " samples; " << report.critical_heads().size() << " critical\n";
}

void cmd_score(StageContext& ctx) {
    const Parameters params = load_checkpoint(ctx.model_path);
    const std::vector<Sample> samples = read_corpus(ctx.corpus_path);
    const HeadReport report = read_head_report(ctx.heads_path);
    const std::vector<HeadId> critical = report.critical_heads();
    const std::vector<InfluenceProfile> profiles =
        score_corpus(params, samples, critical, ctx.cfg.workers);
    std::ofstream out = open_output(ctx.out_path);
    out << header_line(ctx.cfg, "score") << "\n";
    write_scores(profiles, out);
    std::cout << "scored " << profiles.size() << " samples with " << critical.size()
              << " masked heads\n";
}

QuotaSpec resolve_quota(const std::string& spec, std::size_t budget,
                        std::span<const ScoreRecord> records) {
    if (spec.empty()) {
        std::vector<std::string> categories;
        categories.reserve(records.size());
        for (const ScoreRecord& r : records) {
            categories.push_back(r.category);
        }
        return quota_from_categories(categories, budget);
    }
    if (spec.front() == '@') {
        const std::vector<Sample> reference = read_corpus(spec.substr(1));
        std::vector<std::string> categories;
        categories.reserve(reference.size());
        for (const Sample& s : reference) {
            categories.push_back(s.category);
        }
        return quota_from_categories(categories, budget);
    }
    return parse_quota_string(spec, budget);
}

void cmd_select(StageContext& ctx) {
    if (ctx.cfg.budget == 0) {
        throw ValidationError("select: --budget must be a positive sample count");
    }
    const std::vector<ScoreRecord> records = read_scores(ctx.scores_path);
    const QuotaSpec quota = resolve_quota(ctx.cfg.quotas, ctx.cfg.budget, records);
    std::vector<ScoredSample> candidates;
    candidates.reserve(records.size());
    for (const ScoreRecord& r : records) {
        candidates.push_back(ScoredSample{r.id, r.category, r.sample_score});
    }
    const std::vector<SelectionEntry> selected = select_samples(candidates, quota);
    std::ofstream out = open_output(ctx.out_path);
    out << header_line(ctx.cfg, "select") << "\n";
    write_manifest(selected, out);
    std::cout << "selected " << selected.size() << " of " << candidates.size() << " samples\n";
}

void cmd_weight(StageContext& ctx) {
    const std::vector<ScoreRecord> records = read_scores(ctx.scores_path);
    const std::vector<Sample> corpus = read_corpus(ctx.corpus_path);
    std::map<std::string, const Sample*> by_id;
    for (const Sample& s : corpus) {
        by_id[s.id] = &s;
    }

    std::set<std::string> keep;
    const bool filtered = !ctx.manifest_path.empty();
    if (filtered) {
        for (const SelectionEntry& e : read_manifest(ctx.manifest_path)) {
            keep.insert(e.id);
        }
    }

    std::vector<PlanRecord> plans;
    std::set<std::string> scored_ids;
    for (const ScoreRecord& r : records) {
        scored_ids.insert(r.id);
        if (filtered && !keep.contains(r.id)) {
            continue;
        }
        const auto it = by_id.find(r.id);
        if (it == by_id.end()) {
            throw ValidationError("weight: scores reference unknown sample id '" + r.id + "'");
        }
        const Sample& sample = *it->second;
        std::vector<std::size_t> sizes;
        sizes.reserve(sample.step_bounds.size());
        for (const TokenRange& b : sample.step_bounds) {
            sizes.push_back(b.size());
        }
        if (r.step_scores.size() != sizes.size()) {
            std::ostringstream oss;
            oss << "weight: sample '" << r.id << "' has " << sizes.size() << " steps but "
                << r.step_scores.size() << " step scores";
            throw ValidationError(oss.str());
        }
        const WeightPlan plan =
            make_weight_plan(r.step_scores, sizes, ctx.cfg.p_percent, ctx.cfg.alpha);
        PlanRecord record;
        record.id = r.id;
        record.alpha = plan.alpha;
        record.p_percent = plan.p_percent;
        record.critical = plan.critical;
        record.step_weights = plan.step_weights;
        plans.push_back(std::move(record));
    }
    if (filtered) {
        for (const std::string& id : keep) {
            if (!scored_ids.contains(id)) {
                throw ValidationError("weight: manifest id '" + id + "' has no score record");
            }
        }
    }

    std::ofstream out = open_output(ctx.out_path);
    out << header_line(ctx.cfg, "weight") << "\n";
    write_plans(plans, out);
    std::cout << "wrote " << plans.size() << " weight plans\n";
}

void cmd_sft(StageContext& ctx) {
    const Parameters start = load_checkpoint(ctx.model_path);
    const std::vector<Sample> corpus = read_corpus(ctx.corpus_path);
    const std::vector<PlanRecord> plan_records = read_plans(ctx.plans_path);

    std::map<std::string, const Sample*> samples_by_id;
    for (const Sample& s : corpus) {
        samples_by_id[s.id] = &s;
    }
    std::map<std::string, const PlanRecord*> plans_by_id;
    for (const PlanRecord& p : plan_records) {
        plans_by_id[p.id] = &p;
    }

    std::vector<std::string> ids;
    if (!ctx.manifest_path.empty()) {
        for (const SelectionEntry& e : read_manifest(ctx.manifest_path)) {
            ids.push_back(e.id);
        }
        std::sort(ids.begin(), ids.end());
    } else {
        for (const PlanRecord& p : plan_records) {
            ids.push_back(p.id);
        }
        std::sort(ids.begin(), ids.end());
    }
    if (ids.empty()) {
        throw ValidationError("sft: no samples to train on");
    }

    std::vector<Sample> samples;
    std::vector<WeightPlan> plans;
    for (const std::string& id : ids) {
        const auto sit = samples_by_id.find(id);
        if (sit == samples_by_id.end()) {
            throw ValidationError("sft: sample '" + id + "' not found in the corpus");
        }
        const auto pit = plans_by_id.find(id);
        if (pit == plans_by_id.end()) {
            throw ValidationError("sft: sample '" + id + "' has no weight plan");
        }
        const Sample& sample = *sit->second;
        const PlanRecord& record = *pit->second;
        if (record.step_weights.size() != sample.step_bounds.size()) {
            std::ostringstream oss;
            oss << "sft: plan for '" << id << "' has " << record.step_weights.size()
                << " step weights but the sample has " << sample.step_bounds.size() << " steps";
            throw ValidationError(oss.str());
        }
        WeightPlan plan;
        plan.critical = record.critical;
        plan.alpha = record.alpha;
        plan.p_percent = record.p_percent;
        plan.step_weights = record.step_weights;
        plan.total_tokens = sample.output_tokens.size();
        double mass = 0.0;
        for (std::size_t k = 0; k < record.step_weights.size(); ++k) {
            const std::size_t size = sample.step_bounds[k].size();
            mass += static_cast<double>(size) * record.step_weights[k];
            for (std::size_t t = 0; t < size; ++t) {
                plan.token_weights.push_back(record.step_weights[k]);
            }
        }
        const double n = static_cast<double>(plan.total_tokens);
        if (std::abs(mass - n) > 1e-6 * n) {
            std::ostringstream oss;
            oss << "sft: plan for '" << id << "' is not normalized (weighted mass " << mass
                << " vs token count " << n << ")";
            throw ValidationError(oss.str());
        }
        samples.push_back(sample);
        plans.push_back(std::move(plan));
    }

    FitOptions options;
    options.lr = ctx.cfg.lr;
    options.warmup_frac = ctx.cfg.warmup_frac;
    options.epochs = ctx.cfg.epochs;
    options.batch_size = ctx.cfg.batch_size;
    options.beta1 = ctx.cfg.beta1;
    options.beta2 = ctx.cfg.beta2;
    options.weight_decay = ctx.cfg.weight_decay;
    options.shuffle_seed = stage_seed(ctx.cfg.seed, "sft-shuffle");
    options.log = &std::cout;
    const Parameters tuned = fit(start, samples, plans, options);
    save_checkpoint(tuned, ctx.out_path);
    std::cout << "fine-tuned on " << samples.size() << " samples\n";
}

void cmd_analyze(StageContext& ctx) {
    const std::vector<Sample> samples = read_corpus(ctx.corpus_path);
    const Lexicons lexicons =
        ctx.lexicons_dir.empty() ? Lexicons::builtin() : load_lexicons_dir(ctx.lexicons_dir);
    const CorpusStats stats = corpus_stats(samples, lexicons);
    const ResponseProfile profile = mean_response_profile(samples, lexicons);

    json doc;
    doc["_air"] = make_meta(ctx.cfg, "analyze");
    doc["samples"] = stats.samples;
    doc["boxed_samples"] = stats.boxed_samples;
    doc["avg_reasoning_steps"] = stats.avg_reasoning_steps;
    doc["prompt_constraint_density_percent"] = stats.prompt_constraint_density_percent;
    doc["numeric_answer_ratio_percent"] = stats.numeric_answer_ratio_percent;
    doc["symbolic_answer_ratio_percent"] = stats.symbolic_answer_ratio_percent;
    json response;
    response["causal_percent"] = profile.causal_percent;
    response["contrast_percent"] = profile.contrast_percent;
    response["correction_percent"] = profile.correction_percent;
    response["exploratory_percent"] = profile.exploratory_percent;
    response["planning_percent"] = profile.planning_percent;
    response["verification_percent"] = profile.verification_percent;
    response["symbolic_ratio_percent"] = profile.symbolic_ratio_percent;
    response["header_line_percent"] = profile.header_line_percent;
    response["list_line_percent"] = profile.list_line_percent;
    response["sentence_volatility_cv_percent"] = profile.sentence_volatility_cv_percent;
    doc["response"] = response;
    write_json_doc(ctx.out_path, doc);
    std::cout << "analyzed " << stats.samples << " samples\n";
}

void cmd_report(StageContext& ctx) {
    if (ctx.corpus_path.empty() && ctx.heads_path.empty() && ctx.scores_path.empty() &&
        ctx.manifest_path.empty() && ctx.plans_path.empty()) {
        throw ValidationError("report: give at least one of --corpus/--heads/--scores/"
                              "--manifest/--plans");
    }
    json aggregate;
    std::map<std::string, json> per_sample;

    if (!ctx.corpus_path.empty()) {
        const std::vector<Sample> samples = read_corpus(ctx.corpus_path);
        std::size_t prompt_tokens = 0;
        std::size_t output_tokens = 0;
        std::size_t steps = 0;
        for (const Sample& s : samples) {
            prompt_tokens += s.prompt_tokens.size();
            output_tokens += s.output_tokens.size();
            steps += s.step_bounds.size();
            json& entry = per_sample[s.id];
            entry["prompt_tokens"] = s.prompt_tokens.size();
            entry["output_tokens"] = s.output_tokens.size();
            entry["steps"] = s.step_bounds.size();
        }
        aggregate["corpus_samples"] = samples.size();
        aggregate["prompt_tokens_total"] = prompt_tokens;
        aggregate["output_tokens_total"] = output_tokens;
        aggregate["steps_total"] = steps;
    }
    if (!ctx.heads_path.empty()) {
        const HeadReport report = read_head_report(ctx.heads_path);
        aggregate["heads_total"] = report.heads.size();
        aggregate["heads_critical"] = report.critical_heads().size();
        aggregate["delta"] = report.delta;
        aggregate["head_samples_evaluated"] = report.samples_evaluated;
    }
    if (!ctx.scores_path.empty()) {
        const std::vector<ScoreRecord> records = read_scores(ctx.scores_path);
        std::size_t steps_scored = 0;
        for (const ScoreRecord& r : records) {
            steps_scored += r.step_scores.size();
            json& entry = per_sample[r.id];
            entry["scored"] = true;
            entry["sample_score"] = r.sample_score;
        }
        aggregate["samples_scored"] = records.size();
        aggregate["steps_scored_total"] = steps_scored;
    }
    if (!ctx.manifest_path.empty()) {
        const std::vector<SelectionEntry> entries = read_manifest(ctx.manifest_path);
        for (const SelectionEntry& e : entries) {
            per_sample[e.id]["selected"] = true;
        }
        aggregate["samples_selected"] = entries.size();
    }
    if (!ctx.plans_path.empty()) {
        const std::vector<PlanRecord> plans = read_plans(ctx.plans_path);
        std::size_t critical_total = 0;
        for (const PlanRecord& p : plans) {
            critical_total += p.critical.size();
            per_sample[p.id]["planned"] = true;
        }
        aggregate["plans_total"] = plans.size();
        aggregate["critical_steps_total"] = critical_total;
    }

    json doc;
    doc["_air"] = make_meta(ctx.cfg, "report");
    doc["aggregate"] = aggregate;
    json samples = json::array();
    for (const auto& [id, fields] : per_sample) {
        json entry = fields;
        entry["id"] = id;
        samples.push_back(entry);
    }
    doc["samples"] = samples;
    write_json_doc(ctx.out_path, doc);
    std::cout << "report written to " << ctx.out_path << "\n";
}

// ---------------------------------------------------------------------------

void add_config_option(CLI::App* sub) {
    sub->set_config("--config", "", "Flat key=value config file; flags win on conflict");
}

void add_seed_option(CLI::App* sub, StageContext& ctx) {
    sub->add_option("--seed", ctx.cfg.seed, "Root seed; every stage derives its own split")
        ->capture_default_str();
}

void add_model_options(CLI::App* sub, StageContext& ctx) {
    sub->add_option("--num-layers", ctx.cfg.model.num_layers)->capture_default_str();
    sub->add_option("--num-heads", ctx.cfg.model.num_heads)->capture_default_str();
    sub->add_option("--model-dim", ctx.cfg.model.model_dim)->capture_default_str();
    sub->add_option("--vocab-size", ctx.cfg.model.vocab_size)->capture_default_str();
    sub->add_option("--max-seq-len", ctx.cfg.model.max_seq_len)->capture_default_str();
}

void add_train_options(CLI::App* sub, StageContext& ctx) {
    sub->add_option("--lr", ctx.cfg.lr, "Base learning rate")->capture_default_str();
    sub->add_option("--warmup-frac", ctx.cfg.warmup_frac, "Linear warmup fraction")
        ->capture_default_str();
    sub->add_option("--epochs", ctx.cfg.epochs)->capture_default_str();
    sub->add_option("--batch-size", ctx.cfg.batch_size)->capture_default_str();
    sub->add_option("--beta1", ctx.cfg.beta1)->capture_default_str();
    sub->add_option("--beta2", ctx.cfg.beta2)->capture_default_str();
    sub->add_option("--weight-decay", ctx.cfg.weight_decay)->capture_default_str();
}

}  // namespace

int run_cli(std::vector<std::string> args) {
    StageContext ctx;
    CLI::App app{"attention-influence scoring and data selection pipeline"};
    app.name("air");
    app.require_subcommand(1);

    CLI::App* train_probe =
        app.add_subcommand("train-probe", "Fit the toy model on the synthetic copy task");
    add_config_option(train_probe);
    add_seed_option(train_probe, ctx);
    add_model_options(train_probe, ctx);
    add_train_options(train_probe, ctx);
    train_probe->add_option("--context-len", ctx.cfg.context_len, "Copy-task prompt length")
        ->capture_default_str();
    train_probe->add_option("--needle-len", ctx.cfg.needle_len)->capture_default_str();
    train_probe->add_option("--num-samples", ctx.cfg.num_samples)->capture_default_str();
    train_probe->add_option("--corpus", ctx.corpus_path,
                            "Train on this corpus instead of generating one");
    train_probe->add_option("--corpus-out", ctx.corpus_out,
                            "Write the generated training corpus here");
    train_probe->add_option("--out", ctx.out_path, "Checkpoint path")->required();
    train_probe->callback([&ctx]() { cmd_train_probe(ctx); });

    CLI::App* detect =
        app.add_subcommand("detect-heads", "Score retrieval heads and pick the critical set");
    add_config_option(detect);
    add_seed_option(detect, ctx);
    detect->add_option("--model", ctx.model_path, "AIRF checkpoint")->required();
    detect->add_option("--corpus", ctx.corpus_path, "Probe corpus with needle spans")
        ->required();
    detect->add_option("--delta", ctx.cfg.delta, "Critical head fraction")
        ->capture_default_str();
    detect->add_option("--out", ctx.out_path, "Head report JSON path")->required();
    detect->callback([&ctx]() { cmd_detect_heads(ctx); });

    CLI::App* score = app.add_subcommand(
        "score", "Token/step/sample influence scores against the weakened model");
    add_config_option(score);
    add_seed_option(score, ctx);
    score->add_option("--model", ctx.model_path)->required();
    score->add_option("--heads", ctx.heads_path, "Head report JSON")->required();
    score->add_option("--corpus", ctx.corpus_path)->required();
    score->add_option("--workers", ctx.cfg.workers, "Per-sample fan-out")
        ->envname("AIR_WORKERS")
        ->capture_default_str();
    score->add_option("--out", ctx.out_path, "Scores JSONL path")->required();
    score->callback([&ctx]() { cmd_score(ctx); });

    CLI::App* select = app.add_subcommand("select", "Quota-based top-V sample selection");
    add_config_option(select);
    add_seed_option(select, ctx);
    select->add_option("--scores", ctx.scores_path, "Scores JSONL")->required();
    select->add_option("--budget", ctx.cfg.budget, "Total samples to select (V)");
    select->add_option("--quotas", ctx.cfg.quotas,
                       "category=fraction[,...], @reference-corpus.jsonl, or empty to "
                       "derive from the scored pool");
    select->add_option("--out", ctx.out_path, "Manifest JSONL path")->required();
    select->callback([&ctx]() { cmd_select(ctx); });

    CLI::App* weight =
        app.add_subcommand("weight", "Critical-step selection and normalized step weights");
    add_config_option(weight);
    add_seed_option(weight, ctx);
    weight->add_option("--scores", ctx.scores_path)->required();
    weight->add_option("--corpus", ctx.corpus_path)->required();
    weight->add_option("--manifest", ctx.manifest_path, "Restrict to selected ids");
    weight->add_option("--p-percent", ctx.cfg.p_percent, "Critical step percentage")
        ->capture_default_str();
    weight->add_option("--alpha", ctx.cfg.alpha, "Weight amplification factor")
        ->capture_default_str();
    weight->add_option("--out", ctx.out_path, "Weight plan JSONL path")->required();
    weight->callback([&ctx]() { cmd_weight(ctx); });

    CLI::App* sft = app.add_subcommand("sft", "Step-weighted supervised fine-tuning");
    add_config_option(sft);
    add_seed_option(sft, ctx);
    add_train_options(sft, ctx);
    sft->add_option("--model", ctx.model_path)->required();
    sft->add_option("--corpus", ctx.corpus_path)->required();
    sft->add_option("--plans", ctx.plans_path, "Weight plan JSONL")->required();
    sft->add_option("--manifest", ctx.manifest_path, "Restrict to selected ids");
    sft->add_option("--out", ctx.out_path, "Tuned checkpoint path")->required();
    sft->callback([&ctx]() { cmd_sft(ctx); });

    CLI::App* analyze = app.add_subcommand("analyze", "Corpus and response text metrics");
    add_config_option(analyze);
    add_seed_option(analyze, ctx);
    analyze->add_option("--corpus", ctx.corpus_path)->required();
    analyze->add_option("--lexicons", ctx.lexicons_dir, "Directory of keyword lists");
    analyze->add_option("--out", ctx.out_path, "Stats JSON path")->required();
    analyze->callback([&ctx]() { cmd_analyze(ctx); });

    CLI::App* report =
        app.add_subcommand("report", "Aggregate wall-clock-independent pipeline counters");
    add_config_option(report);
    add_seed_option(report, ctx);
    report->add_option("--corpus", ctx.corpus_path);
    report->add_option("--heads", ctx.heads_path);
    report->add_option("--scores", ctx.scores_path);
    report->add_option("--manifest", ctx.manifest_path);
    report->add_option("--plans", ctx.plans_path);
    report->add_option("--out", ctx.out_path, "Report JSON path")->required();
    report->callback([&ctx]() { cmd_report(ctx); });

    try {
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::CallForAllHelp& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        app.exit(err);
        return 1;
    } catch (const ValidationError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace air
