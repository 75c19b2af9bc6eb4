// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "air/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "air/errors.hpp"

namespace air {

using nlohmann::json;

void Sample::validate() const {
    auto fail = [this](const std::string& what) {
        throw ValidationError("sample '" + id + "': " + what);
    };
    if (id.empty()) {
        throw ValidationError("sample with empty id");
    }
    if (prompt_tokens.empty()) {
        fail("empty prompt");
    }
    if (output_tokens.empty()) {
        fail("empty output");
    }
    if (step_bounds.empty()) {
        fail("no step ranges");
    }
    for (const TokenRange& r : step_bounds) {
        if (r.begin >= r.end) {
            fail("empty step range");
        }
    }
    if (step_bounds.front().begin != 0) {
        fail("step ranges do not start at 0");
    }
    for (std::size_t i = 0; i + 1 < step_bounds.size(); ++i) {
        if (step_bounds[i + 1].begin < step_bounds[i].end) {
            fail("overlapping step ranges");
        }
        if (step_bounds[i + 1].begin > step_bounds[i].end) {
            fail("gap between step ranges");
        }
    }
    if (step_bounds.back().end != output_tokens.size()) {
        fail("step ranges do not cover the output");
    }
    if (needle.has_value()) {
        if (needle->begin >= needle->end || needle->end > prompt_tokens.size()) {
            fail("needle range outside the prompt");
        }
    }
}

// ---------------------------------------------------------------------------

Tokenization byte_tokenize(std::string_view text) {
    Tokenization tok;
    tok.tokens.reserve(text.size());
    tok.spans.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        tok.tokens.push_back(static_cast<TokenId>(static_cast<unsigned char>(text[i])));
        tok.spans.push_back({i, i + 1});
    }
    return tok;
}

std::vector<TokenRange> segment_steps(std::string_view text,
                                      std::span<const ByteSpan> token_spans) {
    // Spans must tile the text in order.
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < token_spans.size(); ++i) {
        if (token_spans[i].begin != cursor || token_spans[i].end < token_spans[i].begin ||
            token_spans[i].end > text.size()) {
            std::ostringstream oss;
            oss << "segment_steps: token span " << i << " does not cover the text monotonically";
            throw ValidationError(oss.str());
        }
        cursor = token_spans[i].end;
    }
    if (cursor != text.size()) {
        throw ValidationError("segment_steps: token spans do not cover the whole text");
    }

    const std::size_t n = token_spans.size();
    if (n == 0) {
        return {};
    }

    auto has_newline = [&](std::size_t t) {
        for (std::size_t b = token_spans[t].begin; b < token_spans[t].end; ++b) {
            if (text[b] == '\n') {
                return true;
            }
        }
        return false;
    };
    auto pure_delimiter = [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
            for (std::size_t b = token_spans[t].begin; b < token_spans[t].end; ++b) {
                if (text[b] != '\n') {
                    return false;
                }
            }
        }
        return true;
    };

    // Raw pass: a token containing the delimiter closes the current step.
    std::vector<TokenRange> raw;
    std::size_t start = 0;
    for (std::size_t t = 0; t < n; ++t) {
        if (has_newline(t)) {
            raw.push_back({start, t + 1});
            start = t + 1;
        }
    }
    if (start < n) {
        raw.push_back({start, n});
    }

    // Collapse pure-delimiter runs into a neighbouring step.
    std::vector<TokenRange> steps;
    std::optional<std::size_t> carry;
    for (const TokenRange& r : raw) {
        if (pure_delimiter(r.begin, r.end)) {
            if (!steps.empty()) {
                steps.back().end = r.end;
            } else if (!carry.has_value()) {
                carry = r.begin;
            }
            continue;
        }
        TokenRange s = r;
        if (carry.has_value()) {
            s.begin = *carry;
            carry.reset();
        }
        steps.push_back(s);
    }
    if (steps.empty()) {
        // Whole text is delimiters; keep a single step so every token is owned.
        steps.push_back({0, n});
    }
    return steps;
}

// ---------------------------------------------------------------------------

void CopyTaskConfig::validate() const {
    std::ostringstream oss;
    if (vocab_size < 4) {
        oss << "copy-task: vocab_size must be >= 4, got " << vocab_size;
        throw ValidationError(oss.str());
    }
    if (needle_len < 1 || needle_len >= context_len) {
        oss << "copy-task: needle_len must satisfy 1 <= needle_len < context_len";
        throw ValidationError(oss.str());
    }
    if (context_len < needle_len + 4) {
        oss << "copy-task: context_len " << context_len << " too small for needle_len "
            << needle_len << " plus delimiters and query cue";
        throw ValidationError(oss.str());
    }
    if (num_samples < 1) {
        oss << "copy-task: num_samples must be >= 1";
        throw ValidationError(oss.str());
    }
    const int content = vocab_size - kCopyContentBase;
    if (content < needle_len + 1) {
        oss << "copy-task: vocab_size " << vocab_size << " leaves only " << content
            << " content tokens; need needle_len + 1 = " << needle_len + 1;
        throw ValidationError(oss.str());
    }
}

namespace {

// Unbiased bounded sampler pinned to the mt19937_64 stream.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = n * (UINT64_MAX / n);
    std::uint64_t r = rng();
    while (r >= limit) {
        r = rng();
    }
    return r % n;
}

}  // namespace

std::vector<Sample> gen_copy_task(const CopyTaskConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);

    std::vector<TokenId> pool;
    for (int t = kCopyContentBase; t < config.vocab_size; ++t) {
        pool.push_back(static_cast<TokenId>(t));
    }

    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(config.num_samples));
    const std::size_t needle_len = static_cast<std::size_t>(config.needle_len);
    const std::size_t filler_total =
        static_cast<std::size_t>(config.context_len) - needle_len - 4;

    std::vector<TokenId> deck;
    for (int s = 0; s < config.num_samples; ++s) {
        // Distinct needle tokens via a partial shuffle of the content pool.
        deck = pool;
        for (std::size_t i = 0; i < needle_len; ++i) {
            const std::size_t j = i + bounded(rng, deck.size() - i);
            std::swap(deck[i], deck[j]);
        }
        std::vector<TokenId> needle(deck.begin(),
                                    deck.begin() + static_cast<std::ptrdiff_t>(needle_len));
        // Filler comes from the rest of the deck so a needle token appears
        // only inside the needle span and retrieval has a unique source.
        const std::span<const TokenId> filler_pool =
            std::span<const TokenId>(deck).subspan(needle_len);

        const std::size_t before = bounded(rng, filler_total + 1);
        const std::size_t after = filler_total - before;

        Sample sample;
        std::ostringstream id;
        id << "copy-";
        id.width(6);
        id.fill('0');
        id << s;
        sample.id = id.str();
        sample.category = "copy";
        sample.prompt_tokens.reserve(static_cast<std::size_t>(config.context_len));
        for (std::size_t i = 0; i < before; ++i) {
            sample.prompt_tokens.push_back(filler_pool[bounded(rng, filler_pool.size())]);
        }
        sample.prompt_tokens.push_back(kCopyOpen);
        const std::size_t needle_begin = sample.prompt_tokens.size();
        sample.prompt_tokens.insert(sample.prompt_tokens.end(), needle.begin(), needle.end());
        sample.prompt_tokens.push_back(kCopyClose);
        for (std::size_t i = 0; i < after; ++i) {
            sample.prompt_tokens.push_back(filler_pool[bounded(rng, filler_pool.size())]);
        }
        sample.prompt_tokens.push_back(kCopyQuery);
        sample.prompt_tokens.push_back(kCopyOpen);

        sample.needle = TokenRange{needle_begin, needle_begin + needle_len};
        sample.output_tokens = needle;
        sample.step_bounds = {TokenRange{0, needle_len}};
        sample.validate();
        samples.push_back(std::move(sample));
    }
    return samples;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<TokenId> parse_token_array(const json& value, const std::string& where) {
    std::vector<TokenId> tokens;
    tokens.reserve(value.size());
    for (const auto& item : value) {
        if (!item.is_number_integer() || item.get<std::int64_t>() < 0) {
            throw ValidationError(where + ": token ids must be nonnegative integers");
        }
        tokens.push_back(static_cast<TokenId>(item.get<std::int64_t>()));
    }
    return tokens;
}

Sample parse_sample(const json& record, const std::string& where) {
    if (!record.is_object()) {
        throw ValidationError(where + ": record is not a JSON object");
    }
    if (!record.contains("id") || !record["id"].is_string()) {
        throw ValidationError(where + ": missing string field \"id\"");
    }
    Sample sample;
    sample.id = record["id"].get<std::string>();
    if (record.contains("category")) {
        if (!record["category"].is_string()) {
            throw ValidationError(where + ": \"category\" must be a string");
        }
        sample.category = record["category"].get<std::string>();
    }
    if (!record.contains("prompt") || !record.contains("output")) {
        throw ValidationError(where + ": record needs \"prompt\" and \"output\"");
    }
    const json& prompt = record["prompt"];
    const json& output = record["output"];
    if (prompt.is_string() != output.is_string()) {
        throw ValidationError(where + ": prompt and output must both be text or both token arrays");
    }
    if (prompt.is_string()) {
        sample.has_text = true;
        sample.prompt_text = prompt.get<std::string>();
        sample.output_text = output.get<std::string>();
        sample.prompt_tokens = byte_tokenize(sample.prompt_text).tokens;
        sample.output_tokens = byte_tokenize(sample.output_text).tokens;
    } else if (prompt.is_array() && output.is_array()) {
        sample.prompt_tokens = parse_token_array(prompt, where + " prompt");
        sample.output_tokens = parse_token_array(output, where + " output");
    } else {
        throw ValidationError(where + ": prompt/output must be strings or token arrays");
    }

    if (record.contains("needle")) {
        const json& needle = record["needle"];
        if (!needle.is_array() || needle.size() != 2 || !needle[0].is_number_integer() ||
            !needle[1].is_number_integer()) {
            throw ValidationError(where + ": \"needle\" must be [start, end]");
        }
        const auto a = needle[0].get<std::int64_t>();
        const auto b = needle[1].get<std::int64_t>();
        if (a < 0 || b < a) {
            throw ValidationError(where + ": \"needle\" range is malformed");
        }
        sample.needle = TokenRange{static_cast<std::size_t>(a), static_cast<std::size_t>(b)};
    }

    if (record.contains("steps")) {
        const json& steps = record["steps"];
        if (!steps.is_array()) {
            throw ValidationError(where + ": \"steps\" must be an array of [start, end] pairs");
        }
        for (const auto& step : steps) {
            if (!step.is_array() || step.size() != 2 || !step[0].is_number_integer() ||
                !step[1].is_number_integer() || step[0].get<std::int64_t>() < 0 ||
                step[1].get<std::int64_t>() < step[0].get<std::int64_t>()) {
                throw ValidationError(where + ": \"steps\" must be an array of [start, end] pairs");
            }
            sample.step_bounds.push_back(
                TokenRange{static_cast<std::size_t>(step[0].get<std::int64_t>()),
                           static_cast<std::size_t>(step[1].get<std::int64_t>())});
        }
    } else if (sample.has_text) {
        const Tokenization tok = byte_tokenize(sample.output_text);
        sample.step_bounds = segment_steps(sample.output_text, tok.spans);
    } else if (!sample.output_tokens.empty()) {
        sample.step_bounds = {TokenRange{0, sample.output_tokens.size()}};
    }
    return sample;
}

}  // namespace

std::vector<Sample> read_corpus(std::istream& in, const std::string& source_name) {
    std::vector<Sample> samples;
    std::unordered_set<std::string> seen_ids;
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
            continue;  // reproducibility header
        }
        Sample sample = parse_sample(record, where.str());
        try {
            sample.validate();
        } catch (const ValidationError& err) {
            throw ValidationError(where.str() + ": " + err.what());
        }
        if (!seen_ids.insert(sample.id).second) {
            throw ValidationError(where.str() + ": duplicate id '" + sample.id + "'");
        }
        samples.push_back(std::move(sample));
    }
    return samples;
}

std::vector<Sample> read_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("corpus: cannot open " + path);
    }
    return read_corpus(in, path);
}

namespace {

json sample_to_json(const Sample& sample) {
    json record;
    record["id"] = sample.id;
    record["category"] = sample.category;
    if (sample.has_text) {
        record["prompt"] = sample.prompt_text;
        record["output"] = sample.output_text;
    } else {
        record["prompt"] = sample.prompt_tokens;
        record["output"] = sample.output_tokens;
    }
    if (sample.needle.has_value()) {
        record["needle"] = {sample.needle->begin, sample.needle->end};
    }
    json steps = json::array();
    for (const TokenRange& r : sample.step_bounds) {
        steps.push_back({r.begin, r.end});
    }
    record["steps"] = steps;
    return record;
}

}  // namespace

void write_corpus(std::span<const Sample> samples, std::ostream& out) {
    for (const Sample& sample : samples) {
        sample.validate();
        out << sample_to_json(sample).dump() << "\n";
    }
    if (!out) {
        throw RuntimeError("corpus: write failed");
    }
}

void write_corpus(std::span<const Sample> samples, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw RuntimeError("corpus: cannot open " + path + " for writing");
    }
    write_corpus(samples, out);
}

// ---------------------------------------------------------------------------

TeacherForced teacher_forced(const Sample& sample) {
    sample.validate();
    TeacherForced tf;
    tf.tokens.reserve(sample.prompt_tokens.size() + sample.output_tokens.size());
    tf.tokens.insert(tf.tokens.end(), sample.prompt_tokens.begin(), sample.prompt_tokens.end());
    tf.tokens.insert(tf.tokens.end(), sample.output_tokens.begin(), sample.output_tokens.end());
    const std::size_t total = tf.tokens.size();
    const std::size_t prompt_len = sample.prompt_tokens.size();
    tf.targets.assign(total, 0);
    tf.loss_mask.assign(total, 0);
    for (std::size_t i = 0; i + 1 < total; ++i) {
        tf.targets[i] = tf.tokens[i + 1];
        tf.loss_mask[i] = (i + 1 >= prompt_len) ? 1 : 0;
    }
    return tf;
}

std::size_t TeacherForced::output_position(const Sample& sample, std::size_t j) const {
    return sample.prompt_tokens.size() - 1 + j;
}

}  // namespace air
