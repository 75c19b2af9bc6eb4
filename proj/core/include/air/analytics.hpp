// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Corpus and response text metrics: reasoning-step counts, constraint
// density, boxed-answer classification, connective densities, symbolic
// ratio, structural line counts and sentence-length volatility.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "air/corpus.hpp"

namespace air {

/// Keyword lists; each entry is a lowercase word or multi-word phrase.
struct Lexicons {
    std::vector<std::string> causal;
    std::vector<std::string> contrast;
    std::vector<std::string> correction;
    std::vector<std::string> exploratory;
    std::vector<std::string> planning;
    std::vector<std::string> verification;
    std::vector<std::string> constraints;

    static const Lexicons& builtin();
};

/// One keyword per line, UTF-8; '#' lines and blank lines are skipped.
std::vector<std::string> load_lexicon_file(const std::string& path);

/// Loads <dir>/{causal,contrast,correction,exploratory,planning,
/// verification,constraints}.txt; categories without a file keep the
/// builtin list.
Lexicons load_lexicons_dir(const std::string& dir);

// ---------------------------------------------------------------------------

struct KeywordMatches {
    std::size_t occurrences = 0;  // phrase matches
    std::size_t tokens = 0;       // words consumed by those matches
};

/// Case-insensitive whole-word phrase matching over whitespace tokens
/// (surrounding punctuation stripped); matches within the list are
/// non-overlapping, longest phrase first.
KeywordMatches count_keyword_matches(std::string_view text,
                                     std::span<const std::string> keywords);

/// Number of newline-delimited lines with at least one character
/// (maximal runs of non-newline characters).
std::size_t count_reasoning_steps(std::string_view text);

enum class AnswerKind { numeric, symbolic, none };

/// Content of the last \boxed{...} span, if any (balanced braces).
std::optional<std::string> extract_last_boxed(std::string_view text);

/// numeric iff the boxed content fully matches -?digits(.digits)?; symbolic
/// for any other boxed content; none without a boxed span.
AnswerKind classify_boxed_answer(std::string_view text);

// ---------------------------------------------------------------------------

struct CorpusStats {
    std::size_t samples = 0;
    std::size_t boxed_samples = 0;  // classifiable for NAR/SAR
    double avg_reasoning_steps = 0.0;
    double prompt_constraint_density_percent = 0.0;  // mean of per-sample densities
    double numeric_answer_ratio_percent = 0.0;
    double symbolic_answer_ratio_percent = 0.0;
};

/// Streaming accumulator; corpus_stats() is one pass over this, so the
/// streaming and whole-corpus routes agree exactly.
class CorpusStatsAccumulator {
public:
    explicit CorpusStatsAccumulator(const Lexicons& lexicons = Lexicons::builtin());

    /// Requires a text sample; throws ValidationError otherwise.
    void add(const Sample& sample);
    CorpusStats finalize() const;

private:
    const Lexicons& lexicons_;
    std::size_t samples_ = 0;
    std::size_t steps_sum_ = 0;
    double density_sum_ = 0.0;
    std::size_t numeric_ = 0;
    std::size_t symbolic_ = 0;
};

CorpusStats corpus_stats(std::span<const Sample> samples,
                         const Lexicons& lexicons = Lexicons::builtin());

// ---------------------------------------------------------------------------

struct ResponseProfile {
    double causal_percent = 0.0;
    double contrast_percent = 0.0;
    double correction_percent = 0.0;
    double exploratory_percent = 0.0;
    double planning_percent = 0.0;
    double verification_percent = 0.0;
    double symbolic_ratio_percent = 0.0;   // chars strictly inside $...$ / \[...\]
    double header_line_percent = 0.0;      // lines starting with '#'
    double list_line_percent = 0.0;        // lines starting with -, * or "1."
    double sentence_volatility_cv_percent = 0.0;  // 100 * sigma / mu
};

ResponseProfile response_profile(std::string_view text,
                                 const Lexicons& lexicons = Lexicons::builtin());

/// Unweighted mean of per-sample profiles (text samples only).
ResponseProfile mean_response_profile(std::span<const Sample> samples,
                                      const Lexicons& lexicons = Lexicons::builtin());

}  // namespace air
