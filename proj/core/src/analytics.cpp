// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "air/analytics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "air/errors.hpp"

namespace air {

namespace {

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

std::string normalize_word(std::string_view raw) {
    std::size_t begin = 0;
    std::size_t end = raw.size();
    while (begin < end && !is_word_char(raw[begin])) {
        ++begin;
    }
    while (end > begin && !is_word_char(raw[end - 1])) {
        --end;
    }
    std::string out(raw.substr(begin, end - begin));
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) {
            ++i;
        }
        const std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) {
            ++i;
        }
        if (i > start) {
            words.emplace_back(text.substr(start, i - start));
        }
    }
    return words;
}

std::vector<std::vector<std::string>> split_phrases(std::span<const std::string> keywords) {
    std::vector<std::vector<std::string>> phrases;
    for (const std::string& kw : keywords) {
        std::vector<std::string> words;
        for (const std::string& w : split_whitespace(kw)) {
            words.push_back(normalize_word(w));
        }
        if (!words.empty()) {
            phrases.push_back(std::move(words));
        }
    }
    std::sort(phrases.begin(), phrases.end(),
              [](const auto& a, const auto& b) { return a.size() > b.size(); });
    return phrases;
}

}  // namespace

const Lexicons& Lexicons::builtin() {
    static const Lexicons lex{
        {"therefore", "thus", "hence", "consequently", "because", "since"},
        {"however", "but", "yet", "nevertheless", "nonetheless", "on the other hand",
         "conversely"},
        {"wait", "no", "hold on", "hang on", "actually", "mistake", "error", "incorrect",
         "wrong", "let me check"},
        {"alternatively", "maybe", "perhaps", "possibly", "another way", "approach", "try"},
        {"let me", "let us", "let's", "i need to", "we need to", "goal", "target"},
        {"check", "verify", "ensure", "confirm", "valid", "satisfies", "correctly"},
        {"given", "assume", "such that", "satisfy", "where"},
    };
    return lex;
}

std::vector<std::string> load_lexicon_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("lexicon: cannot open " + path);
    }
    std::vector<std::string> keywords;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line[0] == '#') {
            continue;
        }
        keywords.push_back(line);
    }
    return keywords;
}

Lexicons load_lexicons_dir(const std::string& dir) {
    Lexicons lex = Lexicons::builtin();
    auto try_load = [&dir](const char* name, std::vector<std::string>& target) {
        const std::string path = dir + "/" + name + ".txt";
        std::ifstream probe(path);
        if (probe.good()) {
            target = load_lexicon_file(path);
        }
    };
    try_load("causal", lex.causal);
    try_load("contrast", lex.contrast);
    try_load("correction", lex.correction);
    try_load("exploratory", lex.exploratory);
    try_load("planning", lex.planning);
    try_load("verification", lex.verification);
    try_load("constraints", lex.constraints);
    return lex;
}

KeywordMatches count_keyword_matches(std::string_view text,
                                     std::span<const std::string> keywords) {
    const std::vector<std::string> raw_words = split_whitespace(text);
    std::vector<std::string> words;
    words.reserve(raw_words.size());
    for (const std::string& w : raw_words) {
        words.push_back(normalize_word(w));
    }
    const std::vector<std::vector<std::string>> phrases = split_phrases(keywords);

    KeywordMatches matches;
    std::size_t i = 0;
    while (i < words.size()) {
        bool matched = false;
        for (const auto& phrase : phrases) {
            if (i + phrase.size() > words.size()) {
                continue;
            }
            bool equal = true;
            for (std::size_t j = 0; j < phrase.size(); ++j) {
                if (words[i + j] != phrase[j]) {
                    equal = false;
                    break;
                }
            }
            if (equal) {
                matches.occurrences += 1;
                matches.tokens += phrase.size();
                i += phrase.size();
                matched = true;
                break;
            }
        }
        if (!matched) {
            ++i;
        }
    }
    return matches;
}

std::size_t count_reasoning_steps(std::string_view text) {
    std::size_t runs = 0;
    bool in_run = false;
    for (char c : text) {
        if (c == '\n') {
            in_run = false;
        } else if (!in_run) {
            in_run = true;
            ++runs;
        }
    }
    return runs;
}

std::optional<std::string> extract_last_boxed(std::string_view text) {
    constexpr std::string_view kBoxed = "\\boxed{";
    const std::size_t at = text.rfind(kBoxed);
    if (at == std::string_view::npos) {
        return std::nullopt;
    }
    std::size_t depth = 1;
    const std::size_t content_begin = at + kBoxed.size();
    for (std::size_t i = content_begin; i < text.size(); ++i) {
        if (text[i] == '{') {
            ++depth;
        } else if (text[i] == '}') {
            --depth;
            if (depth == 0) {
                return std::string(text.substr(content_begin, i - content_begin));
            }
        }
    }
    return std::nullopt;  // unbalanced
}

AnswerKind classify_boxed_answer(std::string_view text) {
    const std::optional<std::string> boxed = extract_last_boxed(text);
    if (!boxed.has_value()) {
        return AnswerKind::none;
    }
    // -?digits(.digits)? anchored over the whole content.
    std::string_view s = *boxed;
    if (!s.empty() && s.front() == '-') {
        s.remove_prefix(1);
    }
    if (s.empty()) {
        return AnswerKind::symbolic;
    }
    std::size_t i = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
        ++i;
    }
    if (i == 0) {
        return AnswerKind::symbolic;
    }
    if (i == s.size()) {
        return AnswerKind::numeric;
    }
    if (s[i] != '.') {
        return AnswerKind::symbolic;
    }
    ++i;
    if (i == s.size()) {
        return AnswerKind::symbolic;  // trailing dot is not a decimal
    }
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
        ++i;
    }
    return i == s.size() ? AnswerKind::numeric : AnswerKind::symbolic;
}

// ---------------------------------------------------------------------------

CorpusStatsAccumulator::CorpusStatsAccumulator(const Lexicons& lexicons)
    : lexicons_(lexicons) {}

void CorpusStatsAccumulator::add(const Sample& sample) {
    if (!sample.has_text) {
        throw ValidationError("corpus_stats: sample '" + sample.id +
                              "' carries no text prompt/output");
    }
    samples_ += 1;
    steps_sum_ += count_reasoning_steps(sample.output_text);

    const std::size_t words = split_whitespace(sample.prompt_text).size();
    if (words > 0) {
        const KeywordMatches hits =
            count_keyword_matches(sample.prompt_text, lexicons_.constraints);
        density_sum_ += 100.0 * static_cast<double>(hits.occurrences) /
                        static_cast<double>(words);
    }

    switch (classify_boxed_answer(sample.output_text)) {
        case AnswerKind::numeric:
            numeric_ += 1;
            break;
        case AnswerKind::symbolic:
            symbolic_ += 1;
            break;
        case AnswerKind::none:
            break;
    }
}

CorpusStats CorpusStatsAccumulator::finalize() const {
    CorpusStats stats;
    stats.samples = samples_;
    stats.boxed_samples = numeric_ + symbolic_;
    if (samples_ > 0) {
        stats.avg_reasoning_steps =
            static_cast<double>(steps_sum_) / static_cast<double>(samples_);
        stats.prompt_constraint_density_percent =
            density_sum_ / static_cast<double>(samples_);
    }
    if (stats.boxed_samples > 0) {
        stats.numeric_answer_ratio_percent =
            100.0 * static_cast<double>(numeric_) / static_cast<double>(stats.boxed_samples);
        stats.symbolic_answer_ratio_percent =
            100.0 * static_cast<double>(symbolic_) / static_cast<double>(stats.boxed_samples);
    }
    return stats;
}

CorpusStats corpus_stats(std::span<const Sample> samples, const Lexicons& lexicons) {
    CorpusStatsAccumulator acc(lexicons);
    for (const Sample& s : samples) {
        acc.add(s);
    }
    return acc.finalize();
}

// ---------------------------------------------------------------------------

namespace {

double symbolic_ratio_percent(std::string_view text) {
    if (text.empty()) {
        return 0.0;
    }
    std::size_t inside = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '$') {
            const std::size_t close = text.find('$', i + 1);
            if (close == std::string_view::npos) {
                break;
            }
            inside += close - i - 1;  // delimiters excluded
            i = close + 1;
        } else if (text[i] == '\\' && i + 1 < text.size() && text[i + 1] == '[') {
            const std::size_t close = text.find("\\]", i + 2);
            if (close == std::string_view::npos) {
                break;
            }
            inside += close - (i + 2);
            i = close + 2;
        } else {
            ++i;
        }
    }
    return 100.0 * static_cast<double>(inside) / static_cast<double>(text.size());
}

std::vector<std::string_view> physical_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= text.size(); ++i) {
        if (i == text.size() || text[i] == '\n') {
            lines.push_back(text.substr(start, i - start));
            start = i + 1;
        }
    }
    // "a\nb\n" is two lines: a trailing newline terminates the last line
    // rather than opening an empty one.
    if (!text.empty() && text.back() == '\n') {
        lines.pop_back();
    }
    if (text.empty()) {
        lines.clear();
    }
    return lines;
}

std::string_view strip_leading_blanks(std::string_view line) {
    std::size_t i = 0;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) {
        ++i;
    }
    return line.substr(i);
}

bool is_header_line(std::string_view line) {
    const std::string_view s = strip_leading_blanks(line);
    return !s.empty() && s.front() == '#';
}

bool is_list_line(std::string_view line) {
    const std::string_view s = strip_leading_blanks(line);
    if (s.empty()) {
        return false;
    }
    if (s.front() == '-' || s.front() == '*') {
        return s.size() == 1 || s[1] == ' ';
    }
    std::size_t i = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
        ++i;
    }
    if (i == 0 || i >= s.size() || s[i] != '.') {
        return false;
    }
    return i + 1 == s.size() || s[i + 1] == ' ';
}

double sentence_volatility_cv(std::string_view text) {
    // Flatten, split on sentence punctuation, drop fragments < 5 chars.
    std::vector<std::size_t> lengths;
    std::string fragment;
    auto close_fragment = [&]() {
        std::size_t begin = 0;
        std::size_t end = fragment.size();
        while (begin < end && std::isspace(static_cast<unsigned char>(fragment[begin]))) {
            ++begin;
        }
        while (end > begin && std::isspace(static_cast<unsigned char>(fragment[end - 1]))) {
            --end;
        }
        const std::size_t len = end - begin;
        if (len >= 5) {
            lengths.push_back(len);
        }
        fragment.clear();
    };
    for (char c : text) {
        if (c == '.' || c == '!' || c == '?') {
            close_fragment();
        } else {
            fragment.push_back(c == '\n' ? ' ' : c);
        }
    }
    close_fragment();

    if (lengths.empty()) {
        return 0.0;
    }
    double mean = 0.0;
    for (std::size_t l : lengths) {
        mean += static_cast<double>(l);
    }
    mean /= static_cast<double>(lengths.size());
    if (mean == 0.0) {
        return 0.0;
    }
    double variance = 0.0;
    for (std::size_t l : lengths) {
        const double dev = static_cast<double>(l) - mean;
        variance += dev * dev;
    }
    variance /= static_cast<double>(lengths.size());
    return 100.0 * std::sqrt(variance) / mean;
}

}  // namespace

ResponseProfile response_profile(std::string_view text, const Lexicons& lexicons) {
    ResponseProfile profile;
    if (text.empty()) {
        return profile;
    }
    const std::size_t total_tokens = split_whitespace(text).size();
    if (total_tokens > 0) {
        const double denom = static_cast<double>(total_tokens);
        auto density = [&](std::span<const std::string> keywords) {
            return 100.0 * static_cast<double>(count_keyword_matches(text, keywords).tokens) /
                   denom;
        };
        profile.causal_percent = density(lexicons.causal);
        profile.contrast_percent = density(lexicons.contrast);
        profile.correction_percent = density(lexicons.correction);
        profile.exploratory_percent = density(lexicons.exploratory);
        profile.planning_percent = density(lexicons.planning);
        profile.verification_percent = density(lexicons.verification);
    }
    profile.symbolic_ratio_percent = symbolic_ratio_percent(text);

    const std::vector<std::string_view> lines = physical_lines(text);
    if (!lines.empty()) {
        std::size_t headers = 0;
        std::size_t lists = 0;
        for (std::string_view line : lines) {
            headers += is_header_line(line) ? 1 : 0;
            lists += is_list_line(line) ? 1 : 0;
        }
        profile.header_line_percent =
            100.0 * static_cast<double>(headers) / static_cast<double>(lines.size());
        profile.list_line_percent =
            100.0 * static_cast<double>(lists) / static_cast<double>(lines.size());
    }
    profile.sentence_volatility_cv_percent = sentence_volatility_cv(text);
    return profile;
}

ResponseProfile mean_response_profile(std::span<const Sample> samples,
                                      const Lexicons& lexicons) {
    ResponseProfile mean;
    std::size_t counted = 0;
    for (const Sample& sample : samples) {
        if (!sample.has_text) {
            throw ValidationError("response profile: sample '" + sample.id +
                                  "' carries no text output");
        }
        const ResponseProfile p = response_profile(sample.output_text, lexicons);
        mean.causal_percent += p.causal_percent;
        mean.contrast_percent += p.contrast_percent;
        mean.correction_percent += p.correction_percent;
        mean.exploratory_percent += p.exploratory_percent;
        mean.planning_percent += p.planning_percent;
        mean.verification_percent += p.verification_percent;
        mean.symbolic_ratio_percent += p.symbolic_ratio_percent;
        mean.header_line_percent += p.header_line_percent;
        mean.list_line_percent += p.list_line_percent;
        mean.sentence_volatility_cv_percent += p.sentence_volatility_cv_percent;
        ++counted;
    }
    if (counted == 0) {
        return mean;
    }
    const double inv = 1.0 / static_cast<double>(counted);
    mean.causal_percent *= inv;
    mean.contrast_percent *= inv;
    mean.correction_percent *= inv;
    mean.exploratory_percent *= inv;
    mean.planning_percent *= inv;
    mean.verification_percent *= inv;
    mean.symbolic_ratio_percent *= inv;
    mean.header_line_percent *= inv;
    mean.list_line_percent *= inv;
    mean.sentence_volatility_cv_percent *= inv;
    return mean;
}

}  // namespace air
