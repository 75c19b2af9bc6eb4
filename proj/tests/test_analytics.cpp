// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "air/analytics.hpp"
#include "air/errors.hpp"

using namespace air;

namespace {

Sample text_sample(const std::string& id, const std::string& prompt,
                   const std::string& output) {
    Sample s;
    s.id = id;
    s.has_text = true;
    s.prompt_text = prompt;
    s.output_text = output;
    s.prompt_tokens = byte_tokenize(prompt).tokens;
    s.output_tokens = byte_tokenize(output).tokens;
    const Tokenization tok = byte_tokenize(output);
    s.step_bounds = segment_steps(output, tok.spans);
    return s;
}

}  // namespace

TEST_CASE("reasoning step count follows newline-delimited lines") {
    CHECK(count_reasoning_steps("x\ny") == 2);
    CHECK(count_reasoning_steps("x") == 1);
    CHECK(count_reasoning_steps("x\n\n\ny") == 2);
    CHECK(count_reasoning_steps("\n\n") == 0);
    const std::vector<Sample> one{text_sample("a", "p", "x\ny")};
    CHECK(corpus_stats(one).avg_reasoning_steps == 2.0);
}

TEST_CASE("boxed answers classify as numeric or symbolic") {
    CHECK(classify_boxed_answer("result \\boxed{-3.14}") == AnswerKind::numeric);
    CHECK(classify_boxed_answer("result \\boxed{\\sqrt{2}}") == AnswerKind::symbolic);
    CHECK(classify_boxed_answer("result \\boxed{42}") == AnswerKind::numeric);
    CHECK(classify_boxed_answer("result \\boxed{007}") == AnswerKind::numeric);
    CHECK(classify_boxed_answer("result \\boxed{3.}") == AnswerKind::symbolic);
    CHECK(classify_boxed_answer("result \\boxed{1.2.3}") == AnswerKind::symbolic);
    CHECK(classify_boxed_answer("result \\boxed{x+1}") == AnswerKind::symbolic);
    CHECK(classify_boxed_answer("result \\boxed{}") == AnswerKind::symbolic);
    CHECK(classify_boxed_answer("no box here") == AnswerKind::none);

    // The last boxed span wins and nested braces stay balanced.
    CHECK(extract_last_boxed("\\boxed{12} and \\boxed{\\frac{1}{2}}") ==
          std::string("\\frac{1}{2}"));
    CHECK(!extract_last_boxed("\\boxed{unclosed").has_value());
}

TEST_CASE("keyword matching is whole-word, case-insensitive and phrase-aware") {
    const auto& lex = Lexicons::builtin();
    const KeywordMatches correction =
        count_keyword_matches("Wait, no. Let me check.", lex.correction);
    CHECK(correction.occurrences == 3);  // wait, no, let me check
    CHECK(correction.tokens == 5);
    const KeywordMatches verification =
        count_keyword_matches("Wait, no. Let me check.", lex.verification);
    CHECK(verification.occurrences == 1);  // check

    // "such that" counts once as a phrase; "notebook" must not match "no".
    const KeywordMatches constraints =
        count_keyword_matches("Given x such that the notebook works", lex.constraints);
    CHECK(constraints.occurrences == 2);
    const KeywordMatches none = count_keyword_matches("notebook", lex.correction);
    CHECK(none.occurrences == 0);
}

TEST_CASE("response profile: spec'd connective example") {
    const ResponseProfile p = response_profile("Wait, no. Let me check.");
    CHECK(p.correction_percent > 0.0);
    CHECK(p.verification_percent > 0.0);
    CHECK(p.correction_percent == 100.0);  // all five tokens belong to correction phrases
    CHECK(p.verification_percent == 20.0);
}

TEST_CASE("four sentences of exactly twenty characters give CV = 0") {
    const std::string sentence(20, 'a');
    const std::string text = sentence + ". " + sentence + ". " + sentence + ". " + sentence + ".";
    const ResponseProfile p = response_profile(text);
    CHECK(p.sentence_volatility_cv_percent == 0.0);
}

TEST_CASE("sentence volatility: hand-computed CV") {
    // Lengths 9 and 15: mean 12, population sigma 3, CV = 25 exactly.
    const ResponseProfile p = response_profile("abcdefghi. abcdefghijklmno.");
    CHECK(p.sentence_volatility_cv_percent == 25.0);
    // Fragments shorter than five characters are discarded.
    const ResponseProfile q = response_profile("ab. abcdefghi. abcdefghijklmno. cd!");
    CHECK(q.sentence_volatility_cv_percent == 25.0);
}

TEST_CASE("symbolic ratio counts characters strictly inside the delimiters") {
    CHECK(response_profile("$x+y$ ok").symbolic_ratio_percent == 37.5);  // 3 of 8
    CHECK(response_profile("no math at all").symbolic_ratio_percent == 0.0);
    const ResponseProfile display = response_profile("a \\[xy\\] b");
    CHECK(display.symbolic_ratio_percent == doctest::Approx(20.0));  // 2 of 10
    CHECK(response_profile("$unclosed").symbolic_ratio_percent == 0.0);
}

TEST_CASE("header and list lines over physical lines") {
    const std::string text = "# Head\n- item\n* item2\n1. third\n2.fourth\nplain\n";
    const ResponseProfile p = response_profile(text);
    CHECK(p.header_line_percent == doctest::Approx(100.0 / 6.0));
    CHECK(p.list_line_percent == 50.0);  // "-", "*", "1. "; "2.fourth" is not a list
}

TEST_CASE("connective densities ignore appended whitespace-only lines; line percents move") {
    const std::string text = "# plan\nTherefore x. However, wait: $y$ check.\n- step";
    const ResponseProfile before = response_profile(text);
    const ResponseProfile after = response_profile(text + "\n   \n\t\n");
    CHECK(before.causal_percent == after.causal_percent);
    CHECK(before.contrast_percent == after.contrast_percent);
    CHECK(before.correction_percent == after.correction_percent);
    CHECK(before.exploratory_percent == after.exploratory_percent);
    CHECK(before.planning_percent == after.planning_percent);
    CHECK(before.verification_percent == after.verification_percent);
    CHECK(before.sentence_volatility_cv_percent == after.sentence_volatility_cv_percent);
    CHECK(before.header_line_percent > after.header_line_percent);
    CHECK(before.list_line_percent > after.list_line_percent);
}

TEST_CASE("corpus stats: constraint density and answer ratios") {
    std::vector<Sample> samples;
    samples.push_back(text_sample("a", "Given x such that x works fine now",
                                  "line\n\\boxed{3}"));       // 2 hits / 8 words = 25%
    samples.push_back(text_sample("b", "just words here", "x\n\\boxed{-1.5}"));  // 0%
    samples.push_back(text_sample("c", "plain prompt text", "y\n\\boxed{\\pi}"));
    samples.push_back(text_sample("d", "no constraints", "z\nno box"));

    const CorpusStats stats = corpus_stats(samples);
    CHECK(stats.samples == 4);
    CHECK(stats.boxed_samples == 3);
    CHECK(stats.prompt_constraint_density_percent == doctest::Approx(25.0 / 4.0));
    CHECK(stats.numeric_answer_ratio_percent == doctest::Approx(200.0 / 3.0));
    CHECK(stats.symbolic_answer_ratio_percent == doctest::Approx(100.0 / 3.0));
    CHECK(stats.numeric_answer_ratio_percent + stats.symbolic_answer_ratio_percent ==
          doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("streaming and whole-corpus NAR/SAR agree exactly") {
    std::vector<Sample> samples;
    for (int i = 0; i < 17; ++i) {
        const bool numeric = i % 3 != 0;
        const bool boxed = i % 5 != 4;
        std::string output = "step one\nstep two";
        if (boxed) {
            output += numeric ? "\n\\boxed{41}" : "\n\\boxed{x^2}";
        }
        samples.push_back(text_sample("s" + std::to_string(i), "prompt words", output));
    }
    const CorpusStats whole = corpus_stats(samples);
    CorpusStatsAccumulator streaming;
    for (const Sample& s : samples) {
        streaming.add(s);
    }
    const CorpusStats incremental = streaming.finalize();
    CHECK(whole.numeric_answer_ratio_percent == incremental.numeric_answer_ratio_percent);
    CHECK(whole.symbolic_answer_ratio_percent == incremental.symbolic_answer_ratio_percent);
    CHECK(whole.avg_reasoning_steps == incremental.avg_reasoning_steps);
    CHECK(whole.prompt_constraint_density_percent ==
          incremental.prompt_constraint_density_percent);
}

TEST_CASE("token-form samples are rejected by corpus stats") {
    Sample s;
    s.id = "tok";
    s.prompt_tokens = {1, 2};
    s.output_tokens = {3};
    s.step_bounds = {{0, 1}};
    const std::vector<Sample> samples{s};
    CHECK_THROWS_AS(corpus_stats(samples), ValidationError);
}

TEST_CASE("lexicon files override the builtin lists") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "air_lexicon_test";
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "causal.txt");
        out << "# comment line\nergo\nbecause of this\n";
    }
    const Lexicons lex = load_lexicons_dir(dir.string());
    REQUIRE(lex.causal.size() == 2);
    CHECK(lex.causal[0] == "ergo");
    CHECK(lex.causal[1] == "because of this");
    CHECK(lex.contrast == Lexicons::builtin().contrast);  // untouched category

    const KeywordMatches m = count_keyword_matches("Ergo, it holds because of this.", lex.causal);
    CHECK(m.occurrences == 2);
    CHECK(m.tokens == 4);
    fs::remove_all(dir);

    CHECK_THROWS_AS(load_lexicon_file((dir / "missing.txt").string()), ValidationError);
}

TEST_CASE("empty text yields the all-zero profile") {
    const ResponseProfile p = response_profile("");
    CHECK(p.causal_percent == 0.0);
    CHECK(p.symbolic_ratio_percent == 0.0);
    CHECK(p.header_line_percent == 0.0);
    CHECK(p.sentence_volatility_cv_percent == 0.0);
}
