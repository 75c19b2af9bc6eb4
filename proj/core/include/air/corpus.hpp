// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "air/model.hpp"

namespace air {

/// Half-open token range [begin, end).
struct TokenRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool operator==(const TokenRange&) const = default;
};

/// One training record. `step_bounds` partitions output_tokens into the
/// ordered reasoning steps; `needle` marks the span of the prompt the output
/// is supposed to be copied from (used by head detection only).
struct Sample {
    std::string id;
    std::string category = "default";
    std::vector<TokenId> prompt_tokens;
    std::vector<TokenId> output_tokens;
    std::vector<TokenRange> step_bounds;
    std::optional<TokenRange> needle;

    bool has_text = false;
    std::string prompt_text;
    std::string output_text;

    /// Partition / needle invariants; throws ValidationError naming the id.
    void validate() const;
};

// ---------------------------------------------------------------------------
// Byte-level tokenization (ids 0..255 are the raw bytes).

struct ByteSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
};

inline constexpr int kByteVocabSize = 256;

struct Tokenization {
    std::vector<TokenId> tokens;
    std::vector<ByteSpan> spans;
};

Tokenization byte_tokenize(std::string_view text);

/// Newline-delimited step segmentation over an arbitrary tokenization.
/// A token whose span contains a newline closes the current step; runs of
/// pure-delimiter tokens collapse into a neighbouring step so no step is
/// ever empty of content unless the whole text is delimiters.
std::vector<TokenRange> segment_steps(std::string_view text,
                                      std::span<const ByteSpan> token_spans);

// ---------------------------------------------------------------------------
// Synthetic copy task: random filler, a delimited needle, and a trailing
// query cue; the output repeats the needle verbatim, so solving the task
// requires retrieving it from the context.

inline constexpr TokenId kCopyOpen = 0;   // also the final query cue
inline constexpr TokenId kCopyClose = 1;
inline constexpr TokenId kCopyQuery = 2;
inline constexpr TokenId kCopyContentBase = 3;

struct CopyTaskConfig {
    int vocab_size = 64;
    int context_len = 32;
    int needle_len = 8;
    int num_samples = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

std::vector<Sample> gen_copy_task(const CopyTaskConfig& config);

// ---------------------------------------------------------------------------
// Corpus JSONL. One record per line:
//   {"id": str, "category": str, "prompt": str | [int], "output": str | [int],
//    "needle": [start, end] optional, "steps": [[start, end], ...] optional}
// Text prompts/outputs are byte-tokenized on read; steps are recomputed from
// newlines when absent (token-form records default to a single step).

std::vector<Sample> read_corpus(std::istream& in, const std::string& source_name);
std::vector<Sample> read_corpus(const std::string& path);

void write_corpus(std::span<const Sample> samples, std::ostream& out);
void write_corpus(std::span<const Sample> samples, const std::string& path);

/// Token sequence, per-position targets and output-only loss mask for a
/// teacher-forced pass over prompt + output. Position i predicts token i+1;
/// exactly the output tokens carry losses.
struct TeacherForced {
    std::vector<TokenId> tokens;
    std::vector<TokenId> targets;
    std::vector<unsigned char> loss_mask;

    /// Query position whose loss corresponds to output token j.
    std::size_t output_position(const Sample& sample, std::size_t j) const;
};

TeacherForced teacher_forced(const Sample& sample);

}  // namespace air
