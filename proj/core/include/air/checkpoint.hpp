// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>

#include "air/model.hpp"

namespace air {

/// Versioned binary parameter container. Layout, all little-endian:
///   magic "AIRF" | u32 format version | config block | f64 tensor data
/// with the config block holding num_layers, num_heads, model_dim,
/// vocab_size, max_seq_len (i32 each), the init seed (i64) and the
/// parameter version counter (u64). Tensor data follows in declared
/// layout order. Byte output is a pure function of the Parameters value.
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

void save_checkpoint(const Parameters& params, std::ostream& out);
void save_checkpoint(const Parameters& params, const std::string& path);

Parameters load_checkpoint(std::istream& in, const std::string& source_name = "<stream>");
Parameters load_checkpoint(const std::string& path);

}  // namespace air
