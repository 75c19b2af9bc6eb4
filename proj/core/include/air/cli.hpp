// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace air {

/// Runs one pipeline subcommand (train-probe, detect-heads, score, select,
/// weight, sft, analyze, report). `args` excludes the program name.
/// Returns 0 on success, 1 on validation errors, 2 on runtime errors.
int run_cli(std::vector<std::string> args);

}  // namespace air
