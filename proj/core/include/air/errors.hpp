// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace air {

/// Contract violation in inputs, configuration, or on-disk files.
/// The CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& message) : std::runtime_error(message) {}
};

/// Failure while running an otherwise well-formed request (I/O, numeric
/// blow-up). The CLI maps these to exit code 2.
class RuntimeError : public std::runtime_error {
public:
    explicit RuntimeError(const std::string& message) : std::runtime_error(message) {}
};

}  // namespace air
