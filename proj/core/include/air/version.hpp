// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace air {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace air
