// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Internal JSON builders shared between the module serializers and the CLI
// (which injects the reproducibility header before writing).

#pragma once

#include <nlohmann/json.hpp>

#include "air/head_detect.hpp"

namespace air::detail {

nlohmann::json head_report_to_json(const HeadReport& report);

}  // namespace air::detail
