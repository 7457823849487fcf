// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <CLI11.hpp>

#include <string>
#include <utility>
#include <vector>

namespace adapterforge::cli {

/// Plain `key = value` lines; '#' starts a comment. Throws CLI::ParseError
/// subclasses so malformed files count as usage errors.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

/// Fills options of `sub` not given on the command line from the file.
/// Keys are long option names (dashes or underscores); unknown keys are rejected.
void merge_config(CLI::App& sub, const std::vector<std::pair<std::string, std::string>>& entries);

/// Effective values of every option of `sub`, one `key = value` per line.
std::string resolved_config(const CLI::App& sub);

}  // namespace adapterforge::cli
