// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace adapterforge {

enum class ErrorKind {
  kDimension,
  kDegenerateStatistics,
  kState,
  kConfiguration,
  kUnsupportedFusion,
  kInput,
  kDegenerateHistogram,
  kGeneration,
  kIncompatibleModel,
  kCorruption,
  kVersion,
  kFormat,
  kDivergence,
  kIo,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace adapterforge
