// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adapterforge/error.hpp"

namespace adapterforge {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension error";
    case ErrorKind::kDegenerateStatistics: return "degenerate statistics";
    case ErrorKind::kState: return "state error";
    case ErrorKind::kConfiguration: return "configuration error";
    case ErrorKind::kUnsupportedFusion: return "unsupported fusion";
    case ErrorKind::kInput: return "input error";
    case ErrorKind::kDegenerateHistogram: return "degenerate histogram";
    case ErrorKind::kGeneration: return "generation error";
    case ErrorKind::kIncompatibleModel: return "incompatible model";
    case ErrorKind::kCorruption: return "corruption error";
    case ErrorKind::kVersion: return "version error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kIo: return "io error";
  }
  return "error";
}

}  // namespace adapterforge
