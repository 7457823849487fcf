// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace adapterforge {

/// Worker cap: ADAPTERFORGE_THREADS if set and positive, else hardware concurrency.
int worker_threads();

/// Calls fn(i) for i in [0, n) on up to worker_threads() threads. Each index
/// runs exactly once; callers write results to per-index slots.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace adapterforge
