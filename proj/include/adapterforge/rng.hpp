// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace adapterforge {

/// SplitMix64 (Steele, Lea, Flood). Constants:
///   increment 0x9E3779B97F4A7C15, mix 0xBF58476D1CE4E5B9 / 0x94D049BB133111EB.
/// Used to derive sub-seeds and to seed Rng.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Sub-seed `index` of `master`: the (index+1)-th SplitMix64 output.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// xorshift64* (Vigna): shifts 12/25/27, multiplier 0x2545F4914F6CDD1D,
/// seeded with one SplitMix64 output so the state is never zero.
/// All draws are defined here rather than through <random> distributions
/// so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    SplitMix64 sm(seed);
    state_ = sm.next();
    if (state_ == 0) state_ = 0x9E3779B97F4A7C15ull;
  }

  std::uint64_t next_u64() {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1Dull;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] (inclusive).
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Box-Muller, one value per call.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  SplitMix64 sm(master);
  std::uint64_t v = 0;
  for (std::uint64_t i = 0; i <= index; ++i) v = sm.next();
  return v;
}

}  // namespace adapterforge
