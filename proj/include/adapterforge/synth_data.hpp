// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "adapterforge/image.hpp"

namespace adapterforge {

enum class Domain : std::uint8_t { kMoon = 0, kMars = 1 };

const char* to_string(Domain d);
Domain parse_domain(const std::string& name);

struct SceneSpec {
  Domain domain = Domain::kMoon;
  int height = 48;
  int width = 48;
  int rock_min = 1;
  int rock_max = 4;
  double sky_fraction = 0.25;
  std::uint64_t seed = 0;
  double noise_std = 32.0;
  /// Blend factor toward a flat haze level (Mars only).
  double haze = 0.0;
};

/// Domain defaults: Moon is high-contrast with a dark sky; Mars has a bright
/// sky, dim rocks and haze.
SceneSpec default_scene_spec(Domain domain);

struct LabeledScene {
  GrayImage image;
  ClassMask mask;
  SceneSpec meta;
  /// First terrain row of each column before rocks are drawn.
  std::vector<int> horizon;
};

/// Deterministic given spec.seed. Rocks are ellipses drawn over sky and
/// terrain (rock label wins where a rock overlaps the sky); their cast
/// shadows stay terrain. Throws kGeneration when rocks cannot be placed
/// without overlap after 100 attempts per rock.
LabeledScene generate(const SceneSpec& spec);

struct Splits {
  std::vector<LabeledScene> train;
  std::vector<LabeledScene> val;
  std::vector<LabeledScene> test;
};

/// Split k (0 train, 1 val, 2 test) draws its scene seeds from the SplitMix64
/// stream seeded with derive_seed(master_seed, k).
Splits make_splits(int n_train, int n_val, int n_test, const SceneSpec& spec_template,
                   std::uint64_t master_seed);

/// Pixel counts per class over a scene list.
std::array<std::int64_t, kNumClasses> class_frequencies(const std::vector<LabeledScene>& scenes);

/// Directory of PGM pairs plus manifest.json:
///   {format, version, master_seed, spec, splits: {train|val|test: [{image, mask, seed}]}}
void write_archive(const std::string& dir, const Splits& splits, const SceneSpec& spec_template,
                   std::uint64_t master_seed);
/// Reads any manifest of that shape, so external PGM image/mask pairs can be used.
Splits read_archive(const std::string& dir);

}  // namespace adapterforge
