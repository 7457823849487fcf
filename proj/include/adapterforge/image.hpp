// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace adapterforge {

/// Row-major 8-bit plane. GrayImage holds intensities, ClassMask holds
/// class ids {0 terrain, 1 rock, 2 sky}.
struct Plane8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  Plane8() = default;
  Plane8(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return pixels.size(); }
  bool empty() const { return pixels.empty(); }
  bool operator==(const Plane8&) const = default;
};

using GrayImage = Plane8;
using ClassMask = Plane8;

enum ClassId : std::uint8_t { kTerrain = 0, kRock = 1, kSky = 2 };
inline constexpr int kNumClasses = 3;

/// Binary PGM (P5, maxval 255).
void write_pgm(const std::string& path, const Plane8& image);
Plane8 read_pgm(const std::string& path);

}  // namespace adapterforge
