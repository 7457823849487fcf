// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "adapterforge/classic_cv.hpp"
#include "adapterforge/rng.hpp"
#include "adapterforge/synth_data.hpp"

namespace adapterforge::testing {

/// Brute force over every split "value < t", t in 1..255: maximizes
/// (s0*n1 - s1*n0)^2 / (n0*n1) with exact integer comparison; first maximum wins.
inline int exhaustive_otsu(const std::vector<std::int64_t>& hist) {
  using u128 = unsigned __int128;
  int best_t = -1;
  u128 best_num = 0, best_den = 1;
  for (int t = 1; t < 256; ++t) {
    std::int64_t n0 = 0, n1 = 0, s0 = 0, s1 = 0;
    for (int v = 0; v < 256; ++v) {
      const std::int64_t c = hist[static_cast<std::size_t>(v)];
      if (v < t) {
        n0 += c;
        s0 += c * v;
      } else {
        n1 += c;
        s1 += c * v;
      }
    }
    if (n0 == 0 || n1 == 0) continue;
    const __int128 diff = static_cast<__int128>(s0) * n1 - static_cast<__int128>(s1) * n0;
    const u128 num = static_cast<u128>(diff < 0 ? -diff : diff) * static_cast<u128>(diff < 0 ? -diff : diff);
    const u128 den = static_cast<u128>(n0) * static_cast<u128>(n1);
    if (best_t < 0 || num * best_den > best_num * den) {
      best_t = t;
      best_num = num;
      best_den = den;
    }
  }
  return best_t;
}

struct OtsuPropertyResult {
  int trials = 0;
  int mismatches = 0;
};

/// Random histograms with 8 occupied bins at random intensities.
inline OtsuPropertyResult otsu_property(int trials, std::uint64_t seed) {
  Rng rng(seed);
  OtsuPropertyResult r;
  while (r.trials < trials) {
    std::vector<std::int64_t> h(256, 0);
    for (int b = 0; b < 8; ++b) h[static_cast<std::size_t>(rng.uniform_int(0, 255))] += rng.uniform_int(1, 400);
    int occupied = 0;
    for (auto c : h) occupied += c > 0;
    if (occupied < 2) continue;
    ++r.trials;
    if (otsu_threshold(h) != exhaustive_otsu(h)) ++r.mismatches;
  }
  return r;
}

/// Fraction of the disc's inner boundary pixels with a Canny edge within 1 px.
inline double canny_circle_recall(int size, double radius) {
  GrayImage img(size, size, 60);
  const double c = size / 2.0;
  auto inside = [&](int y, int x) {
    if (y < 0 || x < 0 || y >= size || x >= size) return false;
    const double dy = y + 0.5 - c, dx = x + 0.5 - c;
    return dy * dy + dx * dx <= radius * radius;
  };
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      if (inside(y, x)) img.at(y, x) = 180;
  const Plane8 edges = canny(img, 20, 40, 3);
  int boundary = 0, hit = 0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (!inside(y, x)) continue;
      if (inside(y - 1, x) && inside(y + 1, x) && inside(y, x - 1) && inside(y, x + 1)) continue;
      ++boundary;
      bool found = false;
      for (int dy = -1; dy <= 1 && !found; ++dy)
        for (int dx = -1; dx <= 1 && !found; ++dx) {
          const int yy = y + dy, xx = x + dx;
          found = yy >= 0 && xx >= 0 && yy < size && xx < size && edges.at(yy, xx) != 0;
        }
      hit += found;
    }
  }
  return boundary == 0 ? 0.0 : static_cast<double>(hit) / boundary;
}

struct RockIou {
  double otsu = 0.0;
  double hybrid = 0.0;
};

/// Per-scene rock IoU averaged over `n` noise-free Moon scenes.
inline RockIou clean_rock_iou(int n, std::uint64_t seed) {
  RockIou r;
  auto iou = [](const ClassMask& pred, const ClassMask& gt) {
    std::int64_t inter = 0, uni = 0;
    for (std::size_t p = 0; p < gt.size(); ++p) {
      const bool a = pred.pixels[p] == kRock, b = gt.pixels[p] == kRock;
      inter += a && b;
      uni += a || b;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  };
  for (int i = 0; i < n; ++i) {
    SceneSpec spec = default_scene_spec(Domain::kMoon);
    spec.noise_std = 0.0;
    spec.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    const LabeledScene s = generate(spec);
    r.otsu += iou(classify_otsu(s.image), s.mask);
    r.hybrid += iou(classify_hybrid(s.image), s.mask);
  }
  r.otsu /= n;
  r.hybrid /= n;
  return r;
}

}  // namespace adapterforge::testing
