// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "adapterforge/image.hpp"

namespace adapterforge {

/// Threshold t in 1..255 maximising the between-class variance with class 0
/// = {pixels < t}. Smallest t wins ties (compared exactly). Throws
/// kDegenerateHistogram when fewer than two intensities are present.
std::uint8_t otsu_threshold(const GrayImage& img);
/// Same, from a 256-bin histogram.
std::uint8_t otsu_threshold(const std::vector<std::int64_t>& histogram);

/// Binary edge map (1 = edge). Gaussian blur with an odd kernel of size
/// blur_k and sigma blur_k/3, Sobel gradients, 4-direction non-maximum
/// suppression, hysteresis with 8-connectivity. Thresholds are in Sobel
/// magnitude units of the blurred image. The blur runs in integer
/// arithmetic, so the result is exactly invariant to intensity offsets.
Plane8 canny(const GrayImage& img, int low, int high, int blur_k);

/// Integer Gaussian taps for an odd size k, sigma k/3 (scale 64 at the centre).
std::vector<std::int64_t> gaussian_taps(int k);

struct ClassicParams {
  /// Components smaller than this become terrain; <= 0 means 5 px per 48x48.
  int min_area = 0;
  int blur_k = 3;
  /// Canny thresholds; < 0 derives them from Otsu on the non-sky region.
  int canny_low = -1;
  int canny_high = -1;
};

int resolve_min_area(const ClassicParams& p, int height, int width);

/// Sky = top-row-majority Otsu class (components touching the top row),
/// rock = smaller class of a second Otsu split inside the non-sky region.
ClassMask classify_otsu(const GrayImage& img, const ClassicParams& params = {});

/// Sky as in classify_otsu; Canny edges closed with a 3x3 kernel and filled.
/// Within each filled contour the largest rock-side piece of at least
/// min_area becomes rock.
ClassMask classify_hybrid(const GrayImage& img, const ClassicParams& params = {});

/// Edges only: sky = non-edge region flood-filled from the top row, rock =
/// closed contours enclosing at least min_area, rest terrain. Thresholds
/// default to low 40 / high 80.
ClassMask classify_canny(const GrayImage& img, const ClassicParams& params = {});

/// Connected components of `on` pixels; returns labels (-1 = off) and sizes.
struct Components {
  std::vector<int> label;
  std::vector<int> size;
};
Components connected_components(const std::vector<std::uint8_t>& on, int height, int width, bool eight);

}  // namespace adapterforge
