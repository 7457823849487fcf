// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adapterforge/classic_cv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <numbers>

#include "adapterforge/error.hpp"

namespace adapterforge {
namespace {

using i128 = __int128;

std::vector<std::int64_t> histogram_of(const GrayImage& img, const std::vector<std::uint8_t>* keep = nullptr) {
  std::vector<std::int64_t> h(256, 0);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    if (keep == nullptr || (*keep)[i]) ++h[img.pixels[i]];
  }
  return h;
}

void check_image(const GrayImage& img) {
  if (img.height <= 0 || img.width <= 0 || img.pixels.size() != static_cast<std::size_t>(img.height) * img.width) {
    throw Error(ErrorKind::kInput, "empty or malformed image");
  }
}

// 3x3 binary morphology with zero padding outside the image.
std::vector<std::uint8_t> dilate3(const std::vector<std::uint8_t>& m, int h, int w) {
  std::vector<std::uint8_t> out(m.size(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = 0;
      for (int dy = -1; dy <= 1 && !v; ++dy) {
        for (int dx = -1; dx <= 1 && !v; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w && m[static_cast<std::size_t>(yy) * w + xx]) v = 1;
        }
      }
      out[static_cast<std::size_t>(y) * w + x] = v;
    }
  }
  return out;
}

// Erosion treats out-of-image pixels as set so closing never eats borders.
std::vector<std::uint8_t> erode3(const std::vector<std::uint8_t>& m, int h, int w) {
  std::vector<std::uint8_t> out(m.size(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = 1;
      for (int dy = -1; dy <= 1 && v; ++dy) {
        for (int dx = -1; dx <= 1 && v; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w && !m[static_cast<std::size_t>(yy) * w + xx]) v = 0;
        }
      }
      out[static_cast<std::size_t>(y) * w + x] = v;
    }
  }
  return out;
}

// Pixels of `open` reachable (4-connected) from seeds.
std::vector<std::uint8_t> flood(const std::vector<std::uint8_t>& open, const std::vector<std::uint8_t>& seed, int h,
                                int w) {
  std::vector<std::uint8_t> seen(open.size(), 0);
  std::deque<int> q;
  for (std::size_t i = 0; i < open.size(); ++i) {
    if (open[i] && seed[i]) {
      seen[i] = 1;
      q.push_back(static_cast<int>(i));
    }
  }
  const int dy[4] = {-1, 1, 0, 0};
  const int dx[4] = {0, 0, -1, 1};
  while (!q.empty()) {
    const int i = q.front();
    q.pop_front();
    const int y = i / w, x = i % w;
    for (int k = 0; k < 4; ++k) {
      const int yy = y + dy[k], xx = x + dx[k];
      if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
      const std::size_t j = static_cast<std::size_t>(yy) * w + xx;
      if (open[j] && !seen[j]) {
        seen[j] = 1;
        q.push_back(static_cast<int>(j));
      }
    }
  }
  return seen;
}

struct SkySplit {
  std::vector<std::uint8_t> sky;
  std::uint8_t threshold = 0;
};

SkySplit find_sky(const GrayImage& img) {
  const int h = img.height, w = img.width;
  const std::uint8_t t = otsu_threshold(img);
  int bright_top = 0;
  for (int x = 0; x < w; ++x) bright_top += img.at(0, x) >= t ? 1 : 0;
  // Ties go to the dark class.
  const bool sky_bright = 2 * bright_top > w;
  std::vector<std::uint8_t> cls(img.pixels.size());
  for (std::size_t i = 0; i < cls.size(); ++i) cls[i] = ((img.pixels[i] >= t) == sky_bright) ? 1 : 0;
  std::vector<std::uint8_t> top(img.pixels.size(), 0);
  std::fill(top.begin(), top.begin() + w, 1);
  return {flood(cls, top, h, w), t};
}

struct RockSide {
  std::uint8_t threshold = 0;
  bool bright = true;
  bool valid = false;
};

// Second Otsu split over non-sky pixels; rock candidates are the smaller side.
RockSide rock_side(const GrayImage& img, const std::vector<std::uint8_t>& sky) {
  std::vector<std::uint8_t> keep(sky.size());
  for (std::size_t i = 0; i < sky.size(); ++i) keep[i] = sky[i] ? 0 : 1;
  const std::vector<std::int64_t> hist = histogram_of(img, &keep);
  int distinct = 0;
  for (std::int64_t c : hist) distinct += c > 0 ? 1 : 0;
  RockSide r;
  if (distinct < 2) return r;
  r.threshold = otsu_threshold(hist);
  std::int64_t below = 0, above = 0;
  for (int v = 0; v < 256; ++v) (v < r.threshold ? below : above) += hist[static_cast<std::size_t>(v)];
  r.bright = above <= below;
  r.valid = true;
  return r;
}

void drop_small(std::vector<std::uint8_t>& on, int h, int w, int min_area) {
  const Components cc = connected_components(on, h, w, true);
  for (std::size_t i = 0; i < on.size(); ++i) {
    if (on[i] && cc.size[static_cast<std::size_t>(cc.label[i])] < min_area) on[i] = 0;
  }
}

// Regions enclosed by closed edges: not reachable from the border through non-edge pixels.
std::vector<std::uint8_t> enclosed(const std::vector<std::uint8_t>& edges, int h, int w) {
  std::vector<std::uint8_t> open(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) open[i] = edges[i] ? 0 : 1;
  std::vector<std::uint8_t> border(edges.size(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (y == 0 || x == 0 || y == h - 1 || x == w - 1) border[static_cast<std::size_t>(y) * w + x] = 1;
    }
  }
  const std::vector<std::uint8_t> outside = flood(open, border, h, w);
  std::vector<std::uint8_t> holes(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) holes[i] = open[i] && !outside[i] ? 1 : 0;
  return holes;
}

}  // namespace

std::uint8_t otsu_threshold(const std::vector<std::int64_t>& hist) {
  if (hist.size() != 256) throw Error(ErrorKind::kInput, "histogram must have 256 bins");
  std::int64_t n = 0, s = 0;
  int distinct = 0;
  for (int v = 0; v < 256; ++v) {
    if (hist[static_cast<std::size_t>(v)] < 0) throw Error(ErrorKind::kInput, "negative histogram count");
    n += hist[static_cast<std::size_t>(v)];
    s += v * hist[static_cast<std::size_t>(v)];
    distinct += hist[static_cast<std::size_t>(v)] > 0 ? 1 : 0;
  }
  if (distinct < 2) throw Error(ErrorKind::kDegenerateHistogram, "otsu: image has fewer than two intensities");

  // sigma_b^2 = (s0*n1 - s1*n0)^2 / (N^2 * n0 * n1); N^2 is common to all t.
  const bool exact = n <= (std::int64_t{1} << 16);
  int best_t = 1;
  i128 best_num = 0, best_den = 1;
  long double best_val = -1.0L;
  std::int64_t n0 = 0, s0 = 0;
  for (int t = 1; t <= 255; ++t) {
    n0 += hist[static_cast<std::size_t>(t - 1)];
    s0 += static_cast<std::int64_t>(t - 1) * hist[static_cast<std::size_t>(t - 1)];
    const std::int64_t n1 = n - n0, s1 = s - s0;
    if (exact) {
      i128 num = 0, den = 1;
      if (n0 > 0 && n1 > 0) {
        const i128 d = static_cast<i128>(s0) * n1 - static_cast<i128>(s1) * n0;
        num = d * d;
        den = static_cast<i128>(n0) * n1;
      }
      if (num * best_den > best_num * den) {
        best_num = num;
        best_den = den;
        best_t = t;
      }
    } else {
      long double val = 0.0L;
      if (n0 > 0 && n1 > 0) {
        const long double d = static_cast<long double>(s0) * n1 - static_cast<long double>(s1) * n0;
        val = d * d / (static_cast<long double>(n0) * n1);
      }
      if (val > best_val) {
        best_val = val;
        best_t = t;
      }
    }
  }
  return static_cast<std::uint8_t>(best_t);
}

std::uint8_t otsu_threshold(const GrayImage& img) {
  check_image(img);
  return otsu_threshold(histogram_of(img));
}

std::vector<std::int64_t> gaussian_taps(int k) {
  if (k < 1 || k % 2 == 0) throw Error(ErrorKind::kInput, "blur kernel size must be odd and positive");
  const double sigma = k / 3.0;
  const int r = k / 2;
  std::vector<std::int64_t> taps(static_cast<std::size_t>(k));
  for (int i = -r; i <= r; ++i) {
    taps[static_cast<std::size_t>(i + r)] =
        std::max<std::int64_t>(1, std::llround(64.0 * std::exp(-(i * i) / (2.0 * sigma * sigma))));
  }
  return taps;
}

Plane8 canny(const GrayImage& img, int low, int high, int blur_k) {
  check_image(img);
  if (low < 0 || high < 0 || low > high) throw Error(ErrorKind::kInput, "canny: need 0 <= low <= high");
  const std::vector<std::int64_t> taps = gaussian_taps(blur_k);
  const int h = img.height, w = img.width, r = blur_k / 2;
  std::int64_t tap_sum = 0;
  for (std::int64_t t : taps) tap_sum += t;
  const std::int64_t scale = tap_sum * tap_sum;

  auto idx = [w](int y, int x) { return static_cast<std::size_t>(y) * w + x; };
  auto clampi = [](int v, int lo, int hi) { return std::min(std::max(v, lo), hi); };

  // Unnormalised separable blur with replicated borders.
  std::vector<std::int64_t> tmp(img.pixels.size()), blur(img.pixels.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::int64_t acc = 0;
      for (int i = -r; i <= r; ++i) acc += taps[static_cast<std::size_t>(i + r)] * img.at(y, clampi(x + i, 0, w - 1));
      tmp[idx(y, x)] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::int64_t acc = 0;
      for (int i = -r; i <= r; ++i) acc += taps[static_cast<std::size_t>(i + r)] * tmp[idx(clampi(y + i, 0, h - 1), x)];
      blur[idx(y, x)] = acc;
    }
  }

  std::vector<std::int64_t> gx(blur.size()), gy(blur.size());
  std::vector<i128> mag2(blur.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto B = [&](int yy, int xx) { return blur[idx(clampi(yy, 0, h - 1), clampi(xx, 0, w - 1))]; };
      const std::int64_t sx = (B(y - 1, x + 1) + 2 * B(y, x + 1) + B(y + 1, x + 1)) -
                              (B(y - 1, x - 1) + 2 * B(y, x - 1) + B(y + 1, x - 1));
      const std::int64_t sy = (B(y + 1, x - 1) + 2 * B(y + 1, x) + B(y + 1, x + 1)) -
                              (B(y - 1, x - 1) + 2 * B(y - 1, x) + B(y - 1, x + 1));
      gx[idx(y, x)] = sx;
      gy[idx(y, x)] = sy;
      mag2[idx(y, x)] = static_cast<i128>(sx) * sx + static_cast<i128>(sy) * sy;
    }
  }

  // Non-maximum suppression; strict on the backward neighbour so plateaus stay 1 px wide.
  const double tan22 = std::tan(std::numbers::pi / 8.0);
  const double tan67 = std::tan(3.0 * std::numbers::pi / 8.0);
  std::vector<i128> thin(blur.size(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const i128 m = mag2[idx(y, x)];
      if (m == 0) continue;
      const double ax = static_cast<double>(gx[idx(y, x)]);
      const double ay = static_cast<double>(gy[idx(y, x)]);
      int dx, dy;
      if (std::abs(ay) <= tan22 * std::abs(ax)) {
        dx = 1, dy = 0;
      } else if (std::abs(ay) >= tan67 * std::abs(ax)) {
        dx = 0, dy = 1;
      } else if ((ax > 0) == (ay > 0)) {
        dx = 1, dy = 1;
      } else {
        dx = 1, dy = -1;
      }
      auto M = [&](int yy, int xx) -> i128 {
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0;
        return mag2[idx(yy, xx)];
      };
      if (m > M(y - dy, x - dx) && m >= M(y + dy, x + dx)) thin[idx(y, x)] = m;
    }
  }

  const i128 hi2 = static_cast<i128>(high) * scale * high * scale;
  const i128 lo2 = static_cast<i128>(low) * scale * low * scale;
  Plane8 edges(h, w, 0);
  std::deque<int> q;
  for (std::size_t i = 0; i < thin.size(); ++i) {
    if (thin[i] > 0 && thin[i] >= hi2) {
      edges.pixels[i] = 1;
      q.push_back(static_cast<int>(i));
    }
  }
  while (!q.empty()) {
    const int i = q.front();
    q.pop_front();
    const int y = i / w, x = i % w;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int yy = y + dy, xx = x + dx;
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
        const std::size_t j = idx(yy, xx);
        if (!edges.pixels[j] && thin[j] > 0 && thin[j] >= lo2) {
          edges.pixels[j] = 1;
          q.push_back(static_cast<int>(j));
        }
      }
    }
  }
  return edges;
}

Components connected_components(const std::vector<std::uint8_t>& on, int h, int w, bool eight) {
  Components cc;
  cc.label.assign(on.size(), -1);
  std::deque<int> q;
  for (std::size_t s = 0; s < on.size(); ++s) {
    if (!on[s] || cc.label[s] >= 0) continue;
    const int id = static_cast<int>(cc.size.size());
    cc.size.push_back(0);
    cc.label[s] = id;
    q.push_back(static_cast<int>(s));
    while (!q.empty()) {
      const int i = q.front();
      q.pop_front();
      ++cc.size.back();
      const int y = i / w, x = i % w;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if ((dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0)) continue;
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          const std::size_t j = static_cast<std::size_t>(yy) * w + xx;
          if (on[j] && cc.label[j] < 0) {
            cc.label[j] = id;
            q.push_back(static_cast<int>(j));
          }
        }
      }
    }
  }
  return cc;
}

int resolve_min_area(const ClassicParams& p, int height, int width) {
  if (p.min_area > 0) return p.min_area;
  return std::max(1, static_cast<int>(std::lround(5.0 * height * width / (48.0 * 48.0))));
}

ClassMask classify_otsu(const GrayImage& img, const ClassicParams& params) {
  check_image(img);
  const int h = img.height, w = img.width;
  const SkySplit sky = find_sky(img);
  ClassMask out(h, w, kTerrain);
  for (std::size_t i = 0; i < sky.sky.size(); ++i) {
    if (sky.sky[i]) out.pixels[i] = kSky;
  }
  const RockSide side = rock_side(img, sky.sky);
  if (!side.valid) return out;
  std::vector<std::uint8_t> rock(img.pixels.size(), 0);
  for (std::size_t i = 0; i < rock.size(); ++i) {
    rock[i] = !sky.sky[i] && ((img.pixels[i] >= side.threshold) == side.bright) ? 1 : 0;
  }
  drop_small(rock, h, w, resolve_min_area(params, h, w));
  for (std::size_t i = 0; i < rock.size(); ++i) {
    if (rock[i]) out.pixels[i] = kRock;
  }
  return out;
}

ClassMask classify_hybrid(const GrayImage& img, const ClassicParams& params) {
  check_image(img);
  const int h = img.height, w = img.width;
  const SkySplit sky = find_sky(img);
  ClassMask out(h, w, kTerrain);
  for (std::size_t i = 0; i < sky.sky.size(); ++i) {
    if (sky.sky[i]) out.pixels[i] = kSky;
  }
  const RockSide side = rock_side(img, sky.sky);
  if (!side.valid) return out;
  const int high = params.canny_high >= 0 ? params.canny_high : side.threshold;
  const int low = params.canny_low >= 0 ? params.canny_low : high / 2;
  const Plane8 raw = canny(img, std::min(low, high), high, params.blur_k);
  const std::vector<std::uint8_t> edges = erode3(dilate3(raw.pixels, h, w), h, w);
  const std::vector<std::uint8_t> holes = enclosed(edges, h, w);

  // Filled contour = contour pixels plus the holes they enclose; rocks only a
  // few pixels wide leave no hole. Each filled region keeps its largest
  // rock-side piece, which drops terrain pockets sealed off by shadow edges.
  std::vector<std::uint8_t> filled(edges.size()), candidate(edges.size());
  for (std::size_t i = 0; i < filled.size(); ++i) {
    filled[i] = (edges[i] || holes[i]) && !sky.sky[i] ? 1 : 0;
    candidate[i] = filled[i] && ((img.pixels[i] >= side.threshold) == side.bright) ? 1 : 0;
  }
  const Components regions = connected_components(filled, h, w, true);
  const Components pieces = connected_components(candidate, h, w, true);
  std::vector<int> best(regions.size.size(), -1);
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    if (pieces.label[i] < 0) continue;
    int& b = best[static_cast<std::size_t>(regions.label[i])];
    const int p = pieces.label[i];
    if (b < 0 || pieces.size[static_cast<std::size_t>(p)] > pieces.size[static_cast<std::size_t>(b)] ||
        (pieces.size[static_cast<std::size_t>(p)] == pieces.size[static_cast<std::size_t>(b)] && p < b)) {
      b = p;
    }
  }
  const int min_area = resolve_min_area(params, h, w);
  std::vector<std::uint8_t> rock(img.pixels.size(), 0);
  for (std::size_t i = 0; i < rock.size(); ++i) {
    const int p = pieces.label[i];
    rock[i] = p >= 0 && p == best[static_cast<std::size_t>(regions.label[i])] &&
                      pieces.size[static_cast<std::size_t>(p)] >= min_area
                  ? 1
                  : 0;
  }
  for (std::size_t i = 0; i < rock.size(); ++i) {
    if (rock[i]) out.pixels[i] = kRock;
  }
  return out;
}

ClassMask classify_canny(const GrayImage& img, const ClassicParams& params) {
  check_image(img);
  const int h = img.height, w = img.width;
  const int high = params.canny_high >= 0 ? params.canny_high : 80;
  const int low = params.canny_low >= 0 ? params.canny_low : 40;
  const Plane8 raw = canny(img, std::min(low, high), high, params.blur_k);
  const std::vector<std::uint8_t> edges = erode3(dilate3(raw.pixels, h, w), h, w);
  std::vector<std::uint8_t> open(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) open[i] = edges[i] ? 0 : 1;
  std::vector<std::uint8_t> top(edges.size(), 0);
  std::fill(top.begin(), top.begin() + w, 1);
  const std::vector<std::uint8_t> sky = flood(open, top, h, w);
  std::vector<std::uint8_t> holes = enclosed(edges, h, w);
  drop_small(holes, h, w, resolve_min_area(params, h, w));
  ClassMask out(h, w, kTerrain);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    if (holes[i]) out.pixels[i] = kRock;
    else if (sky[i]) out.pixels[i] = kSky;
  }
  return out;
}

}  // namespace adapterforge
