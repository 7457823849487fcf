// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adapterforge/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "adapterforge/error.hpp"

namespace adapterforge {
namespace {

// Dense products with a summation order fixed by index alone: every output
// element accumulates its terms in ascending k, whatever the buffer addresses.
// Vectorization runs across output columns only.

constexpr int kColBlock = 256;
constexpr int kRowBlock = 32;

/// C (M x N) = or += A (M x K) * B (K x N); A(m, k) = a[m * a_m + k * a_k], B and C row-major.
void matmul(const float* a, std::size_t a_m, std::size_t a_k, const float* b, float* c, int M, int K, int N,
            bool accumulate) {
  const std::size_t n = static_cast<std::size_t>(N);
  for (int j0 = 0; j0 < N; j0 += kColBlock) {
    const int jb = std::min(kColBlock, N - j0);
    for (int m0 = 0; m0 < M; m0 += kRowBlock) {
      const int mb = std::min(kRowBlock, M - m0);
      if (!accumulate) {
        for (int m = m0; m < m0 + mb; ++m) std::fill_n(c + m * n + j0, jb, 0.0f);
      }
      int k = 0;
      for (; k + 4 <= K; k += 4) {
        const float* b0 = b + static_cast<std::size_t>(k) * n + j0;
        const float* b1 = b0 + n;
        const float* b2 = b1 + n;
        const float* b3 = b2 + n;
        for (int m = m0; m < m0 + mb; ++m) {
          const float* am = a + static_cast<std::size_t>(m) * a_m + static_cast<std::size_t>(k) * a_k;
          const float x0 = am[0], x1 = am[a_k], x2 = am[2 * a_k], x3 = am[3 * a_k];
          float* cm = c + m * n + j0;
          for (int j = 0; j < jb; ++j) {
            float v = cm[j];
            v += x0 * b0[j];
            v += x1 * b1[j];
            v += x2 * b2[j];
            v += x3 * b3[j];
            cm[j] = v;
          }
        }
      }
      for (; k < K; ++k) {
        const float* bk = b + static_cast<std::size_t>(k) * n + j0;
        for (int m = m0; m < m0 + mb; ++m) {
          const float x = a[static_cast<std::size_t>(m) * a_m + static_cast<std::size_t>(k) * a_k];
          float* cm = c + m * n + j0;
          for (int j = 0; j < jb; ++j) cm[j] += x * bk[j];
        }
      }
    }
  }
}

constexpr int kLanes = 16;

/// Dot product split over kLanes interleaved partial sums, reduced in lane order.
float lane_dot(const float* x, const float* y, int n) {
  float acc[kLanes] = {};
  int j = 0;
  for (; j + kLanes <= n; j += kLanes)
    for (int l = 0; l < kLanes; ++l) acc[l] += x[j + l] * y[j + l];
  for (int l = 0; j < n; ++j, ++l) acc[l] += x[j] * y[j];
  float s = 0.0f;
  for (float v : acc) s += v;
  return s;
}

/// C (M x R) += A (M x N) * B (R x N)^T.
void matmul_bt(const float* a, const float* b, float* c, int M, int R, int N) {
  for (int m = 0; m < M; ++m) {
    const float* am = a + static_cast<std::size_t>(m) * N;
    for (int r = 0; r < R; ++r) c[static_cast<std::size_t>(m) * R + r] += lane_dot(am, b + static_cast<std::size_t>(r) * N, N);
  }
}

struct ConvGeometry {
  int n, c_in, h, w, c_out, k, stride, pad, ho, wo;
  bool direct() const { return k == 1 && stride == 1 && pad == 0; }
  int rows() const { return c_in * k * k; }
  int cols() const { return ho * wo; }
};

ConvGeometry geometry(const Shape& xs, const Shape& ws, int stride, int padding) {
  if (xs.c != ws.c) {
    throw Error(ErrorKind::kDimension,
                "conv2d: input channels " + std::to_string(xs.c) + " != weight c_in " +
                    std::to_string(ws.c));
  }
  if (ws.h != ws.w) throw Error(ErrorKind::kDimension, "conv2d: kernel must be square");
  if (stride < 1 || padding < 0) throw Error(ErrorKind::kDimension, "conv2d: bad stride/padding");
  ConvGeometry g{xs.n, xs.c, xs.h, xs.w, ws.n, ws.h, stride, padding, 0, 0};
  g.ho = conv_output_extent(xs.h, ws.h, stride, padding);
  g.wo = conv_output_extent(xs.w, ws.h, stride, padding);
  if (g.ho <= 0 || g.wo <= 0) {
    throw Error(ErrorKind::kDimension, "conv2d: non-positive output extent for " + xs.str());
  }
  return g;
}

void im2col(const float* x, const ConvGeometry& g, float* col) {
  const int cols = g.cols();
  for (int c = 0; c < g.c_in; ++c) {
    const float* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        float* row = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * cols;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          float* dst = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, 0.0f);
            continue;
          }
          const float* src = xc + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, const ConvGeometry& g, float* dx) {
  const int cols = g.cols();
  for (int c = 0; c < g.c_in; ++c) {
    float* xc = dx + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const float* row = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * cols;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          float* dst = xc + static_cast<std::size_t>(iy) * g.w;
          const float* src = row + oy * g.wo;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b)) throw Error(ErrorKind::kDimension, std::string(op) + ": " + a.str() + " vs " + b.str());
}

}  // namespace

int conv_output_extent(int in, int kernel, int stride, int padding) {
  const int span = in + 2 * padding - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias, int stride,
                      int padding) {
  const ConvGeometry g = geometry(x.shape(), weight.shape(), stride, padding);
  if (bias && bias->numel() != static_cast<std::size_t>(g.c_out)) {
    throw Error(ErrorKind::kDimension, "conv2d: bias length mismatch");
  }
  Tensor y(Shape{g.n, g.c_out, g.ho, g.wo});
  std::vector<float> col;
  if (!g.direct()) col.resize(static_cast<std::size_t>(g.rows()) * g.cols());
  const std::size_t x_stride = static_cast<std::size_t>(g.c_in) * g.h * g.w;
  const std::size_t y_stride = static_cast<std::size_t>(g.c_out) * g.cols();
  const std::size_t rows = static_cast<std::size_t>(g.rows());
  for (int n = 0; n < g.n; ++n) {
    const float* xn = x.ptr() + n * x_stride;
    const float* src = xn;
    if (!g.direct()) {
      im2col(xn, g, col.data());
      src = col.data();
    }
    float* yn = y.ptr() + n * y_stride;
    matmul(weight.ptr(), rows, 1, src, yn, g.c_out, g.rows(), g.cols(), false);
    if (bias) {
      for (int o = 0; o < g.c_out; ++o) {
        float* row = yn + static_cast<std::size_t>(o) * g.cols();
        for (int j = 0; j < g.cols(); ++j) row[j] += (*bias)[o];
      }
    }
  }
  return y;
}

Tensor conv2d_forward(const Tensor& x, const ConvParams& p) {
  return conv2d_forward(x, p.weight, p.bias ? &*p.bias : nullptr, p.stride, p.padding);
}

void conv2d_backward(const Tensor& x, const Tensor& weight, std::span<const float> dy, int stride,
                     int padding, std::span<float> dx, std::span<float> dweight,
                     std::span<float> dbias) {
  const ConvGeometry g = geometry(x.shape(), weight.shape(), stride, padding);
  std::vector<float> col;
  std::vector<float> dcol;
  if (!g.direct()) col.resize(static_cast<std::size_t>(g.rows()) * g.cols());
  if (!g.direct() && !dx.empty()) dcol.resize(col.size());
  const std::size_t x_stride = static_cast<std::size_t>(g.c_in) * g.h * g.w;
  const std::size_t y_stride = static_cast<std::size_t>(g.c_out) * g.cols();
  const std::size_t rows = static_cast<std::size_t>(g.rows());
  for (int n = 0; n < g.n; ++n) {
    const float* dyn = dy.data() + n * y_stride;
    if (!dweight.empty()) {
      const float* xn = x.ptr() + n * x_stride;
      const float* src = xn;
      if (!g.direct()) {
        im2col(xn, g, col.data());
        src = col.data();
      }
      matmul_bt(dyn, src, dweight.data(), g.c_out, g.rows(), g.cols());
    }
    if (!dbias.empty()) {
      for (int o = 0; o < g.c_out; ++o) {
        const float* row = dyn + static_cast<std::size_t>(o) * g.cols();
        double s = 0.0;
        for (int j = 0; j < g.cols(); ++j) s += row[j];
        dbias[o] += static_cast<float>(s);
      }
    }
    if (!dx.empty()) {
      float* dxn = dx.data() + n * x_stride;
      // W^T: element (r, o) sits at weight[o * rows + r].
      if (g.direct()) {
        matmul(weight.ptr(), 1, rows, dyn, dxn, g.rows(), g.c_out, g.cols(), true);
      } else {
        matmul(weight.ptr(), 1, rows, dyn, dcol.data(), g.rows(), g.c_out, g.cols(), false);
        col2im_add(dcol.data(), g, dxn);
      }
    }
  }
}

Tensor batchnorm_eval(const Tensor& x, const BatchNormParams& p) {
  const Shape& s = x.shape();
  if (s.c != p.channels() || p.gamma.numel() != static_cast<std::size_t>(s.c)) {
    throw Error(ErrorKind::kDimension, "batchnorm: channel mismatch for " + s.str());
  }
  Tensor y(s);
  const std::size_t plane = s.plane();
  for (int c = 0; c < s.c; ++c) {
    const float inv = 1.0f / std::sqrt(p.running_var[c] + p.eps);
    const float scale = p.gamma[c] * inv;
    const float mean = p.running_mean[c];
    const float beta = p.beta[c];
    for (int n = 0; n < s.n; ++n) {
      const std::size_t base = x.index(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) y[base + i] = (x[base + i] - mean) * scale + beta;
    }
  }
  return y;
}

Tensor batchnorm_forward(const Tensor& x, BatchNormParams& p, Mode mode) {
  if (mode == Mode::kEval) return batchnorm_eval(x, p);
  const Shape& s = x.shape();
  if (s.c != p.channels()) throw Error(ErrorKind::kDimension, "batchnorm: channel mismatch");
  const std::size_t plane = s.plane();
  const std::size_t count = plane * static_cast<std::size_t>(s.n);
  if (count == 0) {
    throw Error(ErrorKind::kDegenerateStatistics, "batchnorm train mode on empty batch/spatial extent");
  }
  Tensor y(s);
  for (int c = 0; c < s.c; ++c) {
    double sum = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const std::size_t base = x.index(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) sum += x[base + i];
    }
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const std::size_t base = x.index(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = x[base + i] - mean;
        sq += d * d;
      }
    }
    const double var = sq / static_cast<double>(count);
    const float inv = static_cast<float>(1.0 / std::sqrt(var + p.eps));
    const float fmean = static_cast<float>(mean);
    for (int n = 0; n < s.n; ++n) {
      const std::size_t base = x.index(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        y[base + i] = (x[base + i] - fmean) * inv * p.gamma[c] + p.beta[c];
      }
    }
    const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
    p.running_mean[c] = static_cast<float>((1.0 - p.momentum) * p.running_mean[c] + p.momentum * mean);
    p.running_var[c] = static_cast<float>((1.0 - p.momentum) * p.running_var[c] + p.momentum * unbiased);
  }
  return y;
}

Tensor relu(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
  return y;
}

Tensor maxpool2x2(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw Error(ErrorKind::kDimension, "maxpool2x2 needs even spatial extents, got " + s.str());
  }
  Tensor y(Shape{s.n, s.c, s.h / 2, s.w / 2});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int oy = 0; oy < s.h / 2; ++oy) {
        for (int ox = 0; ox < s.w / 2; ++ox) {
          float m = x.at(n, c, 2 * oy, 2 * ox);
          m = std::max(m, x.at(n, c, 2 * oy, 2 * ox + 1));
          m = std::max(m, x.at(n, c, 2 * oy + 1, 2 * ox));
          m = std::max(m, x.at(n, c, 2 * oy + 1, 2 * ox + 1));
          y.at(n, c, oy, ox) = m;
        }
      }
    }
  }
  return y;
}

Tensor upsample_nearest2x(const Tensor& x) {
  const Shape& s = x.shape();
  Tensor y(Shape{s.n, s.c, s.h * 2, s.w * 2});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int oy = 0; oy < s.h * 2; ++oy) {
        for (int ox = 0; ox < s.w * 2; ++ox) y.at(n, c, oy, ox) = x.at(n, c, oy / 2, ox / 2);
      }
    }
  }
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a.shape(), b.shape(), "add");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) y[i] = a[i] + b[i];
  return y;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw Error(ErrorKind::kDimension, "concat_channels: " + sa.str() + " vs " + sb.str());
  }
  Tensor y(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t pa = static_cast<std::size_t>(sa.c) * sa.plane();
  const std::size_t pb = static_cast<std::size_t>(sb.c) * sb.plane();
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a.ptr() + n * pa, pa, y.ptr() + n * (pa + pb));
    std::copy_n(b.ptr() + n * pb, pb, y.ptr() + n * (pa + pb) + pa);
  }
  return y;
}

std::vector<std::uint8_t> argmax_channels(const Tensor& logits) {
  const Shape& s = logits.shape();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(s.n) * s.plane());
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < s.plane(); ++i) {
      int best = 0;
      float best_v = logits[logits.index(n, 0, 0, 0) + i];
      for (int c = 1; c < s.c; ++c) {
        const float v = logits[logits.index(n, c, 0, 0) + i];
        if (v > best_v) {
          best_v = v;
          best = c;
        }
      }
      out[n * s.plane() + i] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

}  // namespace adapterforge
