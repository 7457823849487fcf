// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adapterforge/autograd.hpp"

#include <cmath>

#include "adapterforge/error.hpp"

namespace adapterforge {
namespace {

void check_target(const Shape& s, std::span<const std::uint8_t> target) {
  if (target.size() != static_cast<std::size_t>(s.n) * s.plane()) {
    throw Error(ErrorKind::kDimension, "loss: target size does not match logits " + s.str());
  }
}

/// Per-pixel softmax over channels, (n, c, h, w) layout.
std::vector<double> softmax_channels(const Tensor& z) {
  const Shape& s = z.shape();
  std::vector<double> p(z.numel());
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      double m = -INFINITY;
      for (int c = 0; c < s.c; ++c) m = std::max(m, static_cast<double>(z[z.index(n, c, 0, 0) + i]));
      double sum = 0.0;
      for (int c = 0; c < s.c; ++c) {
        const std::size_t k = z.index(n, c, 0, 0) + i;
        p[k] = std::exp(static_cast<double>(z[k]) - m);
        sum += p[k];
      }
      for (int c = 0; c < s.c; ++c) p[z.index(n, c, 0, 0) + i] /= sum;
    }
  }
  return p;
}

}  // namespace

Var Tape::push(Tensor value, bool requires_grad) {
#ifndef NDEBUG
  check_finite(value, "tape node " + std::to_string(nodes_.size()));
#endif
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad && record_;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Var v) {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw Error(ErrorKind::kState, "variable does not belong to this tape");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw Error(ErrorKind::kState, "variable does not belong to this tape");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

std::vector<float>& Tape::grad_buffer(Var v) {
  Node& n = node(v);
  if (n.grad.empty()) n.grad.assign(n.value.numel(), 0.0f);
  return n.grad;
}

bool Tape::any_requires(std::initializer_list<Var> vars) const {
  for (Var v : vars) {
    if (v.valid() && node(v).requires_grad) return true;
  }
  return false;
}

Var Tape::constant(Tensor value) { return push(std::move(value), false); }

Var Tape::parameter(Tensor& param, bool trainable) {
  Var v = push(param, trainable);
  if (trainable && record_) node(v).sink = &param;
  return v;
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

std::span<const float> Tape::grad(Var v) const { return node(v).grad; }

Var Tape::conv2d(Var x, Var weight, std::optional<Var> bias, int stride, int padding) {
  const Tensor* b = bias ? &value(*bias) : nullptr;
  Tensor y = conv2d_forward(value(x), value(weight), b, stride, padding);
  const bool rg = any_requires({x, weight, bias.value_or(Var{})});
  Var out = push(std::move(y), rg);
  if (!rg) return out;
  node(out).backward = [this, out, x, weight, bias, stride, padding] {
    const auto& dy = node(out).grad;
    std::span<float> dx, dw, db;
    if (node(x).requires_grad) dx = grad_buffer(x);
    if (node(weight).requires_grad) dw = grad_buffer(weight);
    if (bias && node(*bias).requires_grad) db = grad_buffer(*bias);
    conv2d_backward(value(x), value(weight), dy, stride, padding, dx, dw, db);
  };
  return out;
}

Var Tape::batchnorm(Var x, Var gamma, Var beta, BatchNormParams& stats, Mode mode) {
  const Shape s = value(x).shape();
  // Run the kernel against the tape's copies of gamma/beta so the recorded
  // values are the ones differentiated.
  BatchNormParams view = stats;
  view.gamma = value(gamma);
  view.beta = value(beta);
  Tensor y = batchnorm_forward(value(x), view, mode);
  if (mode == Mode::kTrain) {
    stats.running_mean = view.running_mean;
    stats.running_var = view.running_var;
  }
  const bool rg = any_requires({x, gamma, beta});
  Var out = push(std::move(y), rg);
  if (!rg) return out;
  const Tensor& xv = value(x);

  // Per-channel mean and inverse std actually used in the forward pass.
  std::vector<float> mean(static_cast<std::size_t>(s.c));
  std::vector<float> inv(static_cast<std::size_t>(s.c));
  const std::size_t plane = s.plane();
  const std::size_t count = plane * static_cast<std::size_t>(s.n);
  for (int c = 0; c < s.c; ++c) {
    if (mode == Mode::kEval) {
      mean[c] = stats.running_mean[c];
      inv[c] = 1.0f / std::sqrt(stats.running_var[c] + stats.eps);
    } else {
      double sum = 0.0, sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const std::size_t base = xv.index(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) sum += xv[base + i];
      }
      const double m = sum / static_cast<double>(count);
      for (int n = 0; n < s.n; ++n) {
        const std::size_t base = xv.index(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) sq += (xv[base + i] - m) * (xv[base + i] - m);
      }
      mean[c] = static_cast<float>(m);
      inv[c] = static_cast<float>(1.0 / std::sqrt(sq / static_cast<double>(count) + stats.eps));
    }
  }
  node(out).backward = [this, out, x, gamma, beta, mode, mean = std::move(mean),
                        inv = std::move(inv), s, plane, count] {
    const auto& dy = node(out).grad;
    const Tensor& xv = value(x);
    const Tensor& g = value(gamma);
    const bool need_dx = node(x).requires_grad;
    const bool need_dg = node(gamma).requires_grad;
    const bool need_db = node(beta).requires_grad;
    std::span<float> dx, dg, db;
    if (need_dx) dx = grad_buffer(x);
    if (need_dg) dg = grad_buffer(gamma);
    if (need_db) db = grad_buffer(beta);
    for (int c = 0; c < s.c; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const std::size_t base = xv.index(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) {
          const double xhat = (xv[base + i] - mean[c]) * inv[c];
          sum_dy += dy[base + i];
          sum_dy_xhat += dy[base + i] * xhat;
        }
      }
      if (need_dg) dg[c] += static_cast<float>(sum_dy_xhat);
      if (need_db) db[c] += static_cast<float>(sum_dy);
      if (!need_dx) continue;
      const double scale = static_cast<double>(g[c]) * inv[c];
      const double m = static_cast<double>(count);
      for (int n = 0; n < s.n; ++n) {
        const std::size_t base = xv.index(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) {
          if (mode == Mode::kEval) {
            dx[base + i] += static_cast<float>(scale * dy[base + i]);
          } else {
            const double xhat = (xv[base + i] - mean[c]) * inv[c];
            dx[base + i] += static_cast<float>(scale / m * (m * dy[base + i] - sum_dy - xhat * sum_dy_xhat));
          }
        }
      }
    }
  };
  return out;
}

Var Tape::relu(Var x) {
  Var out = push(adapterforge::relu(value(x)), any_requires({x}));
  if (!node(out).requires_grad) return out;
  node(out).backward = [this, out, x] {
    const auto& dy = node(out).grad;
    auto& dx = grad_buffer(x);
    const Tensor& xv = value(x);
    for (std::size_t i = 0; i < dy.size(); ++i) {
      if (xv[i] > 0.0f) dx[i] += dy[i];
    }
  };
  return out;
}

Var Tape::maxpool2x2(Var x) {
  Var out = push(adapterforge::maxpool2x2(value(x)), any_requires({x}));
  if (!node(out).requires_grad) return out;
  node(out).backward = [this, out, x] {
    const auto& dy = node(out).grad;
    auto& dx = grad_buffer(x);
    const Tensor& xv = value(x);
    const Shape& s = node(out).value.shape();
    std::size_t k = 0;
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        for (int oy = 0; oy < s.h; ++oy) {
          for (int ox = 0; ox < s.w; ++ox, ++k) {
            // First maximal element in row-major window order gets the gradient.
            std::size_t best = xv.index(n, c, 2 * oy, 2 * ox);
            for (int dy_ = 0; dy_ < 2; ++dy_) {
              for (int dx_ = 0; dx_ < 2; ++dx_) {
                const std::size_t idx = xv.index(n, c, 2 * oy + dy_, 2 * ox + dx_);
                if (xv[idx] > xv[best]) best = idx;
              }
            }
            dx[best] += dy[k];
          }
        }
      }
    }
  };
  return out;
}

Var Tape::upsample_nearest2x(Var x) {
  Var out = push(adapterforge::upsample_nearest2x(value(x)), any_requires({x}));
  if (!node(out).requires_grad) return out;
  node(out).backward = [this, out, x] {
    const auto& dy = node(out).grad;
    auto& dx = grad_buffer(x);
    const Tensor& yv = node(out).value;
    const Tensor& xv = value(x);
    const Shape& s = yv.shape();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        for (int oy = 0; oy < s.h; ++oy) {
          for (int ox = 0; ox < s.w; ++ox) {
            dx[xv.index(n, c, oy / 2, ox / 2)] += dy[yv.index(n, c, oy, ox)];
          }
        }
      }
    }
  };
  return out;
}

Var Tape::add(Var a, Var b) {
  Var out = push(adapterforge::add(value(a), value(b)), any_requires({a, b}));
  if (!node(out).requires_grad) return out;
  node(out).backward = [this, out, a, b] {
    const auto& dy = node(out).grad;
    for (Var v : {a, b}) {
      if (!node(v).requires_grad) continue;
      auto& d = grad_buffer(v);
      for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
    }
  };
  return out;
}

Var Tape::concat_channels(Var a, Var b) {
  Var out = push(adapterforge::concat_channels(value(a), value(b)), any_requires({a, b}));
  if (!node(out).requires_grad) return out;
  node(out).backward = [this, out, a, b] {
    const auto& dy = node(out).grad;
    const Shape& sa = value(a).shape();
    const Shape& sb = value(b).shape();
    const std::size_t pa = static_cast<std::size_t>(sa.c) * sa.plane();
    const std::size_t pb = static_cast<std::size_t>(sb.c) * sb.plane();
    const bool ga = node(a).requires_grad;
    const bool gb = node(b).requires_grad;
    float* da = ga ? grad_buffer(a).data() : nullptr;
    float* db = gb ? grad_buffer(b).data() : nullptr;
    for (int n = 0; n < sa.n; ++n) {
      const float* src = dy.data() + n * (pa + pb);
      if (ga) {
        for (std::size_t i = 0; i < pa; ++i) da[n * pa + i] += src[i];
      }
      if (gb) {
        for (std::size_t i = 0; i < pb; ++i) db[n * pb + i] += src[pa + i];
      }
    }
  };
  return out;
}

Var Tape::dot(Var x, const Tensor& w) {
  const Tensor& xv = value(x);
  if (xv.numel() != w.numel()) throw Error(ErrorKind::kDimension, "dot: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.numel(); ++i) acc += static_cast<double>(xv[i]) * w[i];
  Var out = push(Tensor(Shape{1, 1, 1, 1}, static_cast<float>(acc)), any_requires({x}));
  if (!node(out).requires_grad) return out;
  node(out).backward = [this, out, x, w] {
    const float g = node(out).grad[0];
    auto& dx = grad_buffer(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g * w[i];
  };
  return out;
}

Var Tape::balanced_cce(Var logits, std::span<const std::uint8_t> target,
                       std::span<const float> class_weights) {
  const Tensor& z = value(logits);
  const Shape& s = z.shape();
  check_target(s, target);
  if (class_weights.size() < static_cast<std::size_t>(s.c)) {
    throw Error(ErrorKind::kInput, std::to_string(s.c) + " classes but " + std::to_string(class_weights.size()) +
                                       " class weights");
  }
  for (std::uint8_t t : target) {
    if (t >= s.c) {
      throw Error(ErrorKind::kInput, "target class " + std::to_string(t) + " has no weight");
    }
  }
  std::vector<double> p = softmax_channels(z);
  const std::size_t plane = s.plane();
  const double pixels = static_cast<double>(target.size());
  double loss = 0.0;
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      const int y = target[n * plane + i];
      const double py = p[z.index(n, y, 0, 0) + i];
      loss += class_weights[y] * -std::log(std::max(py, 1e-300));
    }
  }
  loss /= pixels;
  Var out = push(Tensor(Shape{1, 1, 1, 1}, static_cast<float>(loss)), any_requires({logits}));
  if (!node(out).requires_grad) return out;
  std::vector<float> weights(class_weights.begin(), class_weights.end());
  std::vector<std::uint8_t> labels(target.begin(), target.end());
  node(out).backward = [this, out, logits, p = std::move(p), weights = std::move(weights),
                        labels = std::move(labels), pixels] {
    const double g = node(out).grad[0];
    auto& dz = grad_buffer(logits);
    const Tensor& z = value(logits);
    const Shape& s = z.shape();
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
      for (std::size_t i = 0; i < plane; ++i) {
        const int y = labels[n * plane + i];
        const double scale = g * weights[y] / pixels;
        for (int c = 0; c < s.c; ++c) {
          const std::size_t k = z.index(n, c, 0, 0) + i;
          dz[k] += static_cast<float>(scale * (p[k] - (c == y ? 1.0 : 0.0)));
        }
      }
    }
  };
  return out;
}

Var Tape::dice_loss(Var logits, std::span<const std::uint8_t> target, float smooth) {
  return overlap_loss(logits, target, smooth, false);
}

Var Tape::jaccard_loss(Var logits, std::span<const std::uint8_t> target, float smooth) {
  return overlap_loss(logits, target, smooth, true);
}

Var Tape::overlap_loss(Var logits, std::span<const std::uint8_t> target, float smooth,
                       bool jaccard) {
  const Tensor& z = value(logits);
  const Shape& s = z.shape();
  check_target(s, target);
  std::vector<double> p = softmax_channels(z);
  const std::size_t plane = s.plane();
  const int classes = s.c;
  std::vector<double> inter(classes, 0.0), sum_p(classes, 0.0), sum_g(classes, 0.0);
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      const int y = target[n * plane + i];
      for (int c = 0; c < classes; ++c) {
        const double pc = p[z.index(n, c, 0, 0) + i];
        sum_p[c] += pc;
        if (c == y) {
          inter[c] += pc;
          sum_g[c] += 1.0;
        }
      }
    }
  }
  const double d = smooth;
  double score = 0.0;
  for (int c = 0; c < classes; ++c) {
    if (jaccard) {
      score += (inter[c] + d) / (sum_p[c] + sum_g[c] - inter[c] + d);
    } else {
      score += (2.0 * inter[c] + d) / (sum_p[c] + sum_g[c] + d);
    }
  }
  const double loss = 1.0 - score / classes;
  Var out = push(Tensor(Shape{1, 1, 1, 1}, static_cast<float>(loss)), any_requires({logits}));
  if (!node(out).requires_grad) return out;
  std::vector<std::uint8_t> labels(target.begin(), target.end());
  node(out).backward = [this, out, logits, p = std::move(p), labels = std::move(labels), inter,
                        sum_p, sum_g, d, jaccard] {
    const double g = node(out).grad[0];
    auto& dz = grad_buffer(logits);
    const Tensor& z = value(logits);
    const Shape& s = z.shape();
    const std::size_t plane = s.plane();
    const int classes = s.c;
    // dL/dp_c at a pixel with one-hot g_c.
    auto dl_dp = [&](int c, double gc) {
      if (jaccard) {
        const double u = sum_p[c] + sum_g[c] - inter[c] + d;
        const double num = inter[c] + d;
        return -(gc * u - num * (1.0 - gc)) / (u * u) / classes;
      }
      const double den = sum_p[c] + sum_g[c] + d;
      const double num = 2.0 * inter[c] + d;
      return -(2.0 * gc * den - num) / (den * den) / classes;
    };
    std::vector<double> dp(classes);
    for (int n = 0; n < s.n; ++n) {
      for (std::size_t i = 0; i < plane; ++i) {
        const int y = labels[n * plane + i];
        double dot = 0.0;
        for (int c = 0; c < classes; ++c) {
          dp[c] = dl_dp(c, c == y ? 1.0 : 0.0);
          dot += dp[c] * p[z.index(n, c, 0, 0) + i];
        }
        for (int c = 0; c < classes; ++c) {
          const std::size_t k = z.index(n, c, 0, 0) + i;
          dz[k] += static_cast<float>(g * p[k] * (dp[c] - dot));
        }
      }
    }
  };
  return out;
}

void Tape::backward(Var loss) {
  if (!record_) throw Error(ErrorKind::kState, "backward on a non-recording tape");
  if (consumed_) throw Error(ErrorKind::kState, "backward already ran on this tape");
  if (!loss.valid() || loss.id >= static_cast<int>(nodes_.size())) {
    throw Error(ErrorKind::kState, "backward without a recorded forward");
  }
  if (value(loss).numel() != 1) throw Error(ErrorKind::kDimension, "backward needs a scalar loss");
  consumed_ = true;
  if (!node(loss).requires_grad) return;
  grad_buffer(loss)[0] = 1.0f;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward();
    if (n.sink != nullptr) {
      auto g = n.sink->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  }
}

}  // namespace adapterforge
