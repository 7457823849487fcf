// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "adapterforge/adapters.hpp"
#include "adapterforge/autograd.hpp"
#include "adapterforge/fusion.hpp"
#include "adapterforge/micro_unet.hpp"
#include "adapterforge/ops.hpp"
#include "adapterforge/rng.hpp"
#include "adapterforge/tensor.hpp"

namespace adapterforge::testing {

inline void fill_normal(Tensor& t, Rng& rng, double stddev = 1.0, double mean = 0.0) {
  for (float& v : t.data()) v = static_cast<float>(rng.normal(mean, stddev));
}

inline void fill_uniform(Tensor& t, Rng& rng, double lo, double hi) {
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
}

inline Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  fill_uniform(t, rng, lo, hi);
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

/// BN with non-trivial statistics: gamma in [0.5, 1.5], beta in [-0.5, 0.5],
/// mean in [-0.5, 0.5], var in [0.5, 2].
inline void randomize_bn(BatchNormParams& bn, Rng& rng) {
  fill_uniform(bn.gamma, rng, 0.5, 1.5);
  fill_uniform(bn.beta, rng, -0.5, 0.5);
  for (float& v : bn.running_mean) v = static_cast<float>(rng.uniform(-0.5, 0.5));
  for (float& v : bn.running_var) v = static_cast<float>(rng.uniform(0.5, 2.0));
}

inline void randomize_adapter(Adapter& a, Rng& rng, double scale = 0.3) {
  for (auto& bn : a.bns) randomize_bn(bn, rng);
  for (auto& c : a.convs) {
    fill_normal(c.weight, rng, scale);
    if (c.bias) fill_normal(*c.bias, rng, scale);
  }
}

inline void randomize_model_stats(MicroUNet& m, Rng& rng) {
  for (const LayerSpec& s : m.layers()) {
    LayerParams& p = m.params(s.id);
    if (p.bn) randomize_bn(*p.bn, rng);
    if (p.conv.bias) fill_normal(*p.conv.bias, rng, 0.1);
  }
}

// ------------------------------------------------------------ gradient checks

struct GradStats {
  int checked = 0;
  int failed = 0;
  double worst = 0.0;
  std::string worst_where;

  void merge(const GradStats& o) {
    checked += o.checked;
    failed += o.failed;
    if (o.worst > worst) {
      worst = o.worst;
      worst_where = o.worst_where;
    }
  }
};

/// Builds a scalar on `tape`; leaves[i] must enter via tape.parameter(leaves[i], true).
using ScalarBuilder = std::function<Var(Tape&, std::vector<Tensor>&)>;

inline constexpr double kGradTolerance = 1e-2;
inline constexpr double kGradFloor = 5e-2;

inline double grad_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
}

/// Central differences at `samples` random coordinates per leaf (drawn with replacement).
inline GradStats check_gradients(const std::string& name, std::vector<Tensor> leaves, const ScalarBuilder& build,
                                 int samples, double h, Rng& rng) {
  GradStats stats;
  for (Tensor& t : leaves) t.drop_grad();
  {
    Tape tape(true);
    const Var loss = build(tape, leaves);
    tape.backward(loss);
  }
  std::vector<std::vector<float>> analytic;
  for (Tensor& t : leaves) {
    analytic.emplace_back(t.numel(), 0.0f);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.back().begin());
    t.drop_grad();
  }
  auto eval = [&](std::vector<Tensor>& ls) {
    Tape tape(false);
    const Var loss = build(tape, ls);
    return static_cast<double>(tape.value(loss)[0]);
  };
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    for (int s = 0; s < samples; ++s) {
      const std::size_t idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(leaves[li].numel()) - 1));
      std::vector<Tensor> plus = leaves, minus = leaves;
      plus[li][idx] += static_cast<float>(h);
      minus[li][idx] -= static_cast<float>(h);
      const double hp = static_cast<double>(plus[li][idx]) - leaves[li][idx];
      const double hm = static_cast<double>(leaves[li][idx]) - minus[li][idx];
      const double numeric = (eval(plus) - eval(minus)) / (hp + hm);
      const double err = grad_error(analytic[li][idx], numeric);
      ++stats.checked;
      if (err > kGradTolerance) ++stats.failed;
      if (err > stats.worst) {
        stats.worst = err;
        stats.worst_where = name + " leaf " + std::to_string(li) + " idx " + std::to_string(idx);
      }
    }
  }
  return stats;
}

/// Distinct values spaced 0.05 apart, shuffled (keeps max-pool and ReLU away from ties and kinks).
inline Tensor spaced_tensor(Shape s, Rng& rng) {
  Tensor t(s);
  std::vector<float> v(t.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = -0.025f * static_cast<float>(v.size()) + 0.05f * static_cast<float>(i) + 0.0125f;
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i - 1)))]);
  std::copy(v.begin(), v.end(), t.data().begin());
  return t;
}

inline std::vector<std::uint8_t> random_labels(std::size_t n, Rng& rng) {
  std::vector<std::uint8_t> y(n);
  for (auto& v : y) v = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
  return y;
}

/// Every differentiable op and loss; `per_leaf` coordinates per input tensor.
inline GradStats run_all_gradient_checks(std::uint64_t seed, int per_leaf, std::vector<std::string>* lines = nullptr) {
  Rng rng(seed);
  GradStats total;
  auto record = [&](const GradStats& s, const std::string& name) {
    total.merge(s);
    if (lines) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%-22s checked %4d failed %d worst %.2e", name.c_str(), s.checked, s.failed, s.worst);
      lines->push_back(buf);
    }
  };
  auto projected = [](Tape& t, Var v) {
    Tensor w(t.value(v).shape());
    Rng local(99);
    fill_uniform(w, local, -1.0, 1.0);
    return t.dot(v, w);
  };

  for (int stride : {1, 2}) {
    std::vector<Tensor> leaves = {random_tensor({2, 3, 6, 6}, rng), random_tensor({4, 3, 3, 3}, rng),
                                  random_tensor({1, 4, 1, 1}, rng)};
    record(check_gradients("conv3x3", leaves,
                           [&, stride](Tape& t, std::vector<Tensor>& l) {
                             return projected(t, t.conv2d(t.parameter(l[0], true), t.parameter(l[1], true),
                                                          t.parameter(l[2], true), stride, 1));
                           },
                           per_leaf, 1e-2, rng),
           stride == 1 ? "conv3x3 stride 1" : "conv3x3 stride 2");
  }
  {
    std::vector<Tensor> leaves = {random_tensor({2, 3, 4, 4}, rng), random_tensor({5, 3, 1, 1}, rng),
                                  random_tensor({1, 5, 1, 1}, rng)};
    record(check_gradients("conv1x1", leaves,
                           [&](Tape& t, std::vector<Tensor>& l) {
                             return projected(t, t.conv2d(t.parameter(l[0], true), t.parameter(l[1], true),
                                                          t.parameter(l[2], true), 1, 0));
                           },
                           per_leaf, 1e-2, rng),
           "conv1x1");
  }
  for (Mode mode : {Mode::kTrain, Mode::kEval}) {
    BatchNormParams bn = make_batchnorm(3);
    randomize_bn(bn, rng);
    std::vector<Tensor> leaves = {random_tensor({3, 3, 3, 3}, rng, -2.0, 2.0), bn.gamma, bn.beta};
    record(check_gradients("batchnorm", leaves,
                           [&, bn, mode](Tape& t, std::vector<Tensor>& l) mutable {
                             BatchNormParams stats = bn;
                             return projected(t, t.batchnorm(t.parameter(l[0], true), t.parameter(l[1], true),
                                                             t.parameter(l[2], true), stats, mode));
                           },
                           per_leaf, 1e-2, rng),
           mode == Mode::kTrain ? "batchnorm train" : "batchnorm eval");
  }
  {
    std::vector<Tensor> leaves = {spaced_tensor({2, 2, 4, 4}, rng)};
    record(check_gradients("relu", leaves,
                           [&](Tape& t, std::vector<Tensor>& l) { return projected(t, t.relu(t.parameter(l[0], true))); },
                           per_leaf, 1e-2, rng),
           "relu");
    record(check_gradients("maxpool", leaves,
                           [&](Tape& t, std::vector<Tensor>& l) {
                             return projected(t, t.maxpool2x2(t.parameter(l[0], true)));
                           },
                           per_leaf, 1e-2, rng),
           "maxpool2x2");
    record(check_gradients("upsample", leaves,
                           [&](Tape& t, std::vector<Tensor>& l) {
                             return projected(t, t.upsample_nearest2x(t.parameter(l[0], true)));
                           },
                           per_leaf, 1e-2, rng),
           "upsample2x");
  }
  {
    std::vector<Tensor> leaves = {random_tensor({2, 2, 3, 3}, rng), random_tensor({2, 2, 3, 3}, rng)};
    record(check_gradients("add", leaves,
                           [&](Tape& t, std::vector<Tensor>& l) {
                             return projected(t, t.add(t.parameter(l[0], true), t.parameter(l[1], true)));
                           },
                           per_leaf, 1e-2, rng),
           "add");
    std::vector<Tensor> cat = {random_tensor({2, 2, 3, 3}, rng), random_tensor({2, 3, 3, 3}, rng)};
    record(check_gradients("concat", cat,
                           [&](Tape& t, std::vector<Tensor>& l) {
                             return projected(t, t.concat_channels(t.parameter(l[0], true), t.parameter(l[1], true)));
                           },
                           per_leaf, 1e-2, rng),
           "concat_channels");
  }
  {
    const std::vector<std::uint8_t> y = random_labels(2 * 4 * 4, rng);
    const std::vector<float> w = {0.7f, 2.5f, 1.1f};
    std::vector<Tensor> leaves = {random_tensor({2, 3, 4, 4}, rng, -2.0, 2.0)};
    record(check_gradients("bcce", leaves,
                           [&](Tape& t, std::vector<Tensor>& l) { return t.balanced_cce(t.parameter(l[0], true), y, w); },
                           per_leaf, 1e-2, rng),
           "balanced_cce");
    record(check_gradients("dice", leaves,
                           [&](Tape& t, std::vector<Tensor>& l) { return t.dice_loss(t.parameter(l[0], true), y); },
                           per_leaf, 1e-2, rng),
           "dice_loss");
    record(check_gradients("jaccard", leaves,
                           [&](Tape& t, std::vector<Tensor>& l) { return t.jaccard_loss(t.parameter(l[0], true), y); },
                           per_leaf, 1e-2, rng),
           "jaccard_loss");
  }
  {
    Adapter a = make_zero_adapter(0, 3, AdapterDesign::kBnConv);
    randomize_adapter(a, rng);
    std::vector<Tensor> leaves = {random_tensor({2, 3, 4, 4}, rng, -2.0, 2.0), a.bns[0].gamma, a.bns[0].beta,
                                  a.convs[0].weight, *a.convs[0].bias};
    record(check_gradients("adapter", leaves,
                           [&, a](Tape& t, std::vector<Tensor>& l) mutable {
                             Adapter local = a;
                             const Var x = t.parameter(l[0], true);
                             const Var g = t.parameter(l[1], true);
                             const Var b = t.parameter(l[2], true);
                             const Var bnv = t.batchnorm(x, g, b, local.bns[0], Mode::kTrain);
                             const Var out = t.conv2d(bnv, t.parameter(l[3], true), t.parameter(l[4], true), 1, 0);
                             return projected(t, t.add(x, out));
                           },
                           per_leaf, 1e-2, rng),
           "adapter residual");
  }
  return total;
}

// ------------------------------------------------------------ fusion probes

/// Host conv3x3 (+ adapter) + BN in eval mode against the fused conv, on
/// inputs in [-3, 3]; returns max-abs deviation.
inline double fusion_layer_error(AdapterDesign design, int c_in, int c_out, Rng& rng) {
  ConvParams host = make_conv(c_in, c_out, 3, false);
  fill_normal(host.weight, rng, 1.0 / std::sqrt(9.0 * c_in));
  BatchNormParams bn = make_batchnorm(c_out);
  randomize_bn(bn, rng);
  Adapter a = make_zero_adapter(0, c_out, design);
  randomize_adapter(a, rng);
  const Tensor x = random_tensor({2, c_in, 8, 8}, rng, -3.0, 3.0);

  const Tensor f = conv2d_forward(x, host);
  Tape tape(false);
  const Var fv = tape.constant(f);
  const Var av = adapter_forward(tape, a, fv, Mode::kEval, nullptr);
  const Tensor unfused = batchnorm_eval(add(f, tape.value(av)), bn);

  const FusedLayer fused = fuse_step3(host, fuse_step2(fuse_step1(a), bn));
  const Tensor out = conv2d_forward(x, fused.conv);
  return max_abs_diff(unfused, out);
}

}  // namespace adapterforge::testing
