// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "adapterforge/ops.hpp"
#include "adapterforge/tensor.hpp"

namespace adapterforge {

/// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over the fixed op set the segmentation model needs.
///
/// A Tape lives for one forward/backward step. Parameters enter as leaves
/// bound to their owning Tensor; backward() accumulates into that tensor's
/// grad buffer only when the leaf was registered as trainable. With
/// record == false no closures are kept (inference).
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  Var constant(Tensor value);
  Var parameter(Tensor& param, bool trainable);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  /// Gradient of the last backward() w.r.t. v; empty when v got none.
  std::span<const float> grad(Var v) const;

  Var conv2d(Var x, Var weight, std::optional<Var> bias, int stride, int padding);
  Var batchnorm(Var x, Var gamma, Var beta, BatchNormParams& stats, Mode mode);
  Var relu(Var x);
  Var maxpool2x2(Var x);
  Var upsample_nearest2x(Var x);
  Var add(Var a, Var b);
  Var concat_channels(Var a, Var b);

  /// Scalar sum(x * w) with w fixed; the grad-check harness uses it.
  Var dot(Var x, const Tensor& w);

  /// mean over pixels of w[y] * -log softmax(logits)[y].
  Var balanced_cce(Var logits, std::span<const std::uint8_t> target, std::span<const float> class_weights);
  /// 1 - mean_c (2 I_c + d) / (S_c + d), soft probabilities, d = smooth.
  Var dice_loss(Var logits, std::span<const std::uint8_t> target, float smooth = 1.0f);
  /// 1 - mean_c (I_c + d) / (S_c - I_c + d).
  Var jaccard_loss(Var logits, std::span<const std::uint8_t> target, float smooth = 1.0f);

  /// Throws kState when nothing was recorded for this loss or backward already ran.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<float> grad;
    bool requires_grad = false;
    Tensor* sink = nullptr;
    std::function<void()> backward;
  };

  Var push(Tensor value, bool requires_grad);
  Node& node(Var v);
  const Node& node(Var v) const;
  std::vector<float>& grad_buffer(Var v);
  bool any_requires(std::initializer_list<Var> vars) const;
  Var overlap_loss(Var logits, std::span<const std::uint8_t> target, float smooth, bool jaccard);

  bool record_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
};

}  // namespace adapterforge
