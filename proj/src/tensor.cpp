// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adapterforge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "adapterforge/error.hpp"

namespace adapterforge {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) +
         "," + std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape), data_(shape.numel(), fill) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw Error(ErrorKind::kDimension, "negative extent in " + shape.str());
  }
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape.numel()) {
    throw Error(ErrorKind::kDimension, "data length " + std::to_string(data_.size()) +
                                           " does not match shape " + shape.str());
  }
}

Tensor Tensor::vector(std::span<const float> values) {
  return Tensor(Shape{1, static_cast<int>(values.size()), 1, 1},
                std::vector<float>(values.begin(), values.end()));
}

Tensor Tensor::vector(std::size_t size, float fill) {
  return Tensor(Shape{1, static_cast<int>(size), 1, 1}, fill);
}

std::span<float> Tensor::grad() {
  if (!grad_) throw Error(ErrorKind::kState, "tensor has no gradient buffer");
  return *grad_;
}

std::span<const float> Tensor::grad() const {
  if (!grad_) throw Error(ErrorKind::kState, "tensor has no gradient buffer");
  return *grad_;
}

std::span<float> Tensor::ensure_grad() {
  if (!grad_) grad_.emplace(data_.size(), 0.0f);
  return *grad_;
}

void Tensor::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0f);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.numel() != numel()) {
    throw Error(ErrorKind::kDimension, "cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor(shape, data_);
}

Tensor Tensor::slice_batch(int first, int count) const {
  if (first < 0 || count < 0 || first + count > shape_.n) {
    throw Error(ErrorKind::kDimension, "batch slice out of range for " + shape_.str());
  }
  const std::size_t per = static_cast<std::size_t>(shape_.c) * shape_.plane();
  std::vector<float> out(data_.begin() + first * per, data_.begin() + (first + count) * per);
  return Tensor(Shape{count, shape_.c, shape_.h, shape_.w}, std::move(out));
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void check_finite(const Tensor& t, const std::string& where) {
  if (!t.all_finite()) throw Error(ErrorKind::kState, "non-finite values at " + where);
}

Tensor concat_batch(std::span<const Tensor> parts) {
  if (parts.empty()) return {};
  Shape s = parts.front().shape();
  int total = 0;
  for (const auto& p : parts) {
    const Shape& q = p.shape();
    if (q.c != s.c || q.h != s.h || q.w != s.w) {
      throw Error(ErrorKind::kDimension, "concat_batch: " + q.str() + " vs " + s.str());
    }
    total += q.n;
  }
  std::vector<float> data;
  data.reserve(static_cast<std::size_t>(total) * s.c * s.plane());
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  s.n = total;
  return Tensor(s, std::move(data));
}

ConvParams make_conv(int c_in, int c_out, int kernel, bool with_bias, int stride) {
  if (kernel != 1 && kernel != 3) {
    throw Error(ErrorKind::kConfiguration, "kernel must be 1 or 3");
  }
  if (stride != 1 && stride != 2) {
    throw Error(ErrorKind::kConfiguration, "stride must be 1 or 2");
  }
  ConvParams p;
  p.weight = Tensor(Shape{c_out, c_in, kernel, kernel});
  if (with_bias) p.bias = Tensor::vector(static_cast<std::size_t>(c_out), 0.0f);
  p.stride = stride;
  p.padding = kernel / 2;
  return p;
}

BatchNormParams make_batchnorm(int channels) {
  BatchNormParams bn;
  bn.gamma = Tensor::vector(static_cast<std::size_t>(channels), 1.0f);
  bn.beta = Tensor::vector(static_cast<std::size_t>(channels), 0.0f);
  bn.running_mean.assign(static_cast<std::size_t>(channels), 0.0f);
  bn.running_var.assign(static_cast<std::size_t>(channels), 1.0f);
  return bn;
}

}  // namespace adapterforge
