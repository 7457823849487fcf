// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adapterforge {

/// (batch, channel, height, width). Parameters reuse the same layout:
/// conv weights are (c_out, c_in, k, k), per-channel vectors are (1, c, 1, 1).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor vector(std::span<const float> values);
  static Tensor vector(std::size_t size, float fill);

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float* ptr() { return data_.data(); }
  const float* ptr() const { return data_.data(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }
  float& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  float at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  bool has_grad() const { return grad_.has_value(); }
  std::span<float> grad();
  std::span<const float> grad() const;
  /// Allocates (zeroed) on first use.
  std::span<float> ensure_grad();
  void zero_grad();
  void drop_grad() { grad_.reset(); }

  /// Throws kDimension when the flat size does not match.
  Tensor reshaped(Shape shape) const;
  /// Images [first, first + count) of the batch.
  Tensor slice_batch(int first, int count) const;

  bool all_finite() const;

 private:
  Shape shape_{};
  std::vector<float> data_;
  std::optional<std::vector<float>> grad_;
};

/// Throws kState naming `where` if any element is NaN/Inf.
void check_finite(const Tensor& t, const std::string& where);

Tensor concat_batch(std::span<const Tensor> parts);

struct ConvParams {
  Tensor weight;               // (c_out, c_in, k, k)
  std::optional<Tensor> bias;  // (1, c_out, 1, 1)
  int stride = 1;
  int padding = 0;

  int c_out() const { return weight.shape().n; }
  int c_in() const { return weight.shape().c; }
  int kernel() const { return weight.shape().h; }
  std::size_t param_count() const {
    return weight.numel() + (bias ? bias->numel() : 0);
  }
};

ConvParams make_conv(int c_in, int c_out, int kernel, bool with_bias, int stride = 1);

struct BatchNormParams {
  Tensor gamma;  // (1, c, 1, 1)
  Tensor beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float eps = 1e-5f;
  float momentum = 0.1f;

  int channels() const { return static_cast<int>(running_mean.size()); }
};

/// gamma = 1, beta = 0, running stats (0, 1).
BatchNormParams make_batchnorm(int channels);

}  // namespace adapterforge
