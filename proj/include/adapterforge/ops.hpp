// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "adapterforge/tensor.hpp"

namespace adapterforge {

enum class Mode { kTrain, kEval };

int conv_output_extent(int in, int kernel, int stride, int padding);

// Forward kernels. Convolution is cross-correlation with zero padding.
Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias, int stride,
                      int padding);
Tensor conv2d_forward(const Tensor& x, const ConvParams& p);

/// Accumulates into whichever of dx / dweight / dbias is non-null.
void conv2d_backward(const Tensor& x, const Tensor& weight, std::span<const float> dy,
                     int stride, int padding, std::span<float> dx, std::span<float> dweight,
                     std::span<float> dbias);

/// Eval: running statistics. Train: batch statistics over (n, h, w) and a
/// momentum update of the running statistics (unbiased variance).
Tensor batchnorm_forward(const Tensor& x, BatchNormParams& p, Mode mode);
Tensor batchnorm_eval(const Tensor& x, const BatchNormParams& p);

Tensor relu(const Tensor& x);
Tensor maxpool2x2(const Tensor& x);
Tensor upsample_nearest2x(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Per-pixel argmax over channels; returns n*h*w class ids.
std::vector<std::uint8_t> argmax_channels(const Tensor& logits);

}  // namespace adapterforge
