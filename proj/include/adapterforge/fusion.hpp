// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "adapterforge/adapters.hpp"
#include "adapterforge/micro_unet.hpp"

namespace adapterforge {

/// y = matrix * x + bias over channels, i.e. a 1x1 convolution, held in f64.
struct ChannelAffine {
  int channels = 0;
  std::vector<double> matrix;  // (channels x channels), row-major [out][in]
  std::vector<double> bias;

  static ChannelAffine identity(int channels);
  double& at(int o, int m) { return matrix[static_cast<std::size_t>(o) * channels + m]; }
  double at(int o, int m) const { return matrix[static_cast<std::size_t>(o) * channels + m]; }
};

/// this-after-inner composition: outer(inner(x)).
ChannelAffine compose(const ChannelAffine& outer, const ChannelAffine& inner);

/// Eval-mode BN as a diagonal affine map.
ChannelAffine bn_as_affine(const BatchNormParams& bn);
ChannelAffine conv1x1_as_affine(const ConvParams& conv);

/// Step 1: the residual adapter f + A(f) as one 1x1 conv (W1, b1).
/// For the BN -> 1x1 design, with s = sqrt(var_A + eps):
///   W1[o,m] = delta(o,m) + W_A[o,m] * gamma_A[m] / s[m]
///   b1[o]   = sum_m W_A[o,m] * (beta_A[m] - gamma_A[m] * mu_A[m] / s[m]) + b_A[o]
/// The other ReLU-free designs compose their affine stages the same way.
/// Throws kUnsupportedFusion for designs with a nonlinearity.
ChannelAffine fuse_step1(const Adapter& adapter);

/// Step 2: fold the host BN after (W1, b1), with s' = sqrt(var + eps):
///   W2[o,m] = gamma[o] / s'[o] * W1[o,m],  b2[o] = gamma[o] * (b1[o] - mu[o]) / s'[o] + beta[o]
ChannelAffine fuse_step2(const ChannelAffine& w1b1, const BatchNormParams& host_bn);

struct FusedLayer {
  ConvParams conv;  // weight (c_out, c_in, 3, 3) and bias, f32
  int source_layer_id = 0;
};

/// Step 3: fold the 1x1 mixing into the host kxk conv:
///   V~[o,i,:,:] = sum_m W2[o,m] V[m,i,:,:],  b~[o] = b2[o] + sum_m W2[o,m] b_V[m]
FusedLayer fuse_step3(const ConvParams& host_conv, const ChannelAffine& w2b2, int source_layer_id = 0);

/// Folds every unfused conv+BN layer into a biased conv; adapters listed in
/// `layer_ids` (all adapters when nullopt) are absorbed first. Eval-mode
/// statistics only. Throws kState if any layer of `model` is already fused.
MicroUNet fuse_model(const MicroUNet& model, const AdapterSet& adapters,
                     const std::optional<std::vector<int>>& layer_ids = std::nullopt);

}  // namespace adapterforge
