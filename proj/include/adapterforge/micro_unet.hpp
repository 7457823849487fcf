// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adapterforge/autograd.hpp"
#include "adapterforge/tensor.hpp"

namespace adapterforge {

class AdapterSet;

enum class LayerKind : std::uint8_t { kConv3x3 = 0, kConv1x1Head = 1 };
enum class Stage : std::uint8_t { kEncoder = 0, kBottleneck = 1, kDecoder = 2, kHead = 3 };

const char* to_string(Stage stage);

struct LayerSpec {
  int id = 0;
  LayerKind kind = LayerKind::kConv3x3;
  int c_in = 0;
  int c_out = 0;
  bool followed_by_bn = true;
  Stage stage = Stage::kEncoder;
  /// Downsampling factor of this layer's resolution (1, 2, 4, ...).
  int scale = 1;

  int kernel() const { return kind == LayerKind::kConv3x3 ? 3 : 1; }
};

struct LayerParams {
  ConvParams conv;
  std::optional<BatchNormParams> bn;
};

/// Gaussian input normalization fitted on the training split.
struct Normalization {
  float mean = 0.0f;
  float stddev = 1.0f;
};

struct UNetConfig {
  std::vector<int> encoder_channels{8, 16};
  int bottleneck_channels = 32;
  int in_channels = 1;
  int classes = 3;
};

/// Names of the parameters that receive gradients in a training step.
struct FreezeMask {
  std::set<std::string> trainable;
  bool contains(const std::string& name) const { return trainable.count(name) != 0; }
};

/// U-Net style encoder/decoder: each block is two [conv3x3 -> BN -> ReLU]
/// layers, 2x max-pool down, nearest 2x up, channel-concat skips, 1x1 head.
class MicroUNet {
 public:
  static MicroUNet make(const UNetConfig& config = {});

  /// He-normal conv weights, BN at identity, head bias zero.
  void init_random(std::uint64_t seed);

  const UNetConfig& config() const { return config_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  const LayerSpec& layer(int id) const;
  LayerParams& params(int id);
  const LayerParams& params(int id) const;
  bool fused(int id) const { return fused_.at(static_cast<std::size_t>(id)); }
  bool any_fused() const;
  void mark_fused(int id, ConvParams conv);
  const std::vector<std::pair<int, int>>& skip_links() const { return skip_links_; }

  Normalization normalization() const { return norm_; }
  void set_normalization(Normalization n) { norm_ = n; }

  int num_classes() const { return config_.classes; }
  int downsample_factor() const { return 1 << config_.encoder_channels.size(); }

  /// Architecture descriptor + parameter shapes (not values), FNV-1a 64.
  std::uint64_t layout_hash() const;

  std::vector<std::uint8_t> serialize() const;
  static MicroUNet deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::string& path) const;
  static MicroUNet load(const std::string& path);

 private:
  UNetConfig config_;
  std::vector<LayerSpec> layers_;
  std::vector<LayerParams> params_;
  std::vector<bool> fused_;
  std::vector<std::pair<int, int>> skip_links_;
  Normalization norm_;
};

struct ForwardOptions {
  Mode mode = Mode::kEval;
  /// Train mode only; null means everything trainable. A BatchNorm runs with
  /// batch statistics only when its affine parameters are trainable.
  const FreezeMask* trainable = nullptr;
};

/// Records the forward pass on `tape`; returns (n, classes, H, W) logits.
Var forward(Tape& tape, MicroUNet& model, AdapterSet* adapters, Var input,
            const ForwardOptions& options);

/// Eval-mode inference.
Tensor predict_logits(const MicroUNet& model, const Tensor& input,
                      const AdapterSet* adapters = nullptr);

enum class ParamGroup : std::uint8_t { kConvWeight, kConvBias, kBnAffine, kAdapter };

struct ParamEntry {
  std::string name;
  Tensor* tensor = nullptr;
  ParamGroup group = ParamGroup::kConvWeight;
  int layer_id = 0;
  Stage stage = Stage::kEncoder;
};

/// Every learnable tensor of the model and, if given, the adapters.
/// BN running statistics are buffers, not parameters.
std::vector<ParamEntry> parameter_registry(MicroUNet& model, AdapterSet* adapters = nullptr);

struct CostReport {
  std::int64_t total_params = 0;
  std::int64_t trainable_params = 0;
  std::int64_t flops_per_image = 0;
  std::int64_t storage_bytes = 0;
};

/// FLOP convention: one multiply-accumulate = 2 FLOPs. conv = 2*k*k*c_in*c_out*h*w,
/// BN (eval) = 2 per element, ReLU = 1, residual add = 1; bias adds, pooling,
/// upsampling and concatenation are not counted. storage_bytes is the model
/// file size plus, with adapters, the size of their update pack.
CostReport count_costs(const MicroUNet& model, const AdapterSet* adapters, int height, int width,
                       const FreezeMask* trainable = nullptr);

/// Per-layer conv/BN/ReLU FLOPs (without adapters); sums to the model part of count_costs.
std::vector<std::int64_t> layer_flops(const MicroUNet& model, int height, int width);

}  // namespace adapterforge
