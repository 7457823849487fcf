// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adapterforge/autograd.hpp"
#include "adapterforge/micro_unet.hpp"
#include "adapterforge/tensor.hpp"

namespace adapterforge {

/// Residual adapter layouts. Only the ReLU-free ones can be folded.
enum class AdapterDesign : std::uint8_t {
  kBnConv = 0,
  kBnReluConv = 1,
  kConvBn = 2,
  kBnConvBnConv = 3,
};

const char* to_string(AdapterDesign design);
AdapterDesign parse_adapter_design(const std::string& name);
bool is_fusable(AdapterDesign design);
int bn_count(AdapterDesign design);
int conv_count(AdapterDesign design);

/// Correction inserted between a host conv and its BatchNorm:
/// host_bn(f + A(f)), with A built from `bns` and 1x1 `convs` in design order.
struct Adapter {
  int layer_id = 0;
  AdapterDesign design = AdapterDesign::kBnConv;
  std::vector<BatchNormParams> bns;
  std::vector<ConvParams> convs;

  int channels() const;
  std::int64_t trainable_params() const;
};

/// Zero 1x1 conv (weights and bias), identity BNs: A == 0 exactly.
Adapter make_zero_adapter(int layer_id, int channels, AdapterDesign design);

class AdapterSet {
 public:
  AdapterSet() = default;
  explicit AdapterSet(std::string domain_tag) : domain_tag_(std::move(domain_tag)) {}

  const std::string& domain_tag() const { return domain_tag_; }
  void set_domain_tag(std::string tag) { domain_tag_ = std::move(tag); }

  bool empty() const { return adapters_.empty(); }
  std::size_t size() const { return adapters_.size(); }
  bool contains(int layer_id) const { return adapters_.count(layer_id) != 0; }
  Adapter* find(int layer_id);
  const Adapter* find(int layer_id) const;
  /// Throws kConfiguration if the layer already has an adapter.
  void insert(Adapter adapter);
  void erase(int layer_id) { adapters_.erase(layer_id); }

  /// Ordered by layer id.
  std::vector<int> layer_ids() const;
  std::map<int, Adapter>& items() { return adapters_; }
  const std::map<int, Adapter>& items() const { return adapters_; }

  /// Copy restricted to `layer_ids` (ids without an adapter are ignored).
  AdapterSet subset(const std::vector<int>& layer_ids) const;

  /// Throws kConfiguration when an adapter does not fit `model`.
  void validate(const MicroUNet& model) const;

 private:
  std::string domain_tag_;
  std::map<int, Adapter> adapters_;
};

/// Layers that can host an adapter: unfused conv3x3 followed by BN.
std::vector<int> adaptable_layers(const MicroUNet& model);

/// One zero-initialised adapter per selected layer (all adaptable layers if
/// `layer_filter` is empty-optional).
AdapterSet make_adapters(const MicroUNet& model, AdapterDesign design,
                         const std::optional<std::vector<int>>& layer_filter = std::nullopt,
                         const std::string& domain_tag = "");

/// A(f) on the tape. BNs use batch statistics only when `bn_mode` is kTrain.
Var adapter_forward(Tape& tape, Adapter& adapter, Var f, Mode bn_mode, const FreezeMask* trainable);

struct AdapterMemory {
  int layer_id = 0;
  int channels = 0;
  std::int64_t trainable_params = 0;
  /// trainable + BN running statistics.
  std::int64_t stored_params = 0;
  /// Coarse per-adapter estimate 5 * O_n.
  std::int64_t five_o_estimate = 0;
};

struct AdapterMemoryReport {
  std::vector<AdapterMemory> adapters;
  std::int64_t total_trainable = 0;
  std::int64_t total_stored = 0;
  std::int64_t total_five_o_estimate = 0;
};

AdapterMemoryReport adapter_memory_report(const AdapterSet& set);

enum class Strategy : std::uint8_t {
  kBaseline,
  kScratch,
  kFull,
  kEncoder,
  kDecoder,
  kBatchnorm,
  kAdaptersAll,
};

const char* to_string(Strategy s);
Strategy parse_strategy(const std::string& name);

/// Trainable parameter names for a strategy. kAdaptersAll requires a
/// non-empty set (kConfiguration otherwise).
FreezeMask set_training_strategy(MicroUNet& model, AdapterSet* adapters, Strategy strategy);

}  // namespace adapterforge
