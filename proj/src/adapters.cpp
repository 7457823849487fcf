// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adapterforge/adapters.hpp"

#include <algorithm>

#include "adapterforge/error.hpp"

namespace adapterforge {

const char* to_string(AdapterDesign design) {
  switch (design) {
    case AdapterDesign::kBnConv: return "bn_conv";
    case AdapterDesign::kBnReluConv: return "bn_relu_conv";
    case AdapterDesign::kConvBn: return "conv_bn";
    case AdapterDesign::kBnConvBnConv: return "bn_conv_bn_conv";
  }
  return "?";
}

AdapterDesign parse_adapter_design(const std::string& name) {
  for (auto d : {AdapterDesign::kBnConv, AdapterDesign::kBnReluConv, AdapterDesign::kConvBn,
                 AdapterDesign::kBnConvBnConv}) {
    if (name == to_string(d)) return d;
  }
  throw Error(ErrorKind::kInput, "unknown adapter design '" + name + "'");
}

bool is_fusable(AdapterDesign design) { return design != AdapterDesign::kBnReluConv; }

int bn_count(AdapterDesign design) { return design == AdapterDesign::kBnConvBnConv ? 2 : 1; }

int conv_count(AdapterDesign design) { return design == AdapterDesign::kBnConvBnConv ? 2 : 1; }

int Adapter::channels() const { return convs.empty() ? 0 : convs.front().c_out(); }

std::int64_t Adapter::trainable_params() const {
  std::int64_t n = 0;
  for (const auto& bn : bns) n += static_cast<std::int64_t>(bn.gamma.numel() + bn.beta.numel());
  for (const auto& c : convs) n += static_cast<std::int64_t>(c.param_count());
  return n;
}

Adapter make_zero_adapter(int layer_id, int channels, AdapterDesign design) {
  Adapter a;
  a.layer_id = layer_id;
  a.design = design;
  for (int i = 0; i < bn_count(design); ++i) a.bns.push_back(make_batchnorm(channels));
  for (int i = 0; i < conv_count(design); ++i) a.convs.push_back(make_conv(channels, channels, 1, true));
  return a;
}

Adapter* AdapterSet::find(int layer_id) {
  auto it = adapters_.find(layer_id);
  return it == adapters_.end() ? nullptr : &it->second;
}

const Adapter* AdapterSet::find(int layer_id) const {
  auto it = adapters_.find(layer_id);
  return it == adapters_.end() ? nullptr : &it->second;
}

void AdapterSet::insert(Adapter adapter) {
  const int id = adapter.layer_id;
  if (!adapters_.emplace(id, std::move(adapter)).second) {
    throw Error(ErrorKind::kConfiguration, "layer " + std::to_string(id) + " already has an adapter");
  }
}

std::vector<int> AdapterSet::layer_ids() const {
  std::vector<int> ids;
  for (const auto& [id, a] : adapters_) ids.push_back(id);
  return ids;
}

AdapterSet AdapterSet::subset(const std::vector<int>& layer_ids) const {
  AdapterSet out(domain_tag_);
  for (int id : layer_ids) {
    if (const Adapter* a = find(id)) out.insert(*a);
  }
  return out;
}

void AdapterSet::validate(const MicroUNet& model) const {
  for (const auto& [id, a] : adapters_) {
    if (id < 0 || id >= static_cast<int>(model.layers().size())) {
      throw Error(ErrorKind::kConfiguration, "adapter for missing layer " + std::to_string(id));
    }
    const LayerSpec& s = model.layer(id);
    if (s.kind != LayerKind::kConv3x3 || !s.followed_by_bn) {
      throw Error(ErrorKind::kConfiguration, "layer " + std::to_string(id) + " cannot host an adapter");
    }
    if (a.channels() != s.c_out || static_cast<int>(a.bns.size()) != bn_count(a.design) ||
        static_cast<int>(a.convs.size()) != conv_count(a.design)) {
      throw Error(ErrorKind::kConfiguration, "adapter on layer " + std::to_string(id) +
                                                 " does not match host channels " +
                                                 std::to_string(s.c_out));
    }
    for (const auto& bn : a.bns) {
      if (bn.channels() != s.c_out) {
        throw Error(ErrorKind::kConfiguration, "adapter BN channel mismatch on layer " + std::to_string(id));
      }
    }
  }
}

std::vector<int> adaptable_layers(const MicroUNet& model) {
  std::vector<int> ids;
  for (const LayerSpec& s : model.layers()) {
    if (s.kind == LayerKind::kConv3x3 && s.followed_by_bn && !model.fused(s.id)) ids.push_back(s.id);
  }
  return ids;
}

AdapterSet make_adapters(const MicroUNet& model, AdapterDesign design,
                         const std::optional<std::vector<int>>& layer_filter,
                         const std::string& domain_tag) {
  const std::vector<int> allowed = adaptable_layers(model);
  std::vector<int> ids = layer_filter.value_or(allowed);
  AdapterSet set(domain_tag);
  for (int id : ids) {
    if (std::find(allowed.begin(), allowed.end(), id) == allowed.end()) {
      throw Error(ErrorKind::kConfiguration,
                  "layer " + std::to_string(id) + " is not an unfused conv3x3+BN layer");
    }
    set.insert(make_zero_adapter(id, model.layer(id).c_out, design));
  }
  return set;
}

Var adapter_forward(Tape& tape, Adapter& adapter, Var f, Mode bn_mode, const FreezeMask* trainable) {
  const std::string prefix = "A" + std::to_string(adapter.layer_id);
  const bool train = bn_mode == Mode::kTrain;
  auto trainable_name = [&](const std::string& name) {
    return train && (trainable == nullptr || trainable->contains(name));
  };
  auto bn = [&](Var x, std::size_t j) {
    const std::string bp = prefix + ".bn" + std::to_string(j);
    BatchNormParams& p = adapter.bns[j];
    const bool tg = trainable_name(bp + ".gamma");
    const bool tb = trainable_name(bp + ".beta");
    Var g = tape.parameter(p.gamma, tg);
    Var b = tape.parameter(p.beta, tb);
    return tape.batchnorm(x, g, b, p, (tg || tb) ? Mode::kTrain : Mode::kEval);
  };
  auto conv = [&](Var x, std::size_t j) {
    const std::string cp = prefix + ".conv" + std::to_string(j);
    ConvParams& p = adapter.convs[j];
    Var w = tape.parameter(p.weight, trainable_name(cp + ".weight"));
    Var b = tape.parameter(*p.bias, trainable_name(cp + ".bias"));
    return tape.conv2d(x, w, b, 1, 0);
  };
  switch (adapter.design) {
    case AdapterDesign::kBnConv: return conv(bn(f, 0), 0);
    case AdapterDesign::kBnReluConv: return conv(tape.relu(bn(f, 0)), 0);
    case AdapterDesign::kConvBn: return bn(conv(f, 0), 0);
    case AdapterDesign::kBnConvBnConv: return conv(bn(conv(bn(f, 0), 0), 1), 1);
  }
  throw Error(ErrorKind::kConfiguration, "unknown adapter design");
}

AdapterMemoryReport adapter_memory_report(const AdapterSet& set) {
  AdapterMemoryReport r;
  for (const auto& [id, a] : set.items()) {
    AdapterMemory m;
    m.layer_id = id;
    m.channels = a.channels();
    const std::int64_t o = m.channels;
    m.trainable_params = static_cast<std::int64_t>(a.bns.size()) * 2 * o +
                         static_cast<std::int64_t>(a.convs.size()) * (o * o + o);
    m.stored_params = m.trainable_params + static_cast<std::int64_t>(a.bns.size()) * 2 * o;
    m.five_o_estimate = 5 * o;
    r.total_trainable += m.trainable_params;
    r.total_stored += m.stored_params;
    r.total_five_o_estimate += m.five_o_estimate;
    r.adapters.push_back(m);
  }
  return r;
}

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::kBaseline: return "baseline";
    case Strategy::kScratch: return "scratch";
    case Strategy::kFull: return "full";
    case Strategy::kEncoder: return "encoder";
    case Strategy::kDecoder: return "decoder";
    case Strategy::kBatchnorm: return "batchnorm";
    case Strategy::kAdaptersAll: return "adapters";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  for (auto s : {Strategy::kBaseline, Strategy::kScratch, Strategy::kFull, Strategy::kEncoder,
                 Strategy::kDecoder, Strategy::kBatchnorm, Strategy::kAdaptersAll}) {
    if (name == to_string(s)) return s;
  }
  if (name == "adapters_all") return Strategy::kAdaptersAll;
  throw Error(ErrorKind::kInput, "unknown strategy '" + name + "'");
}

FreezeMask set_training_strategy(MicroUNet& model, AdapterSet* adapters, Strategy strategy) {
  if (strategy == Strategy::kAdaptersAll && (adapters == nullptr || adapters->empty())) {
    throw Error(ErrorKind::kConfiguration, "adapters strategy needs a non-empty adapter set");
  }
  FreezeMask mask;
  for (const ParamEntry& e : parameter_registry(model, adapters)) {
    bool on = false;
    const bool backbone = e.group != ParamGroup::kAdapter;
    switch (strategy) {
      case Strategy::kBaseline: on = false; break;
      case Strategy::kScratch:
      case Strategy::kFull: on = backbone; break;
      case Strategy::kEncoder:
        on = backbone && (e.stage == Stage::kEncoder || e.stage == Stage::kBottleneck);
        break;
      case Strategy::kDecoder:
        on = backbone && (e.stage == Stage::kDecoder || e.stage == Stage::kHead);
        break;
      case Strategy::kBatchnorm: on = e.group == ParamGroup::kBnAffine; break;
      case Strategy::kAdaptersAll: on = !backbone; break;
    }
    if (on) mask.trainable.insert(e.name);
  }
  return mask;
}

}  // namespace adapterforge
