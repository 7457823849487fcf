// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adapterforge/micro_unet.hpp"

#include <cmath>

#include "adapterforge/adapters.hpp"
#include "adapterforge/binary_io.hpp"
#include "adapterforge/error.hpp"
#include "adapterforge/rng.hpp"
#include "adapterforge/update_pack.hpp"

namespace adapterforge {
namespace {

constexpr char kModelMagic[4] = {'M', 'U', 'N', 'T'};
constexpr std::uint16_t kModelVersion = 1;

enum LayerFlags : std::uint8_t {
  kFlagBn = 1u << 0,
  kFlagFused = 1u << 1,
  kFlagBias = 1u << 2,
};

std::uint8_t layer_flags(const LayerSpec& spec, const LayerParams& p, bool fused) {
  std::uint8_t f = 0;
  if (spec.followed_by_bn) f |= kFlagBn;
  if (fused) f |= kFlagFused;
  if (p.conv.bias) f |= kFlagBias;
  return f;
}

std::string layer_prefix(int id) { return "L" + std::to_string(id); }

bool bn_trainable(const FreezeMask* mask, const std::string& prefix) {
  return mask == nullptr || mask->contains(prefix + ".gamma") || mask->contains(prefix + ".beta");
}

bool is_trainable(const FreezeMask* mask, const std::string& name) {
  return mask == nullptr || mask->contains(name);
}

}  // namespace

const char* to_string(Stage stage) {
  switch (stage) {
    case Stage::kEncoder: return "encoder";
    case Stage::kBottleneck: return "bottleneck";
    case Stage::kDecoder: return "decoder";
    case Stage::kHead: return "head";
  }
  return "?";
}

MicroUNet MicroUNet::make(const UNetConfig& config) {
  if (config.encoder_channels.empty() || config.in_channels <= 0 || config.classes <= 0) {
    throw Error(ErrorKind::kConfiguration, "invalid U-Net configuration");
  }
  MicroUNet m;
  m.config_ = config;
  auto add = [&m](LayerKind kind, int c_in, int c_out, Stage stage, int scale) {
    LayerSpec s;
    s.id = static_cast<int>(m.layers_.size());
    s.kind = kind;
    s.c_in = c_in;
    s.c_out = c_out;
    s.followed_by_bn = kind == LayerKind::kConv3x3;
    s.stage = stage;
    s.scale = scale;
    LayerParams p;
    p.conv = make_conv(c_in, c_out, s.kernel(), !s.followed_by_bn);
    if (s.followed_by_bn) p.bn = make_batchnorm(c_out);
    m.layers_.push_back(s);
    m.params_.push_back(std::move(p));
    m.fused_.push_back(false);
    return s.id;
  };

  const auto& enc = config.encoder_channels;
  std::vector<int> skip_source;
  int c = config.in_channels;
  int scale = 1;
  for (int ch : enc) {
    add(LayerKind::kConv3x3, c, ch, Stage::kEncoder, scale);
    skip_source.push_back(add(LayerKind::kConv3x3, ch, ch, Stage::kEncoder, scale));
    c = ch;
    scale *= 2;
  }
  add(LayerKind::kConv3x3, c, config.bottleneck_channels, Stage::kBottleneck, scale);
  add(LayerKind::kConv3x3, config.bottleneck_channels, config.bottleneck_channels,
      Stage::kBottleneck, scale);
  c = config.bottleneck_channels;
  for (int lvl = static_cast<int>(enc.size()) - 1; lvl >= 0; --lvl) {
    scale /= 2;
    const int ch = enc[static_cast<std::size_t>(lvl)];
    const int first = add(LayerKind::kConv3x3, c + ch, ch, Stage::kDecoder, scale);
    add(LayerKind::kConv3x3, ch, ch, Stage::kDecoder, scale);
    m.skip_links_.emplace_back(skip_source[static_cast<std::size_t>(lvl)], first);
    c = ch;
  }
  add(LayerKind::kConv1x1Head, c, config.classes, Stage::kHead, 1);
  return m;
}

void MicroUNet::init_random(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    LayerParams& p = params_[i];
    const LayerSpec& s = layers_[i];
    const double fan_in = static_cast<double>(s.c_in) * s.kernel() * s.kernel();
    const double stddev = std::sqrt((s.kind == LayerKind::kConv3x3 ? 2.0 : 1.0) / fan_in);
    for (float& w : p.conv.weight.data()) w = static_cast<float>(rng.normal(0.0, stddev));
    if (p.conv.bias) std::fill(p.conv.bias->data().begin(), p.conv.bias->data().end(), 0.0f);
    if (p.bn) *p.bn = make_batchnorm(s.c_out);
  }
}

const LayerSpec& MicroUNet::layer(int id) const {
  if (id < 0 || id >= static_cast<int>(layers_.size())) {
    throw Error(ErrorKind::kConfiguration, "no layer " + std::to_string(id));
  }
  return layers_[static_cast<std::size_t>(id)];
}

LayerParams& MicroUNet::params(int id) {
  layer(id);
  return params_[static_cast<std::size_t>(id)];
}

const LayerParams& MicroUNet::params(int id) const {
  layer(id);
  return params_[static_cast<std::size_t>(id)];
}

bool MicroUNet::any_fused() const {
  for (bool f : fused_) {
    if (f) return true;
  }
  return false;
}

void MicroUNet::mark_fused(int id, ConvParams conv) {
  const LayerSpec& s = layer(id);
  if (fused(id)) throw Error(ErrorKind::kState, "layer " + std::to_string(id) + " is already fused");
  if (!s.followed_by_bn) throw Error(ErrorKind::kState, "layer " + std::to_string(id) + " has no BN to fold");
  if (!conv.bias || conv.c_out() != s.c_out || conv.c_in() != s.c_in) {
    throw Error(ErrorKind::kDimension, "fused conv does not match layer " + std::to_string(id));
  }
  LayerParams& p = params_[static_cast<std::size_t>(id)];
  p.conv = std::move(conv);
  p.bn.reset();
  fused_[static_cast<std::size_t>(id)] = true;
}

std::uint64_t MicroUNet::layout_hash() const {
  Fnv1a64 h;
  h.update_value<std::uint32_t>(static_cast<std::uint32_t>(config_.in_channels));
  h.update_value<std::uint32_t>(static_cast<std::uint32_t>(config_.classes));
  h.update_value<std::uint32_t>(static_cast<std::uint32_t>(layers_.size()));
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& s = layers_[i];
    const LayerParams& p = params_[i];
    h.update_value<std::uint16_t>(static_cast<std::uint16_t>(s.id));
    h.update_value<std::uint8_t>(static_cast<std::uint8_t>(s.kind));
    h.update_value<std::uint8_t>(static_cast<std::uint8_t>(s.stage));
    h.update_value<std::uint32_t>(static_cast<std::uint32_t>(s.scale));
    h.update_value<std::uint8_t>(layer_flags(s, p, fused_[i]));
    const Shape& ws = p.conv.weight.shape();
    for (int d : {ws.n, ws.c, ws.h, ws.w}) h.update_value<std::uint32_t>(static_cast<std::uint32_t>(d));
    h.update_value<std::uint32_t>(p.conv.bias ? static_cast<std::uint32_t>(p.conv.bias->numel()) : 0u);
    h.update_value<std::uint32_t>(p.bn ? static_cast<std::uint32_t>(p.bn->channels()) : 0u);
  }
  for (const auto& [from, to] : skip_links_) {
    h.update_value<std::uint16_t>(static_cast<std::uint16_t>(from));
    h.update_value<std::uint16_t>(static_cast<std::uint16_t>(to));
  }
  return h.digest();
}

// Layout (little-endian):
//   "MUNT" u16 version
//   u16 in_channels, u16 classes, u16 bottleneck, u16 n_enc, u16 enc[n_enc]
//   u16 n_layers, per layer: u16 id, u8 kind, u8 stage, u16 scale, u32 c_in, u32 c_out, u8 flags
//   u16 n_skips, per skip: u16 from, u16 to
//   f32 norm_mean, f32 norm_std
//   per layer: f32 weight[c_out*c_in*k*k], [f32 bias[c_out]],
//              [f32 gamma, beta, running_mean, running_var [c_out] each, f32 eps, f32 momentum]
//   u32 CRC-32 of all preceding bytes
std::vector<std::uint8_t> MicroUNet::serialize() const {
  ByteWriter w;
  w.raw(std::string_view(kModelMagic, 4));
  w.u16(kModelVersion);
  w.u16(static_cast<std::uint16_t>(config_.in_channels));
  w.u16(static_cast<std::uint16_t>(config_.classes));
  w.u16(static_cast<std::uint16_t>(config_.bottleneck_channels));
  w.u16(static_cast<std::uint16_t>(config_.encoder_channels.size()));
  for (int c : config_.encoder_channels) w.u16(static_cast<std::uint16_t>(c));
  w.u16(static_cast<std::uint16_t>(layers_.size()));
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& s = layers_[i];
    w.u16(static_cast<std::uint16_t>(s.id));
    w.u8(static_cast<std::uint8_t>(s.kind));
    w.u8(static_cast<std::uint8_t>(s.stage));
    w.u16(static_cast<std::uint16_t>(s.scale));
    w.u32(static_cast<std::uint32_t>(s.c_in));
    w.u32(static_cast<std::uint32_t>(s.c_out));
    w.u8(layer_flags(s, params_[i], fused_[i]));
  }
  w.u16(static_cast<std::uint16_t>(skip_links_.size()));
  for (const auto& [from, to] : skip_links_) {
    w.u16(static_cast<std::uint16_t>(from));
    w.u16(static_cast<std::uint16_t>(to));
  }
  w.f32(norm_.mean);
  w.f32(norm_.stddev);
  for (const LayerParams& p : params_) {
    w.f32s(p.conv.weight.data());
    if (p.conv.bias) w.f32s(p.conv.bias->data());
    if (p.bn) {
      w.f32s(p.bn->gamma.data());
      w.f32s(p.bn->beta.data());
      w.f32s(p.bn->running_mean);
      w.f32s(p.bn->running_var);
      w.f32(p.bn->eps);
      w.f32(p.bn->momentum);
    }
  }
  const std::uint32_t crc = crc32(w.bytes());
  w.u32(crc);
  return w.take();
}

MicroUNet MicroUNet::deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 10) throw Error(ErrorKind::kFormat, "model file too short");
  const std::uint32_t stored_crc = ByteReader(bytes.subspan(bytes.size() - 4)).u32();
  if (crc32(bytes.first(bytes.size() - 4)) != stored_crc) {
    throw Error(ErrorKind::kCorruption, "model file CRC mismatch");
  }
  ByteReader r(bytes.first(bytes.size() - 4));
  if (r.raw(4) != std::string(kModelMagic, 4)) throw Error(ErrorKind::kFormat, "not a MUNT model file");
  const std::uint16_t version = r.u16();
  if (version != kModelVersion) {
    throw Error(ErrorKind::kVersion, "unsupported model version " + std::to_string(version));
  }
  UNetConfig cfg;
  cfg.in_channels = r.u16();
  cfg.classes = r.u16();
  cfg.bottleneck_channels = r.u16();
  cfg.encoder_channels.resize(r.u16());
  for (int& c : cfg.encoder_channels) c = r.u16();
  MicroUNet m = make(cfg);

  const std::size_t n_layers = r.u16();
  if (n_layers != m.layers_.size()) throw Error(ErrorKind::kFormat, "layer table size mismatch");
  std::vector<std::uint8_t> flags(n_layers);
  for (std::size_t i = 0; i < n_layers; ++i) {
    const LayerSpec& s = m.layers_[i];
    const int id = r.u16();
    const auto kind = static_cast<LayerKind>(r.u8());
    const auto stage = static_cast<Stage>(r.u8());
    const int scale = r.u16();
    const int c_in = static_cast<int>(r.u32());
    const int c_out = static_cast<int>(r.u32());
    flags[i] = r.u8();
    if (id != s.id || kind != s.kind || stage != s.stage || scale != s.scale || c_in != s.c_in ||
        c_out != s.c_out || ((flags[i] & kFlagBn) != 0) != s.followed_by_bn) {
      throw Error(ErrorKind::kFormat, "layer table entry " + std::to_string(i) + " does not match architecture");
    }
  }
  const std::size_t n_skips = r.u16();
  if (n_skips != m.skip_links_.size()) throw Error(ErrorKind::kFormat, "skip table mismatch");
  for (const auto& link : m.skip_links_) {
    const int from = r.u16();
    const int to = r.u16();
    if (from != link.first || to != link.second) throw Error(ErrorKind::kFormat, "skip table mismatch");
  }
  m.norm_.mean = r.f32();
  m.norm_.stddev = r.f32();
  for (std::size_t i = 0; i < n_layers; ++i) {
    LayerParams& p = m.params_[i];
    const LayerSpec& s = m.layers_[i];
    const bool fused = (flags[i] & kFlagFused) != 0;
    const bool has_bias = (flags[i] & kFlagBias) != 0;
    const bool has_bn = s.followed_by_bn && !fused;
    p.conv.weight = Tensor(p.conv.weight.shape(), r.f32s(p.conv.weight.numel()));
    if (has_bias) {
      p.conv.bias = Tensor::vector(r.f32s(static_cast<std::size_t>(s.c_out)));
    } else {
      p.conv.bias.reset();
    }
    if (has_bn) {
      BatchNormParams bn = make_batchnorm(s.c_out);
      bn.gamma = Tensor::vector(r.f32s(static_cast<std::size_t>(s.c_out)));
      bn.beta = Tensor::vector(r.f32s(static_cast<std::size_t>(s.c_out)));
      bn.running_mean = r.f32s(static_cast<std::size_t>(s.c_out));
      bn.running_var = r.f32s(static_cast<std::size_t>(s.c_out));
      bn.eps = r.f32();
      bn.momentum = r.f32();
      p.bn = std::move(bn);
    } else {
      p.bn.reset();
    }
    m.fused_[i] = fused;
  }
  if (r.remaining() != 0) throw Error(ErrorKind::kFormat, "trailing bytes in model file");
  return m;
}

void MicroUNet::save(const std::string& path) const { write_file_bytes(path, serialize()); }

MicroUNet MicroUNet::load(const std::string& path) { return deserialize(read_file_bytes(path)); }

namespace {

Var layer_forward(Tape& tape, MicroUNet& model, AdapterSet* adapters, int id, Var x,
                  const ForwardOptions& opt) {
  const LayerSpec& spec = model.layer(id);
  LayerParams& p = model.params(id);
  const std::string prefix = layer_prefix(id);
  const bool train = opt.mode == Mode::kTrain;
  auto param = [&](Tensor& t, const std::string& name) {
    return tape.parameter(t, train && is_trainable(opt.trainable, name));
  };
  Var w = param(p.conv.weight, prefix + ".conv.weight");
  std::optional<Var> b;
  if (p.conv.bias) b = param(*p.conv.bias, prefix + ".conv.bias");
  Var y = tape.conv2d(x, w, b, p.conv.stride, p.conv.padding);
  if (spec.kind == LayerKind::kConv1x1Head) return y;
  if (!model.fused(id)) {
    if (adapters != nullptr) {
      if (Adapter* a = adapters->find(id)) {
        if (a->channels() != spec.c_out) {
          throw Error(ErrorKind::kConfiguration,
                      "adapter on layer " + std::to_string(id) + " has wrong channel count");
        }
        const Mode adapter_mode = train ? Mode::kTrain : Mode::kEval;
        y = tape.add(y, adapter_forward(tape, *a, y, adapter_mode, opt.trainable));
      }
    }
    const bool bn_train = train && bn_trainable(opt.trainable, prefix + ".bn");
    Var g = param(p.bn->gamma, prefix + ".bn.gamma");
    Var be = param(p.bn->beta, prefix + ".bn.beta");
    y = tape.batchnorm(y, g, be, *p.bn, bn_train ? Mode::kTrain : Mode::kEval);
  }
  return tape.relu(y);
}

}  // namespace

Var forward(Tape& tape, MicroUNet& model, AdapterSet* adapters, Var input,
            const ForwardOptions& options) {
  const Shape& s = tape.value(input).shape();
  const int factor = model.downsample_factor();
  if (s.c != model.config().in_channels) {
    throw Error(ErrorKind::kDimension, "model expects " + std::to_string(model.config().in_channels) +
                                           " input channel(s), got " + s.str());
  }
  if (s.h % factor != 0 || s.w % factor != 0 || s.h == 0 || s.w == 0) {
    throw Error(ErrorKind::kDimension, "input extents must be positive multiples of " +
                                           std::to_string(factor) + ", got " + s.str());
  }
  if (adapters != nullptr) adapters->validate(model);

  const int levels = static_cast<int>(model.config().encoder_channels.size());
  std::vector<Var> skips;
  int id = 0;
  Var x = input;
  for (int lvl = 0; lvl < levels; ++lvl) {
    x = layer_forward(tape, model, adapters, id++, x, options);
    x = layer_forward(tape, model, adapters, id++, x, options);
    skips.push_back(x);
    x = tape.maxpool2x2(x);
  }
  x = layer_forward(tape, model, adapters, id++, x, options);
  x = layer_forward(tape, model, adapters, id++, x, options);
  for (int lvl = levels - 1; lvl >= 0; --lvl) {
    x = tape.upsample_nearest2x(x);
    x = tape.concat_channels(x, skips[static_cast<std::size_t>(lvl)]);
    x = layer_forward(tape, model, adapters, id++, x, options);
    x = layer_forward(tape, model, adapters, id++, x, options);
  }
  return layer_forward(tape, model, adapters, id, x, options);
}

Tensor predict_logits(const MicroUNet& model, const Tensor& input, const AdapterSet* adapters) {
  // Eval mode with a non-recording tape never writes to the model or adapters.
  Tape tape(false);
  Var x = tape.constant(input);
  Var y = forward(tape, const_cast<MicroUNet&>(model), const_cast<AdapterSet*>(adapters), x,
                  ForwardOptions{Mode::kEval, nullptr});
  return tape.value(y);
}

std::vector<ParamEntry> parameter_registry(MicroUNet& model, AdapterSet* adapters) {
  std::vector<ParamEntry> out;
  for (const LayerSpec& s : model.layers()) {
    LayerParams& p = model.params(s.id);
    const std::string prefix = layer_prefix(s.id);
    out.push_back({prefix + ".conv.weight", &p.conv.weight, ParamGroup::kConvWeight, s.id, s.stage});
    if (p.conv.bias) {
      out.push_back({prefix + ".conv.bias", &*p.conv.bias, ParamGroup::kConvBias, s.id, s.stage});
    }
    if (p.bn) {
      out.push_back({prefix + ".bn.gamma", &p.bn->gamma, ParamGroup::kBnAffine, s.id, s.stage});
      out.push_back({prefix + ".bn.beta", &p.bn->beta, ParamGroup::kBnAffine, s.id, s.stage});
    }
  }
  if (adapters != nullptr) {
    for (auto& [id, a] : adapters->items()) {
      const std::string prefix = "A" + std::to_string(id);
      const Stage stage = model.layer(id).stage;
      for (std::size_t j = 0; j < a.bns.size(); ++j) {
        const std::string bp = prefix + ".bn" + std::to_string(j);
        out.push_back({bp + ".gamma", &a.bns[j].gamma, ParamGroup::kAdapter, id, stage});
        out.push_back({bp + ".beta", &a.bns[j].beta, ParamGroup::kAdapter, id, stage});
      }
      for (std::size_t j = 0; j < a.convs.size(); ++j) {
        const std::string cp = prefix + ".conv" + std::to_string(j);
        out.push_back({cp + ".weight", &a.convs[j].weight, ParamGroup::kAdapter, id, stage});
        out.push_back({cp + ".bias", &*a.convs[j].bias, ParamGroup::kAdapter, id, stage});
      }
    }
  }
  return out;
}

std::vector<std::int64_t> layer_flops(const MicroUNet& model, int height, int width) {
  std::vector<std::int64_t> out;
  for (const LayerSpec& s : model.layers()) {
    const std::int64_t hw = static_cast<std::int64_t>(height / s.scale) * (width / s.scale);
    const std::int64_t k = s.kernel();
    std::int64_t f = 2 * k * k * s.c_in * s.c_out * hw;
    const std::int64_t elems = hw * s.c_out;
    if (s.kind == LayerKind::kConv3x3) {
      if (model.params(s.id).bn) f += 2 * elems;
      f += elems;  // ReLU
    }
    out.push_back(f);
  }
  return out;
}

CostReport count_costs(const MicroUNet& model, const AdapterSet* adapters, int height, int width,
                       const FreezeMask* trainable) {
  CostReport r;
  for (std::int64_t f : layer_flops(model, height, width)) r.flops_per_image += f;
  auto count_param = [&](const std::string& name, std::size_t n) {
    r.total_params += static_cast<std::int64_t>(n);
    if (trainable == nullptr || trainable->contains(name)) r.trainable_params += static_cast<std::int64_t>(n);
  };
  for (const LayerSpec& s : model.layers()) {
    const LayerParams& p = model.params(s.id);
    const std::string prefix = layer_prefix(s.id);
    count_param(prefix + ".conv.weight", p.conv.weight.numel());
    if (p.conv.bias) count_param(prefix + ".conv.bias", p.conv.bias->numel());
    if (p.bn) {
      count_param(prefix + ".bn.gamma", p.bn->gamma.numel());
      count_param(prefix + ".bn.beta", p.bn->beta.numel());
    }
  }
  r.storage_bytes = static_cast<std::int64_t>(model.serialize().size());
  if (adapters != nullptr) {
    for (const auto& [id, a] : adapters->items()) {
      const LayerSpec& s = model.layer(id);
      const std::int64_t hw = static_cast<std::int64_t>(height / s.scale) * (width / s.scale);
      const std::int64_t c = a.channels();
      const std::int64_t elems = hw * c;
      r.flops_per_image += static_cast<std::int64_t>(a.bns.size()) * 2 * elems;
      r.flops_per_image += static_cast<std::int64_t>(a.convs.size()) * 2 * c * c * hw;
      if (a.design == AdapterDesign::kBnReluConv) r.flops_per_image += elems;
      r.flops_per_image += elems;  // residual add
      const std::string prefix = "A" + std::to_string(id);
      for (std::size_t j = 0; j < a.bns.size(); ++j) {
        const std::string bp = prefix + ".bn" + std::to_string(j);
        count_param(bp + ".gamma", a.bns[j].gamma.numel());
        count_param(bp + ".beta", a.bns[j].beta.numel());
      }
      for (std::size_t j = 0; j < a.convs.size(); ++j) {
        const std::string cp = prefix + ".conv" + std::to_string(j);
        count_param(cp + ".weight", a.convs[j].weight.numel());
        count_param(cp + ".bias", a.convs[j].bias->numel());
      }
    }
    r.storage_bytes += static_cast<std::int64_t>(packed_size(*adapters));
  }
  return r;
}

}  // namespace adapterforge
