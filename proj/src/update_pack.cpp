// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adapterforge/update_pack.hpp"

#include <json.hpp>

#include <cstdio>

#include "adapterforge/binary_io.hpp"
#include "adapterforge/error.hpp"
#include "adapterforge/fusion.hpp"

namespace adapterforge {
namespace {

constexpr char kPackMagic[4] = {'A', 'D', 'P', 'T'};

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::size_t packed_record_size(AdapterDesign design, int channels) {
  const std::size_t c = static_cast<std::size_t>(channels);
  return 2 + 1 + 4 + 4 * (static_cast<std::size_t>(bn_count(design)) * 4 * c +
                          static_cast<std::size_t>(conv_count(design)) * (c * c + c));
}

std::size_t packed_size(const AdapterSet& adapters) {
  std::size_t n = 4 + 2 + 8 + 2 + 2 + adapters.domain_tag().size();
  for (const auto& [id, a] : adapters.items()) n += packed_record_size(a.design, a.channels());
  return n + 4;
}

std::vector<std::uint8_t> pack(const AdapterSet& adapters, std::uint64_t model_hash) {
  if (adapters.size() > 0xFFFF) throw Error(ErrorKind::kInput, "too many adapters for one pack");
  if (adapters.domain_tag().size() > 0xFFFF) throw Error(ErrorKind::kInput, "domain tag too long");
  ByteWriter w;
  w.raw(std::string_view(kPackMagic, 4));
  w.u16(kPackVersion);
  w.u64(model_hash);
  w.u16(static_cast<std::uint16_t>(adapters.size()));
  w.u16(static_cast<std::uint16_t>(adapters.domain_tag().size()));
  w.raw(adapters.domain_tag());
  for (const auto& [id, a] : adapters.items()) {  // std::map: ascending layer_id
    w.u16(static_cast<std::uint16_t>(id));
    w.u8(static_cast<std::uint8_t>(a.design));
    w.u32(static_cast<std::uint32_t>(a.channels()));
    for (const auto& bn : a.bns) {
      w.f32s(bn.gamma.data());
      w.f32s(bn.beta.data());
      w.f32s(bn.running_mean);
      w.f32s(bn.running_var);
    }
    for (const auto& conv : a.convs) {
      w.f32s(conv.weight.data());
      w.f32s(conv.bias->data());
    }
  }
  w.u32(crc32(w.bytes()));
  return w.take();
}

UnpackedUpdate unpack(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 + 2 + 8 + 2 + 2 + 4) throw Error(ErrorKind::kFormat, "update pack too short");
  const std::uint32_t stored = ByteReader(bytes.subspan(bytes.size() - 4)).u32();
  if (crc32(bytes.first(bytes.size() - 4)) != stored) {
    throw Error(ErrorKind::kCorruption, "update pack CRC mismatch");
  }
  ByteReader r(bytes.first(bytes.size() - 4));
  if (r.raw(4) != std::string(kPackMagic, 4)) throw Error(ErrorKind::kFormat, "not an ADPT update pack");
  UnpackedUpdate out;
  out.header.version = r.u16();
  if (out.header.version != kPackVersion) {
    throw Error(ErrorKind::kVersion, "unsupported pack version " + std::to_string(out.header.version));
  }
  out.header.model_hash = r.u64();
  out.header.adapter_count = r.u16();
  out.header.domain_tag = r.raw(r.u16());
  out.adapters.set_domain_tag(out.header.domain_tag);
  int previous = -1;
  for (int i = 0; i < out.header.adapter_count; ++i) {
    const int layer_id = r.u16();
    const std::uint8_t design_raw = r.u8();
    if (design_raw > static_cast<std::uint8_t>(AdapterDesign::kBnConvBnConv)) {
      throw Error(ErrorKind::kFormat, "unknown adapter design " + std::to_string(design_raw));
    }
    if (layer_id <= previous) throw Error(ErrorKind::kFormat, "records not sorted by layer id");
    previous = layer_id;
    const auto design = static_cast<AdapterDesign>(design_raw);
    const std::uint32_t channels = r.u32();
    if (channels == 0 || channels > 4096) throw Error(ErrorKind::kFormat, "implausible channel count");
    const int c = static_cast<int>(channels);
    Adapter a = make_zero_adapter(layer_id, c, design);
    for (auto& bn : a.bns) {
      bn.gamma = Tensor::vector(r.f32s(channels));
      bn.beta = Tensor::vector(r.f32s(channels));
      bn.running_mean = r.f32s(channels);
      bn.running_var = r.f32s(channels);
    }
    for (auto& conv : a.convs) {
      conv.weight = Tensor(conv.weight.shape(), r.f32s(static_cast<std::size_t>(c) * c));
      conv.bias = Tensor::vector(r.f32s(channels));
    }
    out.adapters.insert(std::move(a));
  }
  if (r.remaining() != 0) throw Error(ErrorKind::kFormat, "trailing bytes in update pack");
  return out;
}

AppliedUpdate apply_update(const MicroUNet& model, std::span<const std::uint8_t> bytes, bool fuse) {
  UnpackedUpdate update = unpack(bytes);
  const std::uint64_t expected = model.layout_hash();
  if (update.header.model_hash != expected) {
    throw Error(ErrorKind::kIncompatibleModel, "pack targets model " + hex64(update.header.model_hash) +
                                                   ", this model is " + hex64(expected));
  }
  update.adapters.validate(model);
  if (fuse) return AppliedUpdate{fuse_model(model, update.adapters), AdapterSet(update.header.domain_tag)};
  return AppliedUpdate{model, std::move(update.adapters)};
}

std::string inspect_pack(std::span<const std::uint8_t> bytes) {
  const UnpackedUpdate u = unpack(bytes);
  nlohmann::ordered_json j;
  j["magic"] = "ADPT";
  j["version"] = u.header.version;
  j["model_hash"] = hex64(u.header.model_hash);
  j["adapter_count"] = u.header.adapter_count;
  j["domain_tag"] = u.header.domain_tag;
  j["size_bytes"] = bytes.size();
  j["crc32"] = hex64(crc32(bytes.first(bytes.size() - 4))).substr(10);
  nlohmann::ordered_json records = nlohmann::ordered_json::array();
  for (const auto& [id, a] : u.adapters.items()) {
    nlohmann::ordered_json rec;
    rec["layer_id"] = id;
    rec["design"] = to_string(a.design);
    rec["channels"] = a.channels();
    rec["trainable_params"] = a.trainable_params();
    rec["record_bytes"] = packed_record_size(a.design, a.channels());
    double sq = 0.0;
    for (const auto& conv : a.convs) {
      for (float v : conv.weight.data()) sq += static_cast<double>(v) * v;
      for (float v : conv.bias->data()) sq += static_cast<double>(v) * v;
    }
    rec["conv_sq_norm"] = sq;
    records.push_back(rec);
  }
  j["records"] = records;
  return j.dump(2);
}

}  // namespace adapterforge
