// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adapterforge/adapters.hpp"
#include "adapterforge/micro_unet.hpp"

namespace adapterforge {

// Wire format (little-endian, normative):
//   header:  "ADPT" | u16 version | u64 model_hash | u16 adapter_count |
//            u16 tag_length | tag bytes (UTF-8)
//   record:  u16 layer_id | u8 design | u32 channels |
//            per BN (design order): f32 gamma[C], beta[C], mean[C], var[C] |
//            per 1x1 conv (design order): f32 weight[C*C] (row-major [out][in]), f32 bias[C]
//   footer:  u32 CRC-32 over every preceding byte
// Records are sorted by layer_id.

inline constexpr std::uint16_t kPackVersion = 1;

struct PackHeader {
  std::uint16_t version = kPackVersion;
  std::uint64_t model_hash = 0;
  std::uint16_t adapter_count = 0;
  std::string domain_tag;
};

std::vector<std::uint8_t> pack(const AdapterSet& adapters, std::uint64_t model_hash);

/// Exact byte length pack() will produce.
std::size_t packed_size(const AdapterSet& adapters);
std::size_t packed_record_size(AdapterDesign design, int channels);

struct UnpackedUpdate {
  PackHeader header;
  AdapterSet adapters;
};

/// Throws kCorruption on CRC failure, kVersion on an unknown version,
/// kFormat on structural problems.
UnpackedUpdate unpack(std::span<const std::uint8_t> bytes);

struct AppliedUpdate {
  MicroUNet model;
  AdapterSet adapters;  // empty when fused
};

/// Verifies CRC and version, then the model hash (kIncompatibleModel), then
/// attaches the adapters or, with fuse, folds them. `model` is never modified.
AppliedUpdate apply_update(const MicroUNet& model, std::span<const std::uint8_t> bytes, bool fuse);

/// Header and per-record summary as a JSON document.
std::string inspect_pack(std::span<const std::uint8_t> bytes);

}  // namespace adapterforge
