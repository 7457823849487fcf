// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>

#include "adapterforge/adapters.hpp"
#include "adapterforge/error.hpp"
#include "adapterforge/micro_unet.hpp"
#include "support.hpp"

namespace af = adapterforge;
using af::Tensor;

namespace {

af::MicroUNet trained_looking_model(std::uint64_t seed) {
  af::MicroUNet m = af::MicroUNet::make();
  m.init_random(seed);
  af::Rng rng(seed + 1);
  af::testing::randomize_model_stats(m, rng);
  return m;
}

std::int64_t registry_count(af::MicroUNet& m, af::AdapterSet* a = nullptr) {
  std::int64_t n = 0;
  for (const auto& e : af::parameter_registry(m, a)) n += static_cast<std::int64_t>(e.tensor->numel());
  return n;
}

}  // namespace

TEST(MicroUNet, DefaultArchitecture) {
  af::MicroUNet m = af::MicroUNet::make();
  int conv3 = 0, head = 0;
  for (const auto& s : m.layers()) (s.kind == af::LayerKind::kConv3x3 ? conv3 : head)++;
  EXPECT_EQ(conv3, 10);
  EXPECT_EQ(head, 1);
  EXPECT_EQ(m.skip_links().size(), 2u);
  EXPECT_EQ(m.downsample_factor(), 4);
  EXPECT_EQ(registry_count(m), 29795);
}

TEST(MicroUNet, LogitShape) {
  af::MicroUNet m = trained_looking_model(1);
  af::Rng rng(2);
  const Tensor x = af::testing::random_tensor({2, 1, 16, 24}, rng);
  const Tensor y = af::predict_logits(m, x);
  EXPECT_EQ(y.shape(), (af::Shape{2, 3, 16, 24}));
}

TEST(MicroUNet, InputNotDivisibleByFourIsRejected) {
  af::MicroUNet m = trained_looking_model(1);
  EXPECT_THROW(af::predict_logits(m, Tensor({1, 1, 10, 12})), af::Error);
}

TEST(MicroUNet, ZeroAdaptersLeaveLogitsUnchanged) {
  af::MicroUNet m = trained_looking_model(3);
  af::AdapterSet a = af::make_adapters(m, af::AdapterDesign::kBnConv);
  af::Rng rng(4);
  const Tensor x = af::testing::random_tensor({2, 1, 16, 16}, rng);
  EXPECT_EQ(af::testing::max_abs_diff(af::predict_logits(m, x), af::predict_logits(m, x, &a)), 0.0);
}

TEST(MicroUNet, EmptyFilterGivesEmptySet) {
  af::MicroUNet m = af::MicroUNet::make();
  EXPECT_TRUE(af::make_adapters(m, af::AdapterDesign::kBnConv, std::vector<int>{}).empty());
}

TEST(MicroUNet, AdapterOnHeadIsConfigurationError) {
  af::MicroUNet m = af::MicroUNet::make();
  const int head = m.layers().back().id;
  try {
    af::make_adapters(m, af::AdapterDesign::kBnConv, std::vector<int>{head});
    FAIL();
  } catch (const af::Error& e) {
    EXPECT_EQ(e.kind(), af::ErrorKind::kConfiguration);
  }
}

TEST(MicroUNet, SerializationRoundTripIsBitExact) {
  af::MicroUNet m = trained_looking_model(5);
  m.set_normalization({0.3f, 1.7f});
  const auto bytes = m.serialize();
  const af::MicroUNet back = af::MicroUNet::deserialize(bytes);
  EXPECT_EQ(back.serialize(), bytes);
  EXPECT_EQ(back.layout_hash(), m.layout_hash());
  auto damaged = bytes;
  damaged[damaged.size() / 2] ^= 0x10;
  EXPECT_THROW(af::MicroUNet::deserialize(damaged), af::Error);
}

TEST(MicroUNet, LayoutHashIgnoresValues) {
  EXPECT_EQ(trained_looking_model(1).layout_hash(), trained_looking_model(2).layout_hash());
  af::UNetConfig wide;
  wide.encoder_channels = {8, 24};
  EXPECT_NE(af::MicroUNet::make(wide).layout_hash(), af::MicroUNet::make().layout_hash());
}

TEST(Costs, SingleConvFlopsByHand) {
  // conv3x3 1->2 on a 4x4 output: 2 * 9 * 1 * 2 * 16.
  af::UNetConfig tiny;
  tiny.encoder_channels = {2};
  tiny.bottleneck_channels = 2;
  af::MicroUNet m = af::MicroUNet::make(tiny);
  const std::vector<std::int64_t> per = af::layer_flops(m, 4, 4);
  // First layer: conv 576 + BN 2*32 + ReLU 32.
  EXPECT_EQ(per.front(), 576 + 64 + 32);
}

TEST(Costs, ParamCountsMatchRegistry) {
  af::MicroUNet m = af::MicroUNet::make();
  af::AdapterSet a = af::make_adapters(m, af::AdapterDesign::kBnConv);
  const af::CostReport base = af::count_costs(m, nullptr, 48, 48);
  const af::CostReport with = af::count_costs(m, &a, 48, 48);
  EXPECT_EQ(base.total_params, registry_count(m));
  EXPECT_EQ(with.total_params, registry_count(m, &a));
  EXPECT_EQ(with.total_params - base.total_params, 3808);
  std::int64_t layer_sum = 0;
  for (auto f : af::layer_flops(m, 48, 48)) layer_sum += f;
  EXPECT_EQ(layer_sum, base.flops_per_image);
  EXPECT_GT(with.flops_per_image, base.flops_per_image);
}

TEST(Adapters, MemoryAccountingByHand) {
  af::AdapterSet set;
  set.insert(af::make_zero_adapter(0, 8, af::AdapterDesign::kBnConv));
  set.insert(af::make_zero_adapter(1, 64, af::AdapterDesign::kBnConv));
  const af::AdapterMemoryReport r = af::adapter_memory_report(set);
  ASSERT_EQ(r.adapters.size(), 2u);
  EXPECT_EQ(r.adapters[0].trainable_params, 88);
  EXPECT_EQ(r.adapters[0].stored_params, 104);
  EXPECT_EQ(r.adapters[0].five_o_estimate, 40);
  EXPECT_EQ(r.adapters[1].trainable_params, 2 * 64 + 64 * 64 + 64);
  EXPECT_EQ(r.adapters[1].five_o_estimate, 320);
  const af::AdapterMemoryReport empty = af::adapter_memory_report(af::AdapterSet{});
  EXPECT_EQ(empty.total_trainable, 0);
  EXPECT_EQ(empty.total_stored, 0);
  EXPECT_EQ(empty.total_five_o_estimate, 0);
}

TEST(Adapters, DesignProperties) {
  EXPECT_TRUE(af::is_fusable(af::AdapterDesign::kBnConv));
  EXPECT_TRUE(af::is_fusable(af::AdapterDesign::kConvBn));
  EXPECT_TRUE(af::is_fusable(af::AdapterDesign::kBnConvBnConv));
  EXPECT_FALSE(af::is_fusable(af::AdapterDesign::kBnReluConv));
  EXPECT_EQ(af::parse_adapter_design(af::to_string(af::AdapterDesign::kConvBn)), af::AdapterDesign::kConvBn);
  EXPECT_THROW(af::parse_adapter_design("nope"), af::Error);
}

TEST(Adapters, DuplicateInsertIsConfigurationError) {
  af::AdapterSet set;
  set.insert(af::make_zero_adapter(2, 8, af::AdapterDesign::kBnConv));
  EXPECT_THROW(set.insert(af::make_zero_adapter(2, 8, af::AdapterDesign::kBnConv)), af::Error);
}

TEST(Adapters, ChannelMismatchIsConfigurationError) {
  af::MicroUNet m = af::MicroUNet::make();
  af::AdapterSet set;
  set.insert(af::make_zero_adapter(0, 16, af::AdapterDesign::kBnConv));
  try {
    set.validate(m);
    FAIL();
  } catch (const af::Error& e) {
    EXPECT_EQ(e.kind(), af::ErrorKind::kConfiguration);
  }
}

TEST(Strategies, BatchnormTrainsOnlyBackboneAffine) {
  af::MicroUNet m = af::MicroUNet::make();
  const af::FreezeMask mask = af::set_training_strategy(m, nullptr, af::Strategy::kBatchnorm);
  std::int64_t trainable = 0, bn_channels = 0;
  for (const auto& e : af::parameter_registry(m))
    if (mask.contains(e.name)) trainable += static_cast<std::int64_t>(e.tensor->numel());
  for (const auto& s : m.layers())
    if (m.params(s.id).bn) bn_channels += m.params(s.id).bn->channels();
  EXPECT_EQ(trainable, 2 * bn_channels);
}

TEST(Strategies, AdaptersAllExcludesBackbone) {
  af::MicroUNet m = af::MicroUNet::make();
  af::AdapterSet a = af::make_adapters(m, af::AdapterDesign::kBnConv);
  const af::FreezeMask mask = af::set_training_strategy(m, &a, af::Strategy::kAdaptersAll);
  for (const auto& e : af::parameter_registry(m, &a))
    EXPECT_EQ(mask.contains(e.name), e.group == af::ParamGroup::kAdapter) << e.name;
  af::AdapterSet none;
  EXPECT_THROW(af::set_training_strategy(m, &none, af::Strategy::kAdaptersAll), af::Error);
}

TEST(Strategies, BaselineFreezesEverything) {
  af::MicroUNet m = af::MicroUNet::make();
  EXPECT_TRUE(af::set_training_strategy(m, nullptr, af::Strategy::kBaseline).trainable.empty());
  const af::FreezeMask full = af::set_training_strategy(m, nullptr, af::Strategy::kFull);
  EXPECT_EQ(full.trainable.size(), af::parameter_registry(m).size());
}
