// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "adapterforge/error.hpp"
#include "adapterforge/ops.hpp"
#include "adapterforge/rng.hpp"
#include "support.hpp"

namespace af = adapterforge;
using af::Shape;
using af::Tensor;

namespace {

Tensor grid3x3() { return Tensor({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}); }

}  // namespace

TEST(Conv2d, AllOnesKernelCenterIsSumOfInput) {
  af::ConvParams c = af::make_conv(1, 1, 3, false);
  c.padding = 1;
  for (float& v : c.weight.data()) v = 1.0f;
  const Tensor y = af::conv2d_forward(grid3x3(), c);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  EXPECT_FLOAT_EQ(y[4], 45.0f);
  // Corner sees the 2x2 block 1+2+4+5.
  EXPECT_FLOAT_EQ(y[0], 12.0f);
}

TEST(Conv2d, ZeroWeightGivesZeroOutput) {
  af::Rng rng(3);
  const Tensor x = af::testing::random_tensor({2, 3, 5, 5}, rng);
  const Tensor w({4, 3, 3, 3});
  const Tensor y = af::conv2d_forward(x, w, nullptr, 1, 1);
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Conv2d, IdentityPointwiseKernelCopiesInput) {
  af::Rng rng(4);
  const Tensor x = af::testing::random_tensor({2, 3, 4, 5}, rng);
  Tensor w({3, 3, 1, 1});
  for (int i = 0; i < 3; ++i) w[static_cast<std::size_t>(i * 3 + i)] = 1.0f;
  const Tensor y = af::conv2d_forward(x, w, nullptr, 1, 0);
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_EQ(af::testing::max_abs_diff(x, y), 0.0);
}

TEST(Conv2d, StrideTwoHalvesExtent) {
  EXPECT_EQ(af::conv_output_extent(8, 3, 2, 1), 4);
  EXPECT_EQ(af::conv_output_extent(5, 3, 1, 0), 3);
}

TEST(Conv2d, ChannelMismatchThrowsDimension) {
  const Tensor x({1, 2, 4, 4});
  const Tensor w({1, 3, 3, 3});
  try {
    af::conv2d_forward(x, w, nullptr, 1, 1);
    FAIL();
  } catch (const af::Error& e) {
    EXPECT_EQ(e.kind(), af::ErrorKind::kDimension);
  }
}

TEST(Conv2d, IsLinearInInput) {
  af::Rng rng(5);
  const Tensor a = af::testing::random_tensor({1, 2, 5, 5}, rng);
  const Tensor b = af::testing::random_tensor({1, 2, 5, 5}, rng);
  const Tensor w = af::testing::random_tensor({3, 2, 3, 3}, rng);
  Tensor combo(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) combo[i] = 2.0f * a[i] - 0.5f * b[i];
  const Tensor ya = af::conv2d_forward(a, w, nullptr, 1, 1);
  const Tensor yb = af::conv2d_forward(b, w, nullptr, 1, 1);
  const Tensor yc = af::conv2d_forward(combo, w, nullptr, 1, 1);
  for (std::size_t i = 0; i < yc.numel(); ++i) EXPECT_NEAR(yc[i], 2.0f * ya[i] - 0.5f * yb[i], 1e-5);
}

TEST(BatchNorm, EvalHandValue) {
  af::BatchNormParams bn = af::make_batchnorm(1);
  bn.gamma[0] = 3.0f;
  bn.beta[0] = 0.5f;
  bn.running_mean[0] = 1.0f;
  bn.running_var[0] = 1.0f;
  const Tensor y = af::batchnorm_eval(Tensor({1, 1, 1, 1}, {2.0f}), bn);
  EXPECT_NEAR(y[0], 3.49998, 1e-4);
}

TEST(BatchNorm, IdentityParametersPassThrough) {
  af::Rng rng(6);
  af::BatchNormParams bn = af::make_batchnorm(2);
  for (float& v : bn.running_var) v = 1.0f - bn.eps;
  const Tensor x = af::testing::random_tensor({2, 2, 3, 3}, rng);
  EXPECT_LT(af::testing::max_abs_diff(af::batchnorm_eval(x, bn), x), 1e-6);
}

TEST(BatchNorm, AffineInInput) {
  af::Rng rng(7);
  af::BatchNormParams bn = af::make_batchnorm(3);
  af::testing::randomize_bn(bn, rng);
  const Tensor x = af::testing::random_tensor({1, 3, 2, 2}, rng);
  const Tensor y = af::batchnorm_eval(x, bn);
  for (int c = 0; c < 3; ++c) {
    const double s = bn.gamma[static_cast<std::size_t>(c)] / std::sqrt(bn.running_var[static_cast<std::size_t>(c)] + bn.eps);
    for (int p = 0; p < 4; ++p) {
      const std::size_t i = static_cast<std::size_t>(c * 4 + p);
      EXPECT_NEAR(y[i], s * (x[i] - bn.running_mean[static_cast<std::size_t>(c)]) + bn.beta[static_cast<std::size_t>(c)], 1e-5);
    }
  }
}

TEST(BatchNorm, ConstantInputInTrainModeGivesBeta) {
  af::BatchNormParams bn = af::make_batchnorm(2);
  bn.beta[0] = 0.25f;
  bn.beta[1] = -1.5f;
  const Tensor x({3, 2, 2, 2}, 7.0f);
  const Tensor y = af::batchnorm_forward(x, bn, af::Mode::kTrain);
  for (int n = 0; n < 3; ++n)
    for (int c = 0; c < 2; ++c)
      for (int p = 0; p < 4; ++p) EXPECT_FLOAT_EQ(y[static_cast<std::size_t>((n * 2 + c) * 4 + p)], bn.beta[static_cast<std::size_t>(c)]);
}

TEST(BatchNorm, TrainModeUpdatesRunningStatistics) {
  af::BatchNormParams bn = af::make_batchnorm(1);
  const Tensor x({1, 1, 1, 2}, {1.0f, 3.0f});
  af::batchnorm_forward(x, bn, af::Mode::kTrain);
  EXPECT_NEAR(bn.running_mean[0], 0.2, 1e-6);
  EXPECT_GT(bn.running_var[0], 1.0f);
}

TEST(BatchNorm, EmptyBatchInTrainModeIsDegenerate) {
  af::BatchNormParams bn = af::make_batchnorm(1);
  try {
    af::batchnorm_forward(Tensor({0, 1, 2, 2}), bn, af::Mode::kTrain);
    FAIL();
  } catch (const af::Error& e) {
    EXPECT_EQ(e.kind(), af::ErrorKind::kDegenerateStatistics);
  }
}

TEST(Elementwise, ReluMaxpoolAdd) {
  const Tensor r = af::relu(Tensor({1, 1, 1, 3}, {-1.0f, 0.0f, 2.0f}));
  EXPECT_EQ(r[0], 0.0f);
  EXPECT_EQ(r[1], 0.0f);
  EXPECT_EQ(r[2], 2.0f);

  const Tensor m = af::maxpool2x2(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
  ASSERT_EQ(m.numel(), 1u);
  EXPECT_EQ(m[0], 4.0f);

  af::Rng rng(8);
  const Tensor x = af::testing::random_tensor({2, 2, 3, 3}, rng);
  EXPECT_EQ(af::testing::max_abs_diff(af::add(x, Tensor(x.shape())), x), 0.0);
}

TEST(Elementwise, AddShapeMismatchThrows) {
  EXPECT_THROW(af::add(Tensor({1, 1, 2, 2}), Tensor({1, 1, 2, 3})), af::Error);
}

TEST(Elementwise, UpsampleAndConcat) {
  const Tensor u = af::upsample_nearest2x(Tensor({1, 1, 1, 2}, {5, 6}));
  EXPECT_EQ(u.shape(), (Shape{1, 1, 2, 4}));
  EXPECT_EQ(u[0], 5.0f);
  EXPECT_EQ(u[1], 5.0f);
  EXPECT_EQ(u[6], 6.0f);
  const Tensor c = af::concat_channels(Tensor({1, 1, 1, 1}, {1}), Tensor({1, 2, 1, 1}, {2, 3}));
  EXPECT_EQ(c.shape(), (Shape{1, 3, 1, 1}));
  EXPECT_EQ(c[2], 3.0f);
}

TEST(Rng, SeedsReproduce) {
  af::Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  af::SplitMix64 sm(7);
  sm.next();
  const std::uint64_t second = sm.next();
  EXPECT_EQ(af::derive_seed(7, 1), second);
}
