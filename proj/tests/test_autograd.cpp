// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <vector>

#include "adapterforge/autograd.hpp"
#include "adapterforge/error.hpp"
#include "support.hpp"

namespace af = adapterforge;
using af::Tape;
using af::Tensor;
using af::Var;

TEST(Autograd, SingleWeightConvGradientIsPatchSum) {
  Tensor x({1, 1, 3, 3}, 1.0f);
  Tensor w({1, 1, 1, 1}, {0.7f});
  Tape t;
  const Var xv = t.constant(x);
  const Var y = t.conv2d(xv, t.parameter(w, true), std::nullopt, 1, 0);
  t.backward(t.dot(y, Tensor({1, 1, 3, 3}, 1.0f)));
  ASSERT_TRUE(w.has_grad());
  EXPECT_NEAR(w.grad()[0], 9.0, 1e-5);

  // Central differences, step 1e-3.
  auto loss = [&](float wv) {
    Tensor ww({1, 1, 1, 1}, {wv});
    return af::conv2d_forward(x, ww, nullptr, 1, 0).data()[4] * 9.0;
  };
  EXPECT_NEAR((loss(0.701f) - loss(0.699f)) / 0.002, w.grad()[0], 1e-2);
}

TEST(Autograd, ConstantLossGivesZeroGrads) {
  Tensor w({1, 1, 1, 1}, {2.0f});
  Tape t;
  const Var wv = t.parameter(w, true);
  const Var y = t.conv2d(t.constant(Tensor({1, 1, 2, 2})), wv, std::nullopt, 1, 0);
  t.backward(t.dot(y, Tensor({1, 1, 2, 2}, 1.0f)));
  EXPECT_EQ(w.grad()[0], 0.0f);
}

TEST(Autograd, BackwardWithoutRecordingThrowsState) {
  Tape t(false);
  Tensor w({1, 1, 1, 1}, {1.0f});
  const Var v = t.parameter(w, true);
  try {
    t.backward(v);
    FAIL();
  } catch (const af::Error& e) {
    EXPECT_EQ(e.kind(), af::ErrorKind::kState);
  }
}

TEST(Autograd, FrozenParameterGetsNoGradient) {
  Tensor w({1, 1, 1, 1}, {1.5f});
  Tensor b({1, 1, 1, 1}, {0.5f});
  Tape t;
  const Var y = t.conv2d(t.constant(Tensor({1, 1, 2, 2}, 1.0f)), t.parameter(w, false), t.parameter(b, true), 1, 0);
  t.backward(t.dot(y, Tensor({1, 1, 2, 2}, 1.0f)));
  EXPECT_FALSE(w.has_grad());
  EXPECT_NEAR(b.grad()[0], 4.0, 1e-6);
}

TEST(Losses, UniformLogitsGiveLogThree) {
  Tensor logits({1, 3, 2, 2});
  const std::vector<std::uint8_t> y = {0, 1, 2, 1};
  const std::vector<float> w = {1, 1, 1};
  Tape t(false);
  EXPECT_NEAR(t.value(t.balanced_cce(t.constant(logits), y, w))[0], std::log(3.0), 1e-6);
}

TEST(Losses, ConfidentCorrectLogitsGiveNearZero) {
  Tensor logits({1, 3, 1, 2});
  logits[0] = 50.0f;  // pixel 0 -> class 0
  logits[3] = 50.0f;  // pixel 1 -> class 1
  const std::vector<std::uint8_t> y = {0, 1};
  const std::vector<float> w = {1, 1, 1};
  Tape t(false);
  EXPECT_LT(t.value(t.balanced_cce(t.constant(logits), y, w))[0], 1e-6);
}

TEST(Losses, TwoPixelWeightedCrossEntropyByHand) {
  // pixel 0 logits (1,0,0) label 0; pixel 1 logits (0,2,0) label 2.
  Tensor logits({1, 3, 1, 2}, {1, 0, 0, 2, 0, 0});
  const std::vector<std::uint8_t> y = {0, 2};
  const std::vector<float> w = {0.5f, 1.0f, 2.0f};
  const double e = std::exp(1.0), e2 = std::exp(2.0);
  const double l0 = -std::log(e / (e + 2.0));
  const double l1 = -std::log(1.0 / (e2 + 2.0));
  const double expected = (0.5 * l0 + 2.0 * l1) / 2.0;
  Tape t(false);
  EXPECT_NEAR(t.value(t.balanced_cce(t.constant(logits), y, w))[0], expected, 1e-6);
}

TEST(Losses, MissingClassWeightIsInputError) {
  Tape t(false);
  const std::vector<std::uint8_t> y = {0};
  const std::vector<float> w = {1, 1};
  try {
    t.balanced_cce(t.constant(Tensor({1, 3, 1, 1})), y, w);
    FAIL();
  } catch (const af::Error& e) {
    EXPECT_EQ(e.kind(), af::ErrorKind::kInput);
  }
}

namespace {

// Hand oracle for the soft overlap losses on 4 pixels.
struct Overlap {
  double dice;
  double jaccard;
};

Overlap overlap_oracle(const Tensor& logits, const std::vector<std::uint8_t>& y, double d) {
  const int n = 4;
  double dice = 0.0, jac = 0.0;
  std::vector<std::array<double, 3>> p(n);
  for (int i = 0; i < n; ++i) {
    double z = 0.0;
    for (int c = 0; c < 3; ++c) z += std::exp(logits[static_cast<std::size_t>(c * n + i)]);
    for (int c = 0; c < 3; ++c) p[i][c] = std::exp(logits[static_cast<std::size_t>(c * n + i)]) / z;
  }
  for (int c = 0; c < 3; ++c) {
    double inter = 0.0, sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double g = y[i] == c ? 1.0 : 0.0;
      inter += p[i][c] * g;
      sum += p[i][c] + g;
    }
    dice += (2.0 * inter + d) / (sum + d);
    jac += (inter + d) / (sum - inter + d);
  }
  return {1.0 - dice / 3.0, 1.0 - jac / 3.0};
}

}  // namespace

TEST(Losses, DiceAndJaccardFourPixelsByHand) {
  Tensor logits({1, 3, 2, 2}, {2, 0, -1, 0.5f, 0, 1, 0, 0, -1, 0, 3, 0});
  const std::vector<std::uint8_t> y = {0, 1, 2, 1};
  const Overlap o = overlap_oracle(logits, y, 1.0);
  Tape t(false);
  EXPECT_NEAR(t.value(t.dice_loss(t.constant(logits), y))[0], o.dice, 1e-6);
  EXPECT_NEAR(t.value(t.jaccard_loss(t.constant(logits), y))[0], o.jaccard, 1e-6);
}

TEST(Losses, OverlapLossesPerfectAndEmptyClass) {
  Tensor logits({1, 3, 1, 4});
  for (int i = 0; i < 4; ++i) logits[static_cast<std::size_t>(i)] = 40.0f;  // all class 0
  const std::vector<std::uint8_t> y = {0, 0, 0, 0};
  Tape t(false);
  const double dice = t.value(t.dice_loss(t.constant(logits), y))[0];
  const double jac = t.value(t.jaccard_loss(t.constant(logits), y))[0];
  EXPECT_TRUE(std::isfinite(dice));
  EXPECT_TRUE(std::isfinite(jac));
  EXPECT_LT(dice, 1e-5);
  EXPECT_LT(jac, 1e-5);
}

TEST(GradientCheck, EveryOpMatchesCentralDifferences) {
  std::vector<std::string> lines;
  const af::testing::GradStats s = af::testing::run_all_gradient_checks(11, 24, &lines);
  for (const auto& l : lines) SCOPED_TRACE(l);
  EXPECT_GT(s.checked, 300);
  EXPECT_EQ(s.failed, 0) << "worst " << s.worst << " at " << s.worst_where;
}
