// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "adapterforge/error.hpp"
#include "adapterforge/metrics.hpp"
#include "adapterforge/synth_data.hpp"

namespace af = adapterforge;
using af::ConfusionMatrix;

namespace {

ConfusionMatrix from_rows(std::initializer_list<std::initializer_list<std::int64_t>> rows) {
  ConfusionMatrix cm;
  int r = 0;
  for (const auto& row : rows) {
    int c = 0;
    for (std::int64_t v : row) cm.counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(c++)] = v;
    ++r;
  }
  return cm;
}

af::ClassMask mask_of(int h, int w, std::initializer_list<std::uint8_t> v) {
  af::ClassMask m(h, w);
  std::copy(v.begin(), v.end(), m.pixels.begin());
  return m;
}

}  // namespace

TEST(BalancedAccuracy, RecallsPointEightSixFour) {
  const ConfusionMatrix cm = from_rows({{8, 1, 1}, {2, 6, 2}, {3, 3, 4}});
  EXPECT_DOUBLE_EQ(af::balanced_accuracy(cm), 0.6);
}

TEST(BalancedAccuracy, IdentityIsOne) {
  EXPECT_DOUBLE_EQ(af::balanced_accuracy(from_rows({{5, 0, 0}, {0, 7, 0}, {0, 0, 1}})), 1.0);
}

TEST(BalancedAccuracy, AbsentClassIsExcluded) {
  EXPECT_DOUBLE_EQ(af::balanced_accuracy(from_rows({{8, 2, 0}, {4, 6, 0}, {0, 0, 0}})), 0.7);
}

TEST(BalancedAccuracy, EmptyMatrixIsInputError) {
  for (auto fn : {&af::balanced_accuracy, &af::mean_iou, &af::accuracy}) {
    try {
      fn(ConfusionMatrix{});
      FAIL();
    } catch (const af::Error& e) {
      EXPECT_EQ(e.kind(), af::ErrorKind::kInput);
    }
  }
}

TEST(MeanIou, IntersectionSixUnionTen) {
  const ConfusionMatrix cm = from_rows({{10, 2, 0}, {2, 6, 0}, {0, 0, 0}});
  EXPECT_DOUBLE_EQ(*af::class_iou(cm, 1), 0.6);
  EXPECT_FALSE(af::class_iou(cm, 2).has_value());
  EXPECT_DOUBLE_EQ(af::mean_iou(cm), (0.6 + 10.0 / 14.0) / 2.0);
}

TEST(MeanIou, PerfectIsOne) {
  EXPECT_DOUBLE_EQ(af::mean_iou(from_rows({{3, 0, 0}, {0, 4, 0}, {0, 0, 0}})), 1.0);
}

TEST(MeanIou, PredictedOnlyClassCountsWithZero) {
  // Class 2 never in ground truth but predicted once: IoU 0 joins the mean.
  const ConfusionMatrix cm = from_rows({{3, 0, 1}, {0, 4, 0}, {0, 0, 0}});
  EXPECT_DOUBLE_EQ(af::mean_iou(cm), (0.75 + 1.0 + 0.0) / 3.0);
}

TEST(Accuracy, TraceOverSum) {
  const ConfusionMatrix cm = from_rows({{8, 1, 1}, {2, 6, 2}, {3, 3, 4}});
  EXPECT_NEAR(af::accuracy(cm), 18.0 / 30.0, 1e-12);
  EXPECT_EQ(cm.total(), 30);
  EXPECT_EQ(cm.gt_count(1), 10);
  EXPECT_EQ(cm.pred_count(0), 13);
}

TEST(Accumulate, PerfectPredictionIsDiagonal) {
  const af::ClassMask gt = mask_of(2, 2, {0, 1, 2, 1});
  ConfusionMatrix cm;
  af::accumulate(cm, gt, gt);
  EXPECT_EQ(cm, from_rows({{1, 0, 0}, {0, 2, 0}, {0, 0, 1}}));
  ConfusionMatrix empty;
  af::accumulate(empty, af::ClassMask(0, 0), af::ClassMask(0, 0));
  EXPECT_EQ(empty, ConfusionMatrix{});
}

TEST(Accumulate, OrderIndependent) {
  const af::ClassMask g1 = mask_of(1, 3, {0, 1, 2}), p1 = mask_of(1, 3, {0, 2, 2});
  const af::ClassMask g2 = mask_of(1, 3, {1, 1, 0}), p2 = mask_of(1, 3, {1, 0, 0});
  ConfusionMatrix a, b;
  af::accumulate(a, p1, g1);
  af::accumulate(a, p2, g2);
  af::accumulate(b, p2, g2);
  af::accumulate(b, p1, g1);
  EXPECT_EQ(a, b);
}

TEST(Accumulate, ShapeMismatchAndBadClass) {
  ConfusionMatrix cm;
  try {
    af::accumulate(cm, af::ClassMask(2, 2), af::ClassMask(2, 3));
    FAIL();
  } catch (const af::Error& e) {
    EXPECT_EQ(e.kind(), af::ErrorKind::kDimension);
  }
  EXPECT_THROW(af::accumulate(cm, mask_of(1, 1, {3}), mask_of(1, 1, {0})), af::Error);
}

TEST(BalancedAccuracy, DuplicationInvariance) {
  // Matched: duplicating every image keeps per-class ratios, so BA is unchanged.
  const af::ClassMask g1 = mask_of(1, 4, {0, 0, 0, 1}), p1 = mask_of(1, 4, {0, 1, 0, 1});
  const af::ClassMask g2 = mask_of(1, 4, {1, 1, 0, 0}), p2 = mask_of(1, 4, {0, 1, 0, 0});
  ConfusionMatrix once, twice, skewed;
  for (auto* cm : {&once, &twice, &twice, &skewed, &skewed}) {
    af::accumulate(*cm, p1, g1);
    if (cm != &skewed) af::accumulate(*cm, p2, g2);
  }
  af::accumulate(skewed, p2, g2);
  EXPECT_DOUBLE_EQ(af::balanced_accuracy(once), af::balanced_accuracy(twice));
  // Counterexample: duplicating only the first image shifts the ratios.
  EXPECT_NE(af::balanced_accuracy(once), af::balanced_accuracy(skewed));
}

TEST(Percent, TwoDecimals) {
  EXPECT_DOUBLE_EQ(af::round_percent(0.970934), 97.09);
  EXPECT_DOUBLE_EQ(af::round_percent(0.5), 50.0);
}

TEST(Evaluate, ParallelClassicMatchesSerial) {
  const af::Splits s = af::make_splits(0, 0, 12, af::default_scene_spec(af::Domain::kMoon), 3);
  const af::EvalReport r = af::evaluate_classic(af::ClassicMethod::kHybrid, s.test);
  ConfusionMatrix serial;
  for (const auto& sc : s.test) af::accumulate(serial, af::classify(af::ClassicMethod::kHybrid, sc.image), sc.mask);
  EXPECT_EQ(r.cm, serial);
  EXPECT_DOUBLE_EQ(r.balanced_accuracy, af::balanced_accuracy(serial));
  EXPECT_EQ(r.images, 12);
  EXPECT_GT(r.ms_per_image, 0.0);
  const af::EvalReport again = af::evaluate_classic(af::ClassicMethod::kHybrid, s.test);
  EXPECT_EQ(again.cm, r.cm);
}

TEST(Evaluate, ModelReportCarriesCosts) {
  const af::Splits s = af::make_splits(0, 0, 4, af::default_scene_spec(af::Domain::kMoon), 4);
  af::MicroUNet m = af::MicroUNet::make();
  m.init_random(1);
  const af::EvalReport r = af::evaluate_model(m, nullptr, s.test, "probe");
  ASSERT_TRUE(r.cost.has_value());
  EXPECT_EQ(r.cost->total_params, 29795);
  EXPECT_DOUBLE_EQ(r.balanced_accuracy, af::balanced_accuracy(r.cm));
  EXPECT_EQ(r.cm.total(), 4 * 48 * 48);
  EXPECT_NE(r.to_json().find("\"probe\""), std::string::npos);
  const std::string header = af::EvalReport::csv_header(), row = r.csv_row();
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
}

TEST(ClassicMethod, ParseRejectsUnknown) {
  EXPECT_EQ(af::parse_classic_method("otsu"), af::ClassicMethod::kOtsu);
  EXPECT_EQ(af::parse_classic_method("hybrid"), af::ClassicMethod::kHybrid);
  EXPECT_THROW(af::parse_classic_method("sobel"), af::Error);
}
