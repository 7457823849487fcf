// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adapterforge/classic_cv.hpp"
#include "adapterforge/image.hpp"
#include "adapterforge/micro_unet.hpp"
#include "adapterforge/synth_data.hpp"

namespace adapterforge {

class AdapterSet;

/// Rows = ground truth, columns = prediction.
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> counts{};

  std::int64_t total() const;
  std::int64_t gt_count(int c) const;
  std::int64_t pred_count(int c) const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Throws kDimension on shape mismatch and kInput on class ids >= 3.
void accumulate(ConfusionMatrix& cm, const ClassMask& pred, const ClassMask& gt);

/// Pixel-pooled accuracy trace/sum. Throws kInput on an empty matrix.
double accuracy(const ConfusionMatrix& cm);
/// Mean recall over classes with at least one ground-truth pixel.
double balanced_accuracy(const ConfusionMatrix& cm);
/// Mean IoU over classes present in ground truth or prediction.
double mean_iou(const ConfusionMatrix& cm);
/// IoU of one class; nullopt when the class is absent from both.
std::optional<double> class_iou(const ConfusionMatrix& cm, int c);

/// Percent with two decimals, as reported in tables.
double round_percent(double fraction);

enum class ClassicMethod : std::uint8_t { kOtsu, kCanny, kHybrid };
const char* to_string(ClassicMethod m);
ClassicMethod parse_classic_method(const std::string& name);
ClassMask classify(ClassicMethod m, const GrayImage& img, const ClassicParams& params = {});

struct EvalReport {
  std::string method;
  std::int64_t images = 0;
  ConfusionMatrix cm;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double mean_iou = 0.0;
  std::optional<CostReport> cost;
  /// Wall-clock inference time; excluded from reproducibility comparisons.
  double ms_per_image = 0.0;

  std::string to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

/// Stacks images into a normalized (n, 1, h, w) tensor.
Tensor images_to_tensor(const std::vector<const GrayImage*>& images, Normalization norm);

/// Eval-mode predictions in batches; every image must share one size.
std::vector<ClassMask> predict_masks(const MicroUNet& model, const AdapterSet* adapters,
                                     const std::vector<const GrayImage*>& images, int batch_size = 16);

EvalReport evaluate_model(const MicroUNet& model, const AdapterSet* adapters,
                          const std::vector<LabeledScene>& scenes, const std::string& label = "model",
                          int batch_size = 16);
EvalReport evaluate_classic(ClassicMethod method, const std::vector<LabeledScene>& scenes,
                            const ClassicParams& params = {});

/// Metrics only (no timing or cost) from precomputed predictions.
ConfusionMatrix confusion_of(const std::vector<ClassMask>& preds, const std::vector<LabeledScene>& scenes);

}  // namespace adapterforge
