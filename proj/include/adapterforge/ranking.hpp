// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adapterforge/adapters.hpp"
#include "adapterforge/micro_unet.hpp"
#include "adapterforge/synth_data.hpp"

namespace adapterforge {

enum class ScoreKind : std::uint8_t { kSqNorm, kParamCount, kSqNormPerParam };
const char* to_string(ScoreKind k);
ScoreKind parse_score_kind(const std::string& name);

/// Which parameters enter the norm: the 1x1 conv weights and biases only, or
/// every trainable adapter parameter (BN affine terms included).
enum class ScoreScope : std::uint8_t { kConvOnly, kAllTrainable };

struct AdapterScore {
  int layer_id = 0;
  ScoreKind kind = ScoreKind::kSqNormPerParam;
  double value = 0.0;
  double sq_norm = 0.0;
  /// Parameters the norm runs over.
  std::int64_t scored_params = 0;
  /// Trainable parameters of the adapter (what a prefix costs).
  std::int64_t trainable_params = 0;
  /// Bytes of this adapter's record in an update pack.
  std::int64_t param_bytes = 0;
};

/// sq_norm = sum of squares, param_count = count, sq_norm_per_param = ratio.
AdapterScore score_adapter(const Adapter& adapter, ScoreKind kind, ScoreScope scope = ScoreScope::kConvOnly);

/// Descending score; equal scores put the smaller layer id first.
std::vector<AdapterScore> rank_adapters(const AdapterSet& adapters, ScoreKind kind,
                                        ScoreScope scope = ScoreScope::kConvOnly);

struct CurvePoint {
  int k = 0;
  std::int64_t cumulative_params = 0;
  std::int64_t cumulative_bytes = 0;
  double balanced_accuracy = 0.0;
};

struct SelectionResult {
  ScoreKind kind = ScoreKind::kSqNormPerParam;
  std::vector<AdapterScore> ranked;
  /// k = 0..K; point k has the top-k adapters active and the rest removed.
  std::vector<CurvePoint> curve;
  int chosen_prefix_len = 0;
  /// Absolute balanced-accuracy drop accepted (0.005 = half a point).
  double budget_drop = 0.005;

  std::vector<int> ordered_layer_ids() const;
  std::vector<int> chosen_layer_ids() const;
  double max_balanced_accuracy() const;

  std::string to_json() const;
  std::string pareto_csv() const;
};

/// Smallest k with curve[k] >= max - budget_drop.
int select_prefix(const std::vector<double>& balanced_accuracy, double budget_drop);

/// First k whose accuracy reaches max - budget_drop, as cumulative params.
std::int64_t params_to_reach(const SelectionResult& result, double budget_drop);

/// Throws kInput on an empty validation set.
SelectionResult rank_and_select(const MicroUNet& model, const AdapterSet& adapters,
                                const std::vector<LabeledScene>& val_set, ScoreKind kind,
                                double budget_drop = 0.005, ScoreScope scope = ScoreScope::kConvOnly);

std::vector<CurvePoint> parse_pareto_csv(const std::string& text);
/// Layer ids chosen in a selection JSON document.
std::vector<int> parse_selection_json(const std::string& text);

}  // namespace adapterforge
