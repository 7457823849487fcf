// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adapterforge/adapters.hpp"
#include "adapterforge/image.hpp"
#include "adapterforge/micro_unet.hpp"
#include "adapterforge/rng.hpp"
#include "adapterforge/synth_data.hpp"

namespace adapterforge {

enum class OptimizerKind : std::uint8_t { kAdam, kSgdm };
enum class LossKind : std::uint8_t { kBalancedCce, kDice, kJaccard };

const char* to_string(OptimizerKind k);
const char* to_string(LossKind k);
OptimizerKind parse_optimizer(const std::string& name);
LossKind parse_loss(const std::string& name);

struct TrainConfig {
  double lr0 = 1e-3;
  double lr_floor = 1e-6;
  int plateau_patience = 10;
  double lr_decay = 0.1;
  int max_decays = 3;
  int max_epochs = 60;
  int batch_size = 16;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  LossKind loss = LossKind::kBalancedCce;
  double crop_prob = 0.5;
  int crop_h = 32;
  int crop_w = 32;
  double hflip_prob = 0.0;
  /// Photometric Gaussian blur (image only), kernel blur_k.
  double blur_prob = 0.0;
  int blur_k = 3;
  /// Design used when the adapters strategy has to create its own set.
  AdapterDesign adapter_design = AdapterDesign::kBnConv;

  /// Throws kConfiguration on out-of-range values.
  void validate() const;
};

/// w_c = N / (3 * N_c) over the training split. A class with no pixels gets
/// weight 1 so the vector stays finite.
struct ClassWeights {
  std::array<float, kNumClasses> w{1.0f, 1.0f, 1.0f};
  static ClassWeights from_counts(const std::array<std::int64_t, kNumClasses>& counts);
};

/// Per-tensor optimizer state.
struct MomentState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
};

/// Adam (0.9, 0.999, 1e-8, bias-corrected) or SGD with momentum 0.9.
void step_optimizer(std::span<float> param, std::span<const float> grad, MomentState& state, OptimizerKind kind,
                    double lr);

/// Reduce-on-plateau: after `plateau_patience` epochs without a strict
/// improvement the rate is multiplied by lr_decay, at most max_decays times,
/// never below lr_floor.
class PlateauSchedule {
 public:
  explicit PlateauSchedule(const TrainConfig& cfg);
  /// Feeds one validation loss; returns true if the rate was cut.
  bool observe(double val_loss);
  double lr() const;
  int decays() const { return decays_; }
  /// A full patience window passed with no decay left.
  bool exhausted() const { return exhausted_; }

 private:
  double lr0_, floor_, decay_;
  int patience_, max_decays_;
  double best_;
  int since_best_ = 0;
  int decays_ = 0;
  bool exhausted_ = false;
};

/// Rate after replaying a validation-loss history.
double plateau_schedule(const std::vector<double>& val_losses, const TrainConfig& cfg);

/// Joint geometric augmentation (crop + nearest resize back, hflip) and
/// image-only blur. Throws kInput when the crop exceeds the image.
std::pair<GrayImage, ClassMask> augment(const GrayImage& image, const ClassMask& mask, const TrainConfig& cfg,
                                        Rng& rng);

Normalization fit_normalization(const std::vector<LabeledScene>& scenes);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_ba = 0.0;
  double val_loss = 0.0;
  double val_ba = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  MicroUNet model;
  AdapterSet adapters;
  FreezeMask trainable;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  double best_val_ba = 0.0;
  ClassWeights weights;

  std::string history_csv() const;
  std::string history_json() const;
};

/// Trains a copy of `model` (and of `adapters`, if given) with `strategy`.
/// Epoch 0 in the history is the untouched starting point, which is also
/// the initial best checkpoint. Scratch re-initialises from cfg.seed and refits
/// the input normalization; all other strategies keep the model's. The
/// adapters strategy creates zero adapters of cfg.adapter_design when none
/// are given. Throws kDivergence on a non-finite loss.
TrainResult train(const MicroUNet& model, const AdapterSet* adapters, Strategy strategy,
                  const std::vector<LabeledScene>& train_set, const std::vector<LabeledScene>& val_set,
                  const TrainConfig& cfg);

/// Same loop with an explicit trainable set.
TrainResult train_with_mask(const MicroUNet& model, const AdapterSet* adapters, const FreezeMask& mask,
                            const std::vector<LabeledScene>& train_set, const std::vector<LabeledScene>& val_set,
                            const TrainConfig& cfg);

/// Validation loss and balanced accuracy in eval mode.
std::pair<double, double> validation_metrics(const MicroUNet& model, const AdapterSet* adapters,
                                             const std::vector<LabeledScene>& val_set, LossKind loss,
                                             const ClassWeights& weights, int batch_size = 16);

struct LayerSweepRow {
  /// -1 for the all-frozen control row.
  int layer_id = -1;
  std::int64_t trainable_params = 0;
  double val_ba = 0.0;
};

/// One row per backbone layer: only that layer's conv (+ BN) trains.
std::vector<LayerSweepRow> layer_sweep(const MicroUNet& model, const std::vector<LabeledScene>& train_set,
                                       const std::vector<LabeledScene>& val_set, const TrainConfig& cfg);
std::string layer_sweep_csv(const std::vector<LayerSweepRow>& rows);

enum class NoiseKind : std::uint8_t { kGauss, kBlur, kBadPixel };
const char* to_string(NoiseKind k);
NoiseKind parse_noise_kind(const std::string& name);

/// gauss: + N(0, level^2); blur: odd kernel size level, sigma level/3;
/// bad_pxl: round(level * N) pixels set to 0. Level 0 / k = 1 is the identity.
GrayImage corrupt(const GrayImage& img, NoiseKind kind, double level, Rng& rng);

struct NoisePoint {
  double level = 0.0;
  double balanced_accuracy = 0.0;
  double mean_iou = 0.0;
};

/// Levels must be ascending. Image i at level j draws from
/// Rng(derive_seed(seed, j) ^ i-th SplitMix64 output).
std::vector<NoisePoint> noise_sweep(const MicroUNet& model, const AdapterSet* adapters,
                                    const std::vector<LabeledScene>& eval_set, NoiseKind kind,
                                    const std::vector<double>& levels, std::uint64_t seed);
std::string noise_sweep_csv(NoiseKind kind, const std::vector<NoisePoint>& points);

}  // namespace adapterforge
