// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adapterforge/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>

#include "adapterforge/classic_cv.hpp"
#include "adapterforge/error.hpp"
#include "adapterforge/metrics.hpp"
#include "adapterforge/ops.hpp"

namespace adapterforge {

const char* to_string(OptimizerKind k) { return k == OptimizerKind::kAdam ? "adam" : "sgdm"; }

const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::kBalancedCce: return "bcce";
    case LossKind::kDice: return "dice";
    case LossKind::kJaccard: return "jaccard";
  }
  return "?";
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgdm" || name == "sgd") return OptimizerKind::kSgdm;
  throw Error(ErrorKind::kConfiguration, "unknown optimizer '" + name + "'");
}

LossKind parse_loss(const std::string& name) {
  if (name == "bcce") return LossKind::kBalancedCce;
  if (name == "dice") return LossKind::kDice;
  if (name == "jaccard") return LossKind::kJaccard;
  throw Error(ErrorKind::kConfiguration, "unknown loss '" + name + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::kConfiguration, what); };
  if (!(lr0 >= 0.0) || !(lr_floor >= 0.0) || lr_floor > lr0) fail("need 0 <= lr_floor <= lr0");
  if (!(lr_decay > 0.0 && lr_decay < 1.0)) fail("lr_decay must lie in (0, 1)");
  if (plateau_patience < 1) fail("plateau_patience must be >= 1");
  if (max_decays < 0) fail("max_decays must be >= 0");
  if (max_epochs < 0) fail("max_epochs must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  for (double p : {crop_prob, hflip_prob, blur_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) fail("probabilities must lie in [0, 1]");
  }
  if (crop_h < 1 || crop_w < 1) fail("crop size must be positive");
  if (blur_k < 1 || blur_k % 2 == 0) fail("blur_k must be odd");
}

ClassWeights ClassWeights::from_counts(const std::array<std::int64_t, kNumClasses>& counts) {
  ClassWeights cw;
  const std::int64_t total = std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
  for (int c = 0; c < kNumClasses; ++c) {
    cw.w[c] = counts[c] > 0 ? static_cast<float>(static_cast<double>(total) / (kNumClasses * static_cast<double>(counts[c])))
                            : 1.0f;
  }
  return cw;
}

void step_optimizer(std::span<float> param, std::span<const float> grad, MomentState& state, OptimizerKind kind,
                    double lr) {
  if (param.size() != grad.size()) throw Error(ErrorKind::kDimension, "optimizer: param/grad size mismatch");
  if (state.m.size() != param.size()) state.m.assign(param.size(), 0.0);
  ++state.step;
  if (kind == OptimizerKind::kSgdm) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      state.m[i] = 0.9 * state.m[i] + grad[i];
      param[i] = static_cast<float>(param[i] - lr * state.m[i]);
    }
    return;
  }
  if (state.v.size() != param.size()) state.v.assign(param.size(), 0.0);
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    param[i] = static_cast<float>(param[i] - lr * mhat / (std::sqrt(vhat) + eps));
  }
}

PlateauSchedule::PlateauSchedule(const TrainConfig& cfg)
    : lr0_(cfg.lr0),
      floor_(cfg.lr_floor),
      decay_(cfg.lr_decay),
      patience_(cfg.plateau_patience),
      max_decays_(cfg.max_decays),
      best_(std::numeric_limits<double>::infinity()) {}

bool PlateauSchedule::observe(double val_loss) {
  if (val_loss < best_) {
    best_ = val_loss;
    since_best_ = 0;
    return false;
  }
  if (++since_best_ < patience_) return false;
  since_best_ = 0;
  if (decays_ < max_decays_ && lr() > floor_) {
    ++decays_;
    return true;
  }
  exhausted_ = true;
  return false;
}

double PlateauSchedule::lr() const { return std::max(lr0_ * std::pow(decay_, decays_), floor_); }

double plateau_schedule(const std::vector<double>& val_losses, const TrainConfig& cfg) {
  PlateauSchedule s(cfg);
  for (double v : val_losses) s.observe(v);
  return s.lr();
}

namespace {

GrayImage blur_image(const GrayImage& img, int k) {
  const std::vector<std::int64_t> taps = gaussian_taps(k);
  const int h = img.height, w = img.width, r = k / 2;
  std::int64_t sum = 0;
  for (std::int64_t t : taps) sum += t;
  const std::int64_t norm = sum * sum;
  auto clampi = [](int v, int lo, int hi) { return std::min(std::max(v, lo), hi); };
  std::vector<std::int64_t> tmp(img.pixels.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::int64_t acc = 0;
      for (int i = -r; i <= r; ++i) acc += taps[static_cast<std::size_t>(i + r)] * img.at(y, clampi(x + i, 0, w - 1));
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  GrayImage out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::int64_t acc = 0;
      for (int i = -r; i <= r; ++i) {
        acc += taps[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(clampi(y + i, 0, h - 1)) * w + x];
      }
      out.at(y, x) = static_cast<std::uint8_t>((acc + norm / 2) / norm);
    }
  }
  return out;
}

}  // namespace

std::pair<GrayImage, ClassMask> augment(const GrayImage& image, const ClassMask& mask, const TrainConfig& cfg,
                                        Rng& rng) {
  if (image.height != mask.height || image.width != mask.width) {
    throw Error(ErrorKind::kDimension, "augment: image and mask differ in shape");
  }
  const int h = image.height, w = image.width;
  if (cfg.crop_h > h || cfg.crop_w > w) throw Error(ErrorKind::kInput, "crop larger than image");
  GrayImage img = image;
  ClassMask msk = mask;
  // Every draw happens regardless of outcome so the stream layout is fixed.
  const bool crop = rng.bernoulli(cfg.crop_prob);
  const int y0 = rng.uniform_int(0, h - cfg.crop_h);
  const int x0 = rng.uniform_int(0, w - cfg.crop_w);
  const bool flip = rng.bernoulli(cfg.hflip_prob);
  const bool blur = rng.bernoulli(cfg.blur_prob);
  if (crop) {
    for (int y = 0; y < h; ++y) {
      const int sy = y0 + y * cfg.crop_h / h;
      for (int x = 0; x < w; ++x) {
        const int sx = x0 + x * cfg.crop_w / w;
        img.at(y, x) = image.at(sy, sx);
        msk.at(y, x) = mask.at(sy, sx);
      }
    }
  }
  if (flip) {
    for (int y = 0; y < h; ++y) {
      std::reverse(img.pixels.begin() + static_cast<std::ptrdiff_t>(y) * w,
                   img.pixels.begin() + static_cast<std::ptrdiff_t>(y + 1) * w);
      std::reverse(msk.pixels.begin() + static_cast<std::ptrdiff_t>(y) * w,
                   msk.pixels.begin() + static_cast<std::ptrdiff_t>(y + 1) * w);
    }
  }
  if (blur) img = blur_image(img, cfg.blur_k);
  return {std::move(img), std::move(msk)};
}

Normalization fit_normalization(const std::vector<LabeledScene>& scenes) {
  double sum = 0.0, sq = 0.0;
  std::int64_t n = 0;
  for (const auto& s : scenes) {
    for (std::uint8_t p : s.image.pixels) {
      sum += p;
      sq += static_cast<double>(p) * p;
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorKind::kInput, "cannot fit normalization on an empty set");
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
  Normalization out;
  out.mean = static_cast<float>(mean);
  out.stddev = static_cast<float>(var > 0.0 ? std::sqrt(var) : 1.0);
  return out;
}

namespace {

Var loss_on(Tape& tape, Var logits, std::span<const std::uint8_t> target, LossKind kind, const ClassWeights& cw) {
  switch (kind) {
    case LossKind::kBalancedCce: return tape.balanced_cce(logits, target, cw.w);
    case LossKind::kDice: return tape.dice_loss(logits, target);
    case LossKind::kJaccard: return tape.jaccard_loss(logits, target);
  }
  throw Error(ErrorKind::kConfiguration, "unknown loss");
}

std::vector<std::uint8_t> stack_masks(const std::vector<const ClassMask*>& masks) {
  std::vector<std::uint8_t> out;
  for (const ClassMask* m : masks) out.insert(out.end(), m->pixels.begin(), m->pixels.end());
  return out;
}

std::uint64_t sample_seed(std::uint64_t epoch_seed, std::uint64_t index) {
  return SplitMix64(epoch_seed ^ (index * 0xD1B54A32D192ED03ull)).next();
}

}  // namespace

std::pair<double, double> validation_metrics(const MicroUNet& model, const AdapterSet* adapters,
                                             const std::vector<LabeledScene>& val_set, LossKind loss,
                                             const ClassWeights& weights, int batch_size) {
  if (val_set.empty()) throw Error(ErrorKind::kInput, "validation set is empty");
  double loss_sum = 0.0;
  std::int64_t pixels = 0;
  ConfusionMatrix cm;
  for (std::size_t first = 0; first < val_set.size(); first += static_cast<std::size_t>(batch_size)) {
    const std::size_t count = std::min(val_set.size() - first, static_cast<std::size_t>(batch_size));
    std::vector<const GrayImage*> images;
    std::vector<const ClassMask*> masks;
    for (std::size_t i = first; i < first + count; ++i) {
      images.push_back(&val_set[i].image);
      masks.push_back(&val_set[i].mask);
    }
    const Tensor logits = predict_logits(model, images_to_tensor(images, model.normalization()), adapters);
    const std::vector<std::uint8_t> target = stack_masks(masks);
    Tape tape(false);
    const Var l = loss_on(tape, tape.constant(logits), target, loss, weights);
    // Overlap losses are set-level; weight every batch by its pixel count either way.
    loss_sum += static_cast<double>(tape.value(l)[0]) * static_cast<double>(target.size());
    pixels += static_cast<std::int64_t>(target.size());
    const std::vector<std::uint8_t> pred = argmax_channels(logits);
    for (std::size_t i = 0; i < target.size(); ++i) ++cm.counts[target[i]][pred[i]];
  }
  return {loss_sum / static_cast<double>(pixels), balanced_accuracy(cm)};
}

TrainResult train_with_mask(const MicroUNet& model, const AdapterSet* adapters, const FreezeMask& mask,
                            const std::vector<LabeledScene>& train_set, const std::vector<LabeledScene>& val_set,
                            const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw Error(ErrorKind::kInput, "training set is empty");
  if (val_set.empty()) throw Error(ErrorKind::kInput, "validation set is empty");

  TrainResult result;
  result.model = model;
  if (adapters != nullptr) result.adapters = *adapters;
  AdapterSet* live_adapters = adapters != nullptr ? &result.adapters : nullptr;
  result.trainable = mask;
  result.weights = ClassWeights::from_counts(class_frequencies(train_set));

  MicroUNet work = result.model;
  AdapterSet work_adapters = result.adapters;
  AdapterSet* work_set = live_adapters != nullptr ? &work_adapters : nullptr;

  auto [loss0, ba0] = validation_metrics(work, work_set, val_set, cfg.loss, result.weights, cfg.batch_size);
  PlateauSchedule schedule(cfg);
  result.history.push_back({0, std::nan(""), std::nan(""), loss0, ba0, schedule.lr()});
  result.best_epoch = 0;
  result.best_val_loss = loss0;
  result.best_val_ba = ba0;
  schedule.observe(loss0);
  if (mask.trainable.empty()) return result;

  std::vector<ParamEntry> registry = parameter_registry(work, work_set);
  std::vector<ParamEntry*> active;
  for (ParamEntry& e : registry) {
    if (mask.contains(e.name)) active.push_back(&e);
  }
  std::map<std::string, MomentState> states;
  const ForwardOptions options{Mode::kTrain, &mask};
  const SplitMix64 epoch_seeds_base(cfg.seed);
  SplitMix64 epoch_seeds = epoch_seeds_base;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double lr = schedule.lr();
    const std::uint64_t epoch_seed = epoch_seeds.next();
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(epoch_seed);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i - 1)))]);
    }

    double loss_sum = 0.0;
    std::int64_t loss_pixels = 0;
    ConfusionMatrix train_cm;
    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count = std::min(order.size() - first, static_cast<std::size_t>(cfg.batch_size));
      std::vector<GrayImage> images;
      std::vector<ClassMask> masks;
      for (std::size_t k = first; k < first + count; ++k) {
        Rng rng(sample_seed(epoch_seed, k));
        auto [img, msk] = augment(train_set[order[k]].image, train_set[order[k]].mask, cfg, rng);
        images.push_back(std::move(img));
        masks.push_back(std::move(msk));
      }
      std::vector<const GrayImage*> image_ptrs;
      std::vector<const ClassMask*> mask_ptrs;
      for (std::size_t k = 0; k < count; ++k) {
        image_ptrs.push_back(&images[k]);
        mask_ptrs.push_back(&masks[k]);
      }
      const std::vector<std::uint8_t> target = stack_masks(mask_ptrs);

      Tape tape(true);
      const Var input = tape.constant(images_to_tensor(image_ptrs, work.normalization()));
      const Var logits = forward(tape, work, work_set, input, options);
      const Var loss = loss_on(tape, logits, target, cfg.loss, result.weights);
      const float loss_value = tape.value(loss)[0];
      if (!std::isfinite(loss_value)) {
        char msg[160];
        std::snprintf(msg, sizeof(msg), "non-finite training loss at epoch %d, batch %zu (lr %.3g)", epoch,
                      first / static_cast<std::size_t>(cfg.batch_size), lr);
        throw Error(ErrorKind::kDivergence, msg);
      }
      tape.backward(loss);
      for (ParamEntry* e : active) {
        if (!e->tensor->has_grad()) continue;
        step_optimizer(e->tensor->data(), e->tensor->grad(), states[e->name], cfg.optimizer, lr);
        e->tensor->zero_grad();
      }
      loss_sum += static_cast<double>(loss_value) * static_cast<double>(target.size());
      loss_pixels += static_cast<std::int64_t>(target.size());
      const std::vector<std::uint8_t> pred = argmax_channels(tape.value(logits));
      for (std::size_t i = 0; i < target.size(); ++i) ++train_cm.counts[target[i]][pred[i]];
    }

    for (ParamEntry* e : active) e->tensor->drop_grad();
    auto [val_loss, val_ba] = validation_metrics(work, work_set, val_set, cfg.loss, result.weights, cfg.batch_size);
    if (!std::isfinite(val_loss)) {
      throw Error(ErrorKind::kDivergence, "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back(
        {epoch, loss_sum / static_cast<double>(loss_pixels), balanced_accuracy(train_cm), val_loss, val_ba, lr});
    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_val_ba = val_ba;
      result.best_epoch = epoch;
      result.model = work;
      if (live_adapters != nullptr) result.adapters = work_adapters;
    }
    schedule.observe(val_loss);
    if (schedule.exhausted()) break;
  }
  // Checkpoints are stored without gradient buffers.
  for (ParamEntry& e : parameter_registry(result.model, live_adapters)) e.tensor->drop_grad();
  return result;
}

TrainResult train(const MicroUNet& model, const AdapterSet* adapters, Strategy strategy,
                  const std::vector<LabeledScene>& train_set, const std::vector<LabeledScene>& val_set,
                  const TrainConfig& cfg) {
  MicroUNet start = model;
  std::optional<AdapterSet> own;
  const AdapterSet* use = nullptr;
  if (strategy == Strategy::kAdaptersAll) {
    own = (adapters != nullptr && !adapters->empty()) ? *adapters : make_adapters(start, cfg.adapter_design);
    own->validate(start);
    use = &*own;
  } else if (strategy == Strategy::kScratch) {
    if (train_set.empty()) throw Error(ErrorKind::kInput, "training set is empty");
    start.init_random(cfg.seed);
    start.set_normalization(fit_normalization(train_set));
  }
  AdapterSet scratch_set = use != nullptr ? *use : AdapterSet();
  const FreezeMask mask = set_training_strategy(start, use != nullptr ? &scratch_set : nullptr, strategy);
  return train_with_mask(start, use, mask, train_set, val_set, cfg);
}

std::string TrainResult::history_csv() const {
  std::string out = "epoch,split,loss,balanced_accuracy,lr\n";
  char buf[160];
  for (const EpochRecord& r : history) {
    if (r.epoch > 0) {
      std::snprintf(buf, sizeof(buf), "%d,train,%.9g,%.9g,%.9g\n", r.epoch, r.train_loss, r.train_ba, r.lr);
      out += buf;
    }
    std::snprintf(buf, sizeof(buf), "%d,val,%.9g,%.9g,%.9g\n", r.epoch, r.val_loss, r.val_ba, r.lr);
    out += buf;
  }
  return out;
}

std::string TrainResult::history_json() const {
  nlohmann::ordered_json j;
  j["best_epoch"] = best_epoch;
  j["best_val_loss"] = best_val_loss;
  j["best_val_balanced_accuracy"] = best_val_ba;
  j["class_weights"] = weights.w;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const EpochRecord& r : history) {
    nlohmann::ordered_json e;
    e["epoch"] = r.epoch;
    e["train_loss"] = r.epoch > 0 ? nlohmann::ordered_json(r.train_loss) : nlohmann::ordered_json(nullptr);
    e["train_balanced_accuracy"] = r.epoch > 0 ? nlohmann::ordered_json(r.train_ba) : nlohmann::ordered_json(nullptr);
    e["val_loss"] = r.val_loss;
    e["val_balanced_accuracy"] = r.val_ba;
    e["lr"] = r.lr;
    rows.push_back(e);
  }
  j["epochs"] = rows;
  return j.dump(2) + "\n";
}

std::vector<LayerSweepRow> layer_sweep(const MicroUNet& model, const std::vector<LabeledScene>& train_set,
                                       const std::vector<LabeledScene>& val_set, const TrainConfig& cfg) {
  std::vector<LayerSweepRow> rows;
  MicroUNet probe = model;
  const std::vector<ParamEntry> registry = parameter_registry(probe);
  {
    const TrainResult control = train_with_mask(model, nullptr, FreezeMask{}, train_set, val_set, cfg);
    rows.push_back({-1, 0, control.best_val_ba});
  }
  for (const LayerSpec& spec : model.layers()) {
    FreezeMask mask;
    std::int64_t count = 0;
    for (const ParamEntry& e : registry) {
      if (e.group != ParamGroup::kAdapter && e.layer_id == spec.id) {
        mask.trainable.insert(e.name);
        count += static_cast<std::int64_t>(e.tensor->numel());
      }
    }
    const TrainResult r = train_with_mask(model, nullptr, mask, train_set, val_set, cfg);
    rows.push_back({spec.id, count, r.best_val_ba});
  }
  return rows;
}

std::string layer_sweep_csv(const std::vector<LayerSweepRow>& rows) {
  std::string out = "layer,trainable_params,val_balanced_accuracy\n";
  char buf[128];
  for (const auto& r : rows) {
    if (r.layer_id < 0) {
      std::snprintf(buf, sizeof(buf), "frozen,%lld,%.9g\n", static_cast<long long>(r.trainable_params), r.val_ba);
    } else {
      std::snprintf(buf, sizeof(buf), "%d,%lld,%.9g\n", r.layer_id, static_cast<long long>(r.trainable_params), r.val_ba);
    }
    out += buf;
  }
  return out;
}

const char* to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::kGauss: return "gauss";
    case NoiseKind::kBlur: return "blur";
    case NoiseKind::kBadPixel: return "bad_pxl";
  }
  return "?";
}

NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "gauss") return NoiseKind::kGauss;
  if (name == "blur") return NoiseKind::kBlur;
  if (name == "bad_pxl") return NoiseKind::kBadPixel;
  throw Error(ErrorKind::kConfiguration, "unknown noise kind '" + name + "'");
}

GrayImage corrupt(const GrayImage& img, NoiseKind kind, double level, Rng& rng) {
  switch (kind) {
    case NoiseKind::kGauss: {
      if (level < 0.0) throw Error(ErrorKind::kInput, "gaussian noise level must be >= 0");
      if (level == 0.0) return img;
      GrayImage out = img;
      for (std::uint8_t& p : out.pixels) {
        p = static_cast<std::uint8_t>(std::clamp(std::lround(p + rng.normal(0.0, level)), 0L, 255L));
      }
      return out;
    }
    case NoiseKind::kBlur: {
      const int k = static_cast<int>(std::lround(level));
      if (k < 1 || k % 2 == 0 || static_cast<double>(k) != level) {
        throw Error(ErrorKind::kInput, "blur level must be an odd kernel size");
      }
      return blur_image(img, k);
    }
    case NoiseKind::kBadPixel: {
      if (level < 0.0 || level > 1.0) throw Error(ErrorKind::kInput, "bad pixel fraction must lie in [0, 1]");
      GrayImage out = img;
      const std::size_t n = out.pixels.size();
      const std::size_t dead = static_cast<std::size_t>(std::llround(level * static_cast<double>(n)));
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      for (std::size_t i = 0; i < dead; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(n - 1 - i)));
        std::swap(idx[i], idx[j]);
        out.pixels[idx[i]] = 0;
      }
      return out;
    }
  }
  throw Error(ErrorKind::kConfiguration, "unknown noise kind");
}

std::vector<NoisePoint> noise_sweep(const MicroUNet& model, const AdapterSet* adapters,
                                    const std::vector<LabeledScene>& eval_set, NoiseKind kind,
                                    const std::vector<double>& levels, std::uint64_t seed) {
  if (eval_set.empty()) throw Error(ErrorKind::kInput, "evaluation set is empty");
  if (!std::is_sorted(levels.begin(), levels.end())) throw Error(ErrorKind::kInput, "noise levels must be ascending");
  std::vector<NoisePoint> out;
  for (std::size_t j = 0; j < levels.size(); ++j) {
    SplitMix64 per_image(derive_seed(seed, j));
    std::vector<LabeledScene> noisy;
    noisy.reserve(eval_set.size());
    for (const LabeledScene& s : eval_set) {
      Rng rng(per_image.next());
      LabeledScene c;
      c.image = corrupt(s.image, kind, levels[j], rng);
      c.mask = s.mask;
      c.meta = s.meta;
      noisy.push_back(std::move(c));
    }
    std::vector<const GrayImage*> images;
    for (const auto& s : noisy) images.push_back(&s.image);
    const ConfusionMatrix cm = confusion_of(predict_masks(model, adapters, images), noisy);
    out.push_back({levels[j], balanced_accuracy(cm), mean_iou(cm)});
  }
  return out;
}

std::string noise_sweep_csv(NoiseKind kind, const std::vector<NoisePoint>& points) {
  std::string out = "noise,level,balanced_accuracy,mean_iou\n";
  char buf[128];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%s,%.6g,%.9g,%.9g\n", to_string(kind), p.level, p.balanced_accuracy, p.mean_iou);
    out += buf;
  }
  return out;
}

}  // namespace adapterforge
