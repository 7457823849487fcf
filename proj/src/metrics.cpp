// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adapterforge/metrics.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>

#include "adapterforge/adapters.hpp"
#include "adapterforge/error.hpp"
#include "adapterforge/ops.hpp"
#include "adapterforge/parallel.hpp"

namespace adapterforge {

std::int64_t ConfusionMatrix::total() const {
  std::int64_t s = 0;
  for (const auto& row : counts) {
    for (std::int64_t v : row) s += v;
  }
  return s;
}

std::int64_t ConfusionMatrix::gt_count(int c) const {
  std::int64_t s = 0;
  for (std::int64_t v : counts[static_cast<std::size_t>(c)]) s += v;
  return s;
}

std::int64_t ConfusionMatrix::pred_count(int c) const {
  std::int64_t s = 0;
  for (const auto& row : counts) s += row[static_cast<std::size_t>(c)];
  return s;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  for (int r = 0; r < kNumClasses; ++r) {
    for (int c = 0; c < kNumClasses; ++c) counts[r][c] += other.counts[r][c];
  }
  return *this;
}

void accumulate(ConfusionMatrix& cm, const ClassMask& pred, const ClassMask& gt) {
  if (pred.height != gt.height || pred.width != gt.width || pred.pixels.size() != gt.pixels.size()) {
    throw Error(ErrorKind::kDimension, "prediction and ground truth differ in shape");
  }
  for (std::size_t i = 0; i < gt.pixels.size(); ++i) {
    const std::uint8_t g = gt.pixels[i], p = pred.pixels[i];
    if (g >= kNumClasses || p >= kNumClasses) throw Error(ErrorKind::kInput, "class id out of range");
    ++cm.counts[g][p];
  }
}

namespace {
void require_nonempty(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw Error(ErrorKind::kInput, "confusion matrix is empty");
}
}  // namespace

double accuracy(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  std::int64_t diag = 0;
  for (int c = 0; c < kNumClasses; ++c) diag += cm.counts[c][c];
  return static_cast<double>(diag) / static_cast<double>(cm.total());
}

double balanced_accuracy(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    const std::int64_t n = cm.gt_count(c);
    if (n == 0) continue;
    sum += static_cast<double>(cm.counts[c][c]) / static_cast<double>(n);
    ++present;
  }
  return sum / present;
}

std::optional<double> class_iou(const ConfusionMatrix& cm, int c) {
  const std::int64_t inter = cm.counts[c][c];
  const std::int64_t uni = cm.gt_count(c) + cm.pred_count(c) - inter;
  if (uni == 0) return std::nullopt;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double mean_iou(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    if (auto v = class_iou(cm, c)) {
      sum += *v;
      ++present;
    }
  }
  return sum / present;
}

double round_percent(double fraction) { return std::round(fraction * 10000.0) / 100.0; }

const char* to_string(ClassicMethod m) {
  switch (m) {
    case ClassicMethod::kOtsu: return "otsu";
    case ClassicMethod::kCanny: return "canny";
    case ClassicMethod::kHybrid: return "hybrid";
  }
  return "?";
}

ClassicMethod parse_classic_method(const std::string& name) {
  if (name == "otsu") return ClassicMethod::kOtsu;
  if (name == "canny") return ClassicMethod::kCanny;
  if (name == "hybrid") return ClassicMethod::kHybrid;
  throw Error(ErrorKind::kConfiguration, "unknown classic method '" + name + "'");
}

ClassMask classify(ClassicMethod m, const GrayImage& img, const ClassicParams& params) {
  switch (m) {
    case ClassicMethod::kOtsu: return classify_otsu(img, params);
    case ClassicMethod::kCanny: return classify_canny(img, params);
    case ClassicMethod::kHybrid: return classify_hybrid(img, params);
  }
  throw Error(ErrorKind::kConfiguration, "unknown classic method");
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["method"] = method;
  j["images"] = images;
  j["pixels"] = cm.total();
  j["accuracy_pct"] = round_percent(accuracy);
  j["balanced_accuracy_pct"] = round_percent(balanced_accuracy);
  j["mean_iou_pct"] = round_percent(mean_iou);
  j["accuracy"] = accuracy;
  j["balanced_accuracy"] = balanced_accuracy;
  j["mean_iou"] = mean_iou;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
  const char* names[kNumClasses] = {"terrain", "rock", "sky"};
  for (int c = 0; c < kNumClasses; ++c) {
    nlohmann::ordered_json e;
    e["class"] = names[c];
    e["gt_pixels"] = cm.gt_count(c);
    const auto iou = class_iou(cm, c);
    e["iou"] = iou ? nlohmann::ordered_json(*iou) : nlohmann::ordered_json(nullptr);
    e["recall"] = cm.gt_count(c) > 0
                      ? nlohmann::ordered_json(static_cast<double>(cm.counts[c][c]) / cm.gt_count(c))
                      : nlohmann::ordered_json(nullptr);
    per_class.push_back(e);
  }
  j["per_class"] = per_class;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : cm.counts) rows.push_back(row);
  j["confusion_matrix"] = rows;
  if (cost) {
    nlohmann::ordered_json c;
    c["flop_convention"] = "1 multiply-accumulate = 2 FLOPs";
    c["total_params"] = cost->total_params;
    c["trainable_params"] = cost->trainable_params;
    c["flops_per_image"] = cost->flops_per_image;
    c["storage_bytes"] = cost->storage_bytes;
    j["cost"] = c;
  }
  j["ms_per_image"] = ms_per_image;
  return j.dump(2) + "\n";
}

std::string EvalReport::csv_header() {
  return "method,images,accuracy_pct,balanced_accuracy_pct,mean_iou_pct,total_params,flops_per_image,"
         "storage_bytes,ms_per_image";
}

std::string EvalReport::csv_row() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%lld,%.2f,%.2f,%.2f,%lld,%lld,%lld,%.4f", method.c_str(),
                static_cast<long long>(images), round_percent(accuracy), round_percent(balanced_accuracy),
                round_percent(mean_iou), static_cast<long long>(cost ? cost->total_params : 0),
                static_cast<long long>(cost ? cost->flops_per_image : 0),
                static_cast<long long>(cost ? cost->storage_bytes : 0), ms_per_image);
  return buf;
}

Tensor images_to_tensor(const std::vector<const GrayImage*>& images, Normalization norm) {
  if (images.empty()) throw Error(ErrorKind::kInput, "no images");
  const int h = images.front()->height, w = images.front()->width;
  Tensor t(Shape{static_cast<int>(images.size()), 1, h, w});
  const float inv = 1.0f / norm.stddev;
  for (std::size_t n = 0; n < images.size(); ++n) {
    const GrayImage& img = *images[n];
    if (img.height != h || img.width != w) throw Error(ErrorKind::kDimension, "images differ in size");
    float* dst = t.ptr() + n * static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) dst[i] = (static_cast<float>(img.pixels[i]) - norm.mean) * inv;
  }
  return t;
}

std::vector<ClassMask> predict_masks(const MicroUNet& model, const AdapterSet* adapters,
                                     const std::vector<const GrayImage*>& images, int batch_size) {
  if (batch_size < 1) throw Error(ErrorKind::kConfiguration, "batch size must be positive");
  std::vector<ClassMask> out;
  out.reserve(images.size());
  for (std::size_t first = 0; first < images.size(); first += static_cast<std::size_t>(batch_size)) {
    const std::size_t count = std::min(images.size() - first, static_cast<std::size_t>(batch_size));
    std::vector<const GrayImage*> chunk(images.begin() + static_cast<std::ptrdiff_t>(first),
                                        images.begin() + static_cast<std::ptrdiff_t>(first + count));
    const Tensor logits = predict_logits(model, images_to_tensor(chunk, model.normalization()), adapters);
    const std::vector<std::uint8_t> ids = argmax_channels(logits);
    const int h = chunk.front()->height, w = chunk.front()->width;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t n = 0; n < count; ++n) {
      ClassMask m(h, w);
      std::copy(ids.begin() + static_cast<std::ptrdiff_t>(n * plane),
                ids.begin() + static_cast<std::ptrdiff_t>((n + 1) * plane), m.pixels.begin());
      out.push_back(std::move(m));
    }
  }
  return out;
}

ConfusionMatrix confusion_of(const std::vector<ClassMask>& preds, const std::vector<LabeledScene>& scenes) {
  if (preds.size() != scenes.size()) throw Error(ErrorKind::kDimension, "prediction count mismatch");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < preds.size(); ++i) accumulate(cm, preds[i], scenes[i].mask);
  return cm;
}

namespace {
void fill_metrics(EvalReport& r) {
  r.accuracy = accuracy(r.cm);
  r.balanced_accuracy = balanced_accuracy(r.cm);
  r.mean_iou = mean_iou(r.cm);
}
}  // namespace

EvalReport evaluate_model(const MicroUNet& model, const AdapterSet* adapters, const std::vector<LabeledScene>& scenes,
                          const std::string& label, int batch_size) {
  if (scenes.empty()) throw Error(ErrorKind::kInput, "evaluation set is empty");
  std::vector<const GrayImage*> images;
  for (const auto& s : scenes) images.push_back(&s.image);
  const auto start = std::chrono::steady_clock::now();
  const std::vector<ClassMask> preds = predict_masks(model, adapters, images, batch_size);
  const auto stop = std::chrono::steady_clock::now();
  EvalReport r;
  r.method = label;
  r.images = static_cast<std::int64_t>(scenes.size());
  r.cm = confusion_of(preds, scenes);
  fill_metrics(r);
  r.cost = count_costs(model, adapters, scenes.front().image.height, scenes.front().image.width);
  r.ms_per_image = std::chrono::duration<double, std::milli>(stop - start).count() / static_cast<double>(scenes.size());
  return r;
}

EvalReport evaluate_classic(ClassicMethod method, const std::vector<LabeledScene>& scenes,
                            const ClassicParams& params) {
  if (scenes.empty()) throw Error(ErrorKind::kInput, "evaluation set is empty");
  std::vector<ClassMask> preds(scenes.size());
  const auto start = std::chrono::steady_clock::now();
  parallel_for(scenes.size(), [&](std::size_t i) { preds[i] = classify(method, scenes[i].image, params); });
  const auto stop = std::chrono::steady_clock::now();
  EvalReport r;
  r.method = to_string(method);
  r.images = static_cast<std::int64_t>(scenes.size());
  r.cm = confusion_of(preds, scenes);
  fill_metrics(r);
  r.ms_per_image = std::chrono::duration<double, std::milli>(stop - start).count() / static_cast<double>(scenes.size());
  return r;
}

}  // namespace adapterforge
