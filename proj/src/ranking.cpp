// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adapterforge/ranking.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "adapterforge/error.hpp"
#include "adapterforge/metrics.hpp"
#include "adapterforge/parallel.hpp"
#include "adapterforge/update_pack.hpp"

namespace adapterforge {

const char* to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::kSqNorm: return "sq_norm";
    case ScoreKind::kParamCount: return "param_count";
    case ScoreKind::kSqNormPerParam: return "sq_norm_per_param";
  }
  return "?";
}

ScoreKind parse_score_kind(const std::string& name) {
  if (name == "sq_norm") return ScoreKind::kSqNorm;
  if (name == "param_count") return ScoreKind::kParamCount;
  if (name == "sq_norm_per_param") return ScoreKind::kSqNormPerParam;
  throw Error(ErrorKind::kConfiguration, "unknown score '" + name + "'");
}

AdapterScore score_adapter(const Adapter& adapter, ScoreKind kind, ScoreScope scope) {
  AdapterScore s;
  s.layer_id = adapter.layer_id;
  s.kind = kind;
  auto add = [&s](const Tensor& t) {
    for (float v : t.data()) s.sq_norm += static_cast<double>(v) * v;
    s.scored_params += static_cast<std::int64_t>(t.numel());
  };
  for (const ConvParams& c : adapter.convs) {
    add(c.weight);
    if (c.bias) add(*c.bias);
  }
  if (scope == ScoreScope::kAllTrainable) {
    for (const BatchNormParams& bn : adapter.bns) {
      add(bn.gamma);
      add(bn.beta);
    }
  }
  s.trainable_params = adapter.trainable_params();
  s.param_bytes = static_cast<std::int64_t>(packed_record_size(adapter.design, adapter.channels()));
  switch (kind) {
    case ScoreKind::kSqNorm: s.value = s.sq_norm; break;
    case ScoreKind::kParamCount: s.value = static_cast<double>(s.scored_params); break;
    case ScoreKind::kSqNormPerParam:
      s.value = s.scored_params > 0 ? s.sq_norm / static_cast<double>(s.scored_params) : 0.0;
      break;
  }
  return s;
}

std::vector<AdapterScore> rank_adapters(const AdapterSet& adapters, ScoreKind kind, ScoreScope scope) {
  std::vector<AdapterScore> out;
  for (const auto& [id, a] : adapters.items()) out.push_back(score_adapter(a, kind, scope));
  std::stable_sort(out.begin(), out.end(), [](const AdapterScore& a, const AdapterScore& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.layer_id < b.layer_id;
  });
  return out;
}

int select_prefix(const std::vector<double>& ba, double budget_drop) {
  if (ba.empty()) throw Error(ErrorKind::kInput, "empty accuracy curve");
  const double best = *std::max_element(ba.begin(), ba.end());
  for (std::size_t k = 0; k < ba.size(); ++k) {
    if (ba[k] >= best - budget_drop) return static_cast<int>(k);
  }
  return static_cast<int>(ba.size()) - 1;
}

std::vector<int> SelectionResult::ordered_layer_ids() const {
  std::vector<int> ids;
  for (const auto& s : ranked) ids.push_back(s.layer_id);
  return ids;
}

std::vector<int> SelectionResult::chosen_layer_ids() const {
  std::vector<int> ids = ordered_layer_ids();
  ids.resize(static_cast<std::size_t>(chosen_prefix_len));
  return ids;
}

double SelectionResult::max_balanced_accuracy() const {
  double best = 0.0;
  for (const auto& p : curve) best = std::max(best, p.balanced_accuracy);
  return best;
}

std::int64_t params_to_reach(const SelectionResult& result, double budget_drop) {
  std::vector<double> ba;
  for (const auto& p : result.curve) ba.push_back(p.balanced_accuracy);
  return result.curve[static_cast<std::size_t>(select_prefix(ba, budget_drop))].cumulative_params;
}

SelectionResult rank_and_select(const MicroUNet& model, const AdapterSet& adapters,
                                const std::vector<LabeledScene>& val_set, ScoreKind kind, double budget_drop,
                                ScoreScope scope) {
  if (val_set.empty()) throw Error(ErrorKind::kInput, "validation set is empty");
  if (!(budget_drop >= 0.0)) throw Error(ErrorKind::kConfiguration, "budget must be >= 0");
  adapters.validate(model);
  SelectionResult r;
  r.kind = kind;
  r.budget_drop = budget_drop;
  r.ranked = rank_adapters(adapters, kind, scope);
  const std::vector<int> order = r.ordered_layer_ids();
  const std::size_t K = order.size();

  std::vector<const GrayImage*> images;
  for (const auto& s : val_set) images.push_back(&s.image);
  r.curve.resize(K + 1);
  parallel_for(K + 1, [&](std::size_t k) {
    const AdapterSet prefix = adapters.subset(std::vector<int>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k)));
    CurvePoint& p = r.curve[k];
    p.k = static_cast<int>(k);
    for (std::size_t i = 0; i < k; ++i) p.cumulative_params += r.ranked[i].trainable_params;
    p.cumulative_bytes = static_cast<std::int64_t>(packed_size(prefix));
    p.balanced_accuracy = balanced_accuracy(confusion_of(predict_masks(model, &prefix, images), val_set));
  });
  std::vector<double> ba;
  for (const auto& p : r.curve) ba.push_back(p.balanced_accuracy);
  r.chosen_prefix_len = select_prefix(ba, budget_drop);
  return r;
}

std::string SelectionResult::to_json() const {
  nlohmann::ordered_json j;
  j["score"] = to_string(kind);
  j["budget_drop"] = budget_drop;
  j["ordered_layer_ids"] = ordered_layer_ids();
  j["chosen_prefix_len"] = chosen_prefix_len;
  j["chosen_layer_ids"] = chosen_layer_ids();
  j["max_balanced_accuracy"] = max_balanced_accuracy();
  nlohmann::ordered_json scores = nlohmann::ordered_json::array();
  for (const auto& s : ranked) {
    nlohmann::ordered_json e;
    e["layer_id"] = s.layer_id;
    e["value"] = s.value;
    e["sq_norm"] = s.sq_norm;
    e["scored_params"] = s.scored_params;
    e["trainable_params"] = s.trainable_params;
    e["param_bytes"] = s.param_bytes;
    scores.push_back(e);
  }
  j["scores"] = scores;
  nlohmann::ordered_json curve_json = nlohmann::ordered_json::array();
  for (const auto& p : curve) {
    nlohmann::ordered_json e;
    e["k"] = p.k;
    e["cumulative_params"] = p.cumulative_params;
    e["cumulative_bytes"] = p.cumulative_bytes;
    e["balanced_accuracy"] = p.balanced_accuracy;
    curve_json.push_back(e);
  }
  j["curve"] = curve_json;
  return j.dump(2) + "\n";
}

std::string SelectionResult::pareto_csv() const {
  std::string out = "k,cumulative_params,cumulative_bytes,balanced_accuracy\n";
  char buf[128];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof(buf), "%d,%lld,%lld,%.17g\n", p.k, static_cast<long long>(p.cumulative_params),
                  static_cast<long long>(p.cumulative_bytes), p.balanced_accuracy);
    out += buf;
  }
  return out;
}

std::vector<CurvePoint> parse_pareto_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "k,cumulative_params,cumulative_bytes,balanced_accuracy") {
    throw Error(ErrorKind::kFormat, "pareto csv: bad header");
  }
  std::vector<CurvePoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    CurvePoint p;
    long long params = 0, bytes = 0;
    if (std::sscanf(line.c_str(), "%d,%lld,%lld,%lf", &p.k, &params, &bytes, &p.balanced_accuracy) != 4) {
      throw Error(ErrorKind::kFormat, "pareto csv: bad row '" + line + "'");
    }
    p.cumulative_params = params;
    p.cumulative_bytes = bytes;
    out.push_back(p);
  }
  return out;
}

std::vector<int> parse_selection_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    return j.at("chosen_layer_ids").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("selection json: ") + e.what());
  }
}

}  // namespace adapterforge
