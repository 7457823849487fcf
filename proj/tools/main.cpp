// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "adapterforge/adapters.hpp"
#include "adapterforge/binary_io.hpp"
#include "adapterforge/error.hpp"
#include "adapterforge/fusion.hpp"
#include "adapterforge/metrics.hpp"
#include "adapterforge/micro_unet.hpp"
#include "adapterforge/ranking.hpp"
#include "adapterforge/synth_data.hpp"
#include "adapterforge/training.hpp"
#include "adapterforge/update_pack.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace adapterforge::cli {
namespace {

const std::vector<std::string> kStrategies = {"baseline", "scratch", "full", "encoder", "decoder", "batchnorm",
                                              "adapters"};
const std::vector<std::string> kDesigns = {"bn_conv", "bn_relu_conv", "conv_bn", "bn_conv_bn_conv"};

struct TrainOptions {
  TrainConfig cfg;
  std::string optimizer = "adam";
  std::string loss = "bcce";
  std::string design = "bn_conv";
};

void add_train_options(CLI::App* sub, TrainOptions& t) {
  sub->add_option("--epochs", t.cfg.max_epochs, "Maximum epochs")->check(CLI::NonNegativeNumber);
  sub->add_option("--batch-size", t.cfg.batch_size, "Batch size")->check(CLI::PositiveNumber);
  sub->add_option("--lr", t.cfg.lr0, "Initial learning rate")->check(CLI::NonNegativeNumber);
  sub->add_option("--lr-floor", t.cfg.lr_floor, "Learning-rate floor")->check(CLI::NonNegativeNumber);
  sub->add_option("--patience", t.cfg.plateau_patience, "Epochs without improvement before a cut")
      ->check(CLI::PositiveNumber);
  sub->add_option("--lr-decay", t.cfg.lr_decay, "Learning-rate cut factor")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--max-decays", t.cfg.max_decays, "Maximum number of cuts")->check(CLI::NonNegativeNumber);
  sub->add_option("--optimizer", t.optimizer, "adam | sgdm")->check(CLI::IsMember({"adam", "sgdm"}));
  sub->add_option("--loss", t.loss, "bcce | dice | jaccard")->check(CLI::IsMember({"bcce", "dice", "jaccard"}));
  sub->add_option("--crop-prob", t.cfg.crop_prob, "Random-crop probability")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--crop-h", t.cfg.crop_h, "Crop height")->check(CLI::PositiveNumber);
  sub->add_option("--crop-w", t.cfg.crop_w, "Crop width")->check(CLI::PositiveNumber);
  sub->add_option("--hflip-prob", t.cfg.hflip_prob, "Horizontal-flip probability")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--blur-prob", t.cfg.blur_prob, "Gaussian-blur probability")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--adapters-design", t.design, "Adapter layout")->check(CLI::IsMember(kDesigns));
}

TrainConfig resolve(const TrainOptions& t, std::uint64_t seed) {
  TrainConfig cfg = t.cfg;
  cfg.seed = seed;
  cfg.optimizer = parse_optimizer(t.optimizer);
  cfg.loss = parse_loss(t.loss);
  cfg.adapter_design = parse_adapter_design(t.design);
  return cfg;
}

void prepare_out_dir(const std::string& dir, const CLI::App& sub) {
  fs::create_directories(dir);
  write_text_file((fs::path(dir) / "config.resolved").string(), resolved_config(sub));
}

void write_out(const std::string& dir, const std::string& name, const std::string& text) {
  write_text_file((fs::path(dir) / name).string(), text);
}

Splits load_data(const std::string& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::kIo, "data directory not found: " + dir);
  return read_archive(dir);
}

const std::vector<LabeledScene>& pick_split(const Splits& s, const std::string& name) {
  const std::vector<LabeledScene>& out = name == "train" ? s.train : name == "val" ? s.val : s.test;
  if (out.empty()) throw Error(ErrorKind::kInput, "split '" + name + "' is empty");
  return out;
}

AdapterSet load_adapters(const MicroUNet& model, const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  return apply_update(model, bytes, false).adapters;
}

std::optional<std::vector<int>> load_selection(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return parse_selection_json(read_text_file(path));
}

json cost_json(const CostReport& c) {
  json j;
  j["flop_convention"] = "1 multiply-accumulate = 2 FLOPs";
  j["total_params"] = c.total_params;
  j["trainable_params"] = c.trainable_params;
  j["flops_per_image"] = c.flops_per_image;
  j["storage_bytes"] = c.storage_bytes;
  return j;
}

std::int64_t file_size_or_zero(const std::string& path) {
  if (path.empty() || !fs::exists(path)) return 0;
  return static_cast<std::int64_t>(fs::file_size(path));
}

json summary_json(const std::string& variant, const EvalReport& r, std::int64_t update_bytes) {
  json j;
  j["variant"] = variant;
  j["balanced_accuracy_pct"] = round_percent(r.balanced_accuracy);
  j["mean_iou_pct"] = round_percent(r.mean_iou);
  j["flops_per_image"] = r.cost ? r.cost->flops_per_image : 0;
  j["storage_bytes"] = r.cost ? r.cost->storage_bytes : 0;
  j["update_bytes"] = update_bytes;
  j["ms_per_image"] = r.ms_per_image;
  return j;
}

// ---------------------------------------------------------------- gen-data
struct GenData {
  std::string domain, out;
  int n_train = 256, n_val = 64, n_test = 64;
  std::optional<int> height, width, rock_min, rock_max;
  std::optional<double> sky_fraction, noise_std, haze;
};

void run_gen_data(const GenData& g, std::uint64_t seed, const CLI::App& sub) {
  SceneSpec spec = default_scene_spec(parse_domain(g.domain));
  if (g.height) spec.height = *g.height;
  if (g.width) spec.width = *g.width;
  if (g.rock_min) spec.rock_min = *g.rock_min;
  if (g.rock_max) spec.rock_max = *g.rock_max;
  if (g.sky_fraction) spec.sky_fraction = *g.sky_fraction;
  if (g.noise_std) spec.noise_std = *g.noise_std;
  if (g.haze) spec.haze = *g.haze;
  const Splits splits = make_splits(g.n_train, g.n_val, g.n_test, spec, seed);
  prepare_out_dir(g.out, sub);
  write_archive(g.out, splits, spec, seed);
  json stats;
  const std::pair<const char*, const std::vector<LabeledScene>*> parts[] = {
      {"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}};
  for (const auto& [name, scenes] : parts) {
    const auto f = class_frequencies(*scenes);
    stats[name]["scenes"] = scenes->size();
    stats[name]["class_pixels"] = {{"terrain", f[0]}, {"rock", f[1]}, {"sky", f[2]}};
  }
  stats["class_weights"] = ClassWeights::from_counts(class_frequencies(splits.train)).w;
  write_out(g.out, "stats.json", stats.dump(2) + "\n");
  std::cout << "wrote " << splits.train.size() + splits.val.size() + splits.test.size() << " scenes to " << g.out
            << "\n";
}

// ---------------------------------------------------------------- train
struct TrainCmd {
  std::string strategy, data, out, model, adapters;
  TrainOptions t;
};

void run_train(const TrainCmd& c, std::uint64_t seed, const CLI::App& sub) {
  const Strategy strategy = parse_strategy(c.strategy);
  if (strategy != Strategy::kScratch && c.model.empty()) {
    throw CLI::ValidationError("--model", "strategy '" + c.strategy + "' needs a starting model");
  }
  if (!c.adapters.empty() && strategy != Strategy::kAdaptersAll) {
    throw CLI::ValidationError("--adapters", "only the adapters strategy takes an adapter checkpoint");
  }
  const TrainConfig cfg = resolve(c.t, seed);
  cfg.validate();
  const Splits data = load_data(c.data);
  MicroUNet model = c.model.empty() ? MicroUNet::make() : MicroUNet::load(c.model);
  std::optional<AdapterSet> start_adapters;
  if (!c.adapters.empty()) start_adapters = load_adapters(model, c.adapters);

  const TrainResult r = train(model, start_adapters ? &*start_adapters : nullptr, strategy, pick_split(data, "train"),
                              pick_split(data, "val"), cfg);
  prepare_out_dir(c.out, sub);
  const std::string model_path = (fs::path(c.out) / "model.munt").string();
  r.model.save(model_path);
  const bool with_adapters = strategy == Strategy::kAdaptersAll;
  std::int64_t update_bytes = 0;
  AdapterSet tagged = r.adapters;
  if (tagged.domain_tag().empty()) tagged.set_domain_tag(to_string(data.train.front().meta.domain));
  if (with_adapters) {
    const std::vector<std::uint8_t> bytes = pack(tagged, r.model.layout_hash());
    write_file_bytes((fs::path(c.out) / "adapters.adpt").string(), bytes);
    update_bytes = static_cast<std::int64_t>(bytes.size());
  } else if (strategy != Strategy::kBaseline) {
    update_bytes = file_size_or_zero(model_path);
  }
  write_out(c.out, "history.csv", r.history_csv());
  write_out(c.out, "history.json", r.history_json());

  const AdapterSet* set = with_adapters ? &tagged : nullptr;
  json summary;
  if (!data.test.empty()) {
    const EvalReport rep = evaluate_model(r.model, set, data.test, c.strategy);
    write_out(c.out, "eval_test.json", rep.to_json());
    summary = summary_json(c.strategy, rep, update_bytes);
  } else {
    summary["variant"] = c.strategy;
    summary["update_bytes"] = update_bytes;
  }
  MicroUNet probe = r.model;
  AdapterSet probe_set = r.adapters;
  const FreezeMask mask = set_training_strategy(probe, with_adapters ? &probe_set : nullptr, strategy);
  const CostReport cost = count_costs(r.model, set, data.train.front().image.height,
                                      data.train.front().image.width, &mask);
  summary["trainable_params"] = cost.trainable_params;
  summary["total_params"] = cost.total_params;
  summary["best_epoch"] = r.best_epoch;
  summary["best_val_balanced_accuracy_pct"] = round_percent(r.best_val_ba);
  write_out(c.out, "summary.json", summary.dump(2) + "\n");
  std::printf("%s: best epoch %d, val BA %.2f%%, trainable %lld of %lld params\n", c.strategy.c_str(), r.best_epoch,
              round_percent(r.best_val_ba), static_cast<long long>(cost.trainable_params),
              static_cast<long long>(cost.total_params));
}

// ---------------------------------------------------------------- rank
struct RankCmd {
  std::string model, adapters, val, out, score = "sq_norm_per_param";
  double budget = 0.5;
  bool all_params = false;
};

void run_rank(const RankCmd& c, const CLI::App& sub) {
  const MicroUNet model = MicroUNet::load(c.model);
  const AdapterSet adapters = load_adapters(model, c.adapters);
  const Splits data = load_data(c.val);
  const SelectionResult r =
      rank_and_select(model, adapters, pick_split(data, "val"), parse_score_kind(c.score), c.budget / 100.0,
                      c.all_params ? ScoreScope::kAllTrainable : ScoreScope::kConvOnly);
  prepare_out_dir(c.out, sub);
  write_out(c.out, "selection.json", r.to_json());
  write_out(c.out, "pareto.csv", r.pareto_csv());
  const std::vector<std::uint8_t> bytes = pack(adapters.subset(r.chosen_layer_ids()), model.layout_hash());
  write_file_bytes((fs::path(c.out) / "ranked.adpt").string(), bytes);
  std::printf("selected %d of %zu adapters (max BA %.2f%%, chosen BA %.2f%%), ranked pack %zu bytes\n",
              r.chosen_prefix_len, r.ranked.size(), round_percent(r.max_balanced_accuracy()),
              round_percent(r.curve[static_cast<std::size_t>(r.chosen_prefix_len)].balanced_accuracy), bytes.size());
}

// ---------------------------------------------------------------- fuse
struct FuseCmd {
  std::string model, adapters, selection, out;
};

void run_fuse(const FuseCmd& c) {
  const MicroUNet model = MicroUNet::load(c.model);
  if (model.any_fused()) throw Error(ErrorKind::kState, "model is already fused");
  const AdapterSet adapters = load_adapters(model, c.adapters);
  const MicroUNet fused = fuse_model(model, adapters, load_selection(c.selection));
  if (!fs::path(c.out).parent_path().empty()) fs::create_directories(fs::path(c.out).parent_path());
  fused.save(c.out);
  const int h = 48, w = 48;
  json j;
  j["input"] = {h, w};
  j["fused"] = cost_json(count_costs(fused, nullptr, h, w));
  j["baseline_folded"] = cost_json(count_costs(fuse_model(model, AdapterSet()), nullptr, h, w));
  j["baseline_unfolded"] = cost_json(count_costs(model, nullptr, h, w));
  std::cout << j.dump(2) << "\n";
}

// ---------------------------------------------------------------- pack / apply
struct PackCmd {
  std::string model, adapters, selection, out;
};

void run_pack(const PackCmd& c) {
  const MicroUNet model = MicroUNet::load(c.model);
  AdapterSet adapters = load_adapters(model, c.adapters);
  if (auto ids = load_selection(c.selection)) {
    const std::string tag = adapters.domain_tag();
    adapters = adapters.subset(*ids);
    adapters.set_domain_tag(tag);
  }
  const std::vector<std::uint8_t> bytes = pack(adapters, model.layout_hash());
  if (!fs::path(c.out).parent_path().empty()) fs::create_directories(fs::path(c.out).parent_path());
  write_file_bytes(c.out, bytes);
  std::printf("packed %zu adapters: %zu bytes\n", adapters.size(), bytes.size());
}

struct ApplyCmd {
  std::string model, pack_path, out;
  bool fuse = false;
};

void run_apply(const ApplyCmd& c, const CLI::App& sub) {
  const MicroUNet model = MicroUNet::load(c.model);
  const std::vector<std::uint8_t> bytes = read_file_bytes(c.pack_path);
  const AppliedUpdate u = apply_update(model, bytes, c.fuse);
  prepare_out_dir(c.out, sub);
  u.model.save((fs::path(c.out) / "model.munt").string());
  if (!c.fuse) {
    write_file_bytes((fs::path(c.out) / "adapters.adpt").string(), pack(u.adapters, u.model.layout_hash()));
  }
  std::printf("applied %zu-byte update (%s)\n", bytes.size(), c.fuse ? "fused" : "adapters attached");
}

// ---------------------------------------------------------------- inspect
std::string inspect_model(const MicroUNet& m) {
  json j;
  j["format"] = "MUNT";
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(m.layout_hash()));
  j["model_hash"] = hash;
  j["normalization"] = {{"mean", m.normalization().mean}, {"stddev", m.normalization().stddev}};
  json layers = json::array();
  for (const LayerSpec& s : m.layers()) {
    json e;
    e["id"] = s.id;
    e["kind"] = s.kind == LayerKind::kConv3x3 ? "conv3x3" : "conv1x1";
    e["stage"] = to_string(s.stage);
    e["c_in"] = s.c_in;
    e["c_out"] = s.c_out;
    e["batchnorm"] = m.params(s.id).bn.has_value();
    e["fused"] = m.fused(s.id);
    layers.push_back(e);
  }
  j["layers"] = layers;
  j["cost_48x48"] = cost_json(count_costs(m, nullptr, 48, 48));
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------- eval
struct EvalCmd {
  std::string model, adapters, classic, data, split = "test", out, label, update_file;
  int batch_size = 16;
  ClassicParams classic_params;
};

void run_eval(const EvalCmd& c, const CLI::App& sub) {
  const Splits data = load_data(c.data);
  const std::vector<LabeledScene>& scenes = pick_split(data, c.split);
  EvalReport r;
  std::string update_file = c.update_file;
  if (!c.classic.empty()) {
    r = evaluate_classic(parse_classic_method(c.classic), scenes, c.classic_params);
  } else {
    const MicroUNet model = MicroUNet::load(c.model);
    std::optional<AdapterSet> adapters;
    if (!c.adapters.empty()) {
      adapters = load_adapters(model, c.adapters);
      if (update_file.empty()) update_file = c.adapters;
    }
    r = evaluate_model(model, adapters ? &*adapters : nullptr, scenes, c.label.empty() ? "model" : c.label,
                       c.batch_size);
  }
  if (!c.label.empty()) r.method = c.label;
  std::cout << r.to_json();
  if (c.out.empty()) return;
  prepare_out_dir(c.out, sub);
  write_out(c.out, "eval.json", r.to_json());
  write_out(c.out, "eval.csv", EvalReport::csv_header() + "\n" + r.csv_row() + "\n");
  write_out(c.out, "summary.json", summary_json(r.method, r, file_size_or_zero(update_file)).dump(2) + "\n");
}

// ---------------------------------------------------------------- noise-sweep
struct NoiseCmd {
  std::string model, adapters, data, split = "test", noise = "all", out;
  std::vector<double> levels;
};

std::vector<double> default_levels(NoiseKind k) {
  switch (k) {
    case NoiseKind::kGauss: return {0, 8, 16, 32, 64};
    case NoiseKind::kBlur: return {1, 3, 5, 7, 9};
    case NoiseKind::kBadPixel: return {0, 0.05, 0.1, 0.2, 0.4};
  }
  return {};
}

void run_noise(const NoiseCmd& c, std::uint64_t seed, const CLI::App& sub) {
  const MicroUNet model = MicroUNet::load(c.model);
  std::optional<AdapterSet> adapters;
  if (!c.adapters.empty()) adapters = load_adapters(model, c.adapters);
  const Splits data = load_data(c.data);
  const std::vector<LabeledScene>& scenes = pick_split(data, c.split);
  std::vector<NoiseKind> kinds;
  if (c.noise == "all") kinds = {NoiseKind::kGauss, NoiseKind::kBlur, NoiseKind::kBadPixel};
  else kinds = {parse_noise_kind(c.noise)};
  if (kinds.size() > 1 && !c.levels.empty()) {
    throw CLI::ValidationError("--levels", "explicit levels need a single --noise kind");
  }
  prepare_out_dir(c.out, sub);
  for (NoiseKind k : kinds) {
    const auto points = noise_sweep(model, adapters ? &*adapters : nullptr, scenes, k,
                                    c.levels.empty() ? default_levels(k) : c.levels, seed);
    const std::string csv = noise_sweep_csv(k, points);
    write_out(c.out, std::string("noise_") + to_string(k) + ".csv", csv);
    std::cout << csv;
  }
}

// ---------------------------------------------------------------- layer-sweep
struct LayerCmd {
  std::string model, data, out;
  TrainOptions t;
};

void run_layer_sweep(const LayerCmd& c, std::uint64_t seed, const CLI::App& sub) {
  const TrainConfig cfg = resolve(c.t, seed);
  cfg.validate();
  const MicroUNet model = MicroUNet::load(c.model);
  const Splits data = load_data(c.data);
  const auto rows = layer_sweep(model, pick_split(data, "train"), pick_split(data, "val"), cfg);
  prepare_out_dir(c.out, sub);
  const std::string csv = layer_sweep_csv(rows);
  write_out(c.out, "layer_sweep.csv", csv);
  std::cout << csv;
}

// ---------------------------------------------------------------- report
void run_report(const std::string& run_dir) {
  if (!fs::is_directory(run_dir)) throw Error(ErrorKind::kIo, "run directory not found: " + run_dir);
  const std::vector<std::string> canonical = {"baseline", "scratch", "full",    "encoder", "decoder",
                                              "batchnorm", "adapters", "ranked", "fused"};
  std::map<std::string, json> found;
  std::vector<std::string> extra;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    const fs::path summary = entry.path() / "summary.json";
    if (!entry.is_directory() || !fs::exists(summary)) continue;
    const std::string name = entry.path().filename().string();
    found[name] = json::parse(read_text_file(summary.string()));
    if (std::find(canonical.begin(), canonical.end(), name) == canonical.end()) extra.push_back(name);
  }
  std::sort(extra.begin(), extra.end());
  std::vector<std::string> order = canonical;
  order.insert(order.end(), extra.begin(), extra.end());

  std::optional<std::int64_t> base_flops, base_bytes;
  if (found.count("baseline")) {
    base_flops = found["baseline"].value("flops_per_image", std::int64_t{0});
    base_bytes = found["baseline"].value("storage_bytes", std::int64_t{0});
  }
  auto delta = [](std::int64_t v, const std::optional<std::int64_t>& base) {
    if (!base) return std::string("n/a");
    const std::int64_t d = v - *base;
    return (d >= 0 ? "+" : "") + std::to_string(d);
  };
  std::string md =
      "| variant | balanced accuracy [%] | FLOPs total | FLOPs vs baseline | storage total [B] | storage vs baseline [B] "
      "| update [B] | inference [ms/img] |\n|---|---|---|---|---|---|---|---|\n";
  std::string csv =
      "variant,balanced_accuracy_pct,flops_total,flops_delta,storage_bytes,storage_delta,update_bytes,ms_per_image\n";
  std::vector<std::string> absent;
  char buf[512];
  for (const std::string& name : order) {
    if (!found.count(name)) {
      absent.push_back(name);
      continue;
    }
    const json& s = found[name];
    const double ba = s.value("balanced_accuracy_pct", 0.0);
    const std::int64_t flops = s.value("flops_per_image", std::int64_t{0});
    const std::int64_t bytes = s.value("storage_bytes", std::int64_t{0});
    const std::int64_t update = s.value("update_bytes", std::int64_t{0});
    const double ms = s.value("ms_per_image", 0.0);
    // Classic methods carry no model cost.
    const bool learned = flops > 0;
    const std::string f_total = learned ? std::to_string(flops) : "n/a";
    const std::string f_delta = learned ? delta(flops, base_flops) : "n/a";
    const std::string b_total = learned ? std::to_string(bytes) : "n/a";
    const std::string b_delta = learned ? delta(bytes, base_bytes) : "n/a";
    std::snprintf(buf, sizeof(buf), "| %s | %.2f | %s | %s | %s | %s | %lld | %.3f |\n", name.c_str(), ba,
                  f_total.c_str(), f_delta.c_str(), b_total.c_str(), b_delta.c_str(), static_cast<long long>(update),
                  ms);
    md += buf;
    std::snprintf(buf, sizeof(buf), "%s,%.2f,%s,%s,%s,%s,%lld,%.3f\n", name.c_str(), ba, f_total.c_str(),
                  f_delta.c_str(), b_total.c_str(), b_delta.c_str(), static_cast<long long>(update), ms);
    csv += buf;
  }
  md += "\nFLOPs per image, 1 multiply-accumulate = 2 FLOPs.\n";
  if (!absent.empty()) {
    md += "\nAbsent runs:";
    for (const auto& a : absent) md += " " + a;
    md += "\n";
  }
  write_out(run_dir, "report.md", md);
  write_out(run_dir, "report.csv", csv);
  std::cout << md;
}

int run(int argc, char** argv) {
  CLI::App app{"AdapterForge: adapter-based domain adaptation for planetary terrain segmentation"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  std::uint64_t seed = 0;
  std::string config_path;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Master seed (all randomness derives from it)");
    sub->add_option("--config", config_path, "key = value file; command-line flags win")->check(CLI::ExistingFile);
  };

  GenData gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic scene archive");
  gen_cmd->add_option("--domain", gen.domain, "moon | mars")->required()->check(CLI::IsMember({"moon", "mars"}));
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--n-train", gen.n_train, "Training scenes")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--n-val", gen.n_val, "Validation scenes")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--n-test", gen.n_test, "Test scenes")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--height", gen.height, "Scene height")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--width", gen.width, "Scene width")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--rock-min", gen.rock_min, "Fewest rocks per scene")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--rock-max", gen.rock_max, "Most rocks per scene")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--sky-fraction", gen.sky_fraction, "Sky band height fraction");
  gen_cmd->add_option("--noise-std", gen.noise_std, "Terrain texture std")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--haze", gen.haze, "Haze blend (mars)")->check(CLI::Range(0.0, 1.0));
  common(gen_cmd);

  TrainCmd tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Train or fine-tune with a strategy");
  train_cmd->add_option("--strategy", tr.strategy, "Training strategy")->required()->check(CLI::IsMember(kStrategies));
  train_cmd->add_option("--data", tr.data, "Scene archive")->required();
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_option("--model", tr.model, "Starting model (all strategies but scratch)");
  train_cmd->add_option("--adapters", tr.adapters, "Adapter checkpoint to continue from");
  add_train_options(train_cmd, tr.t);
  common(train_cmd);

  RankCmd rk;
  CLI::App* rank_cmd = app.add_subcommand("rank", "Rank adapters and select a budgeted prefix");
  rank_cmd->add_option("--model", rk.model, "Backbone model")->required();
  rank_cmd->add_option("--adapters", rk.adapters, "Adapter checkpoint")->required();
  rank_cmd->add_option("--val", rk.val, "Scene archive (val split)")->required();
  rank_cmd->add_option("--out", rk.out, "Output directory")->required();
  rank_cmd->add_option("--score", rk.score, "Ranking score")
      ->check(CLI::IsMember({"sq_norm_per_param", "sq_norm", "param_count"}));
  rank_cmd->add_option("--budget", rk.budget, "Accepted drop in balanced-accuracy points")
      ->check(CLI::NonNegativeNumber);
  rank_cmd->add_flag("--all-params", rk.all_params, "Score over all trainable adapter parameters");
  common(rank_cmd);

  FuseCmd fu;
  CLI::App* fuse_cmd = app.add_subcommand("fuse", "Fold adapters and BatchNorms into the convolutions");
  fuse_cmd->add_option("--model", fu.model, "Backbone model")->required();
  fuse_cmd->add_option("--adapters", fu.adapters, "Adapter checkpoint")->required();
  fuse_cmd->add_option("--selection", fu.selection, "selection.json from rank");
  fuse_cmd->add_option("--out", fu.out, "Fused model file")->required();
  common(fuse_cmd);

  PackCmd pk;
  CLI::App* pack_cmd = app.add_subcommand("pack", "Write an update pack");
  pack_cmd->add_option("--model", pk.model, "Backbone model")->required();
  pack_cmd->add_option("--adapters", pk.adapters, "Adapter checkpoint")->required();
  pack_cmd->add_option("--selection", pk.selection, "selection.json from rank");
  pack_cmd->add_option("--out", pk.out, "Pack file")->required();
  common(pack_cmd);

  ApplyCmd ap;
  CLI::App* apply_cmd = app.add_subcommand("apply", "Apply an update pack to a model");
  apply_cmd->add_option("--model", ap.model, "Deployed model")->required();
  apply_cmd->add_option("--pack", ap.pack_path, "Update pack")->required();
  apply_cmd->add_option("--out", ap.out, "Output directory")->required();
  apply_cmd->add_flag("--fuse", ap.fuse, "Fold the adapters into the model");
  common(apply_cmd);

  std::string inspect_pack_path, inspect_model_path;
  CLI::App* inspect_cmd = app.add_subcommand("inspect", "Describe a pack or model file as JSON");
  auto* ip = inspect_cmd->add_option("--pack", inspect_pack_path, "Update pack");
  auto* im = inspect_cmd->add_option("--model", inspect_model_path, "Model file");
  ip->excludes(im);
  inspect_cmd->require_option(1);
  common(inspect_cmd);

  EvalCmd ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a model or a classic method");
  auto* em = eval_cmd->add_option("--model", ev.model, "Model file");
  eval_cmd->add_option("--adapters", ev.adapters, "Adapter checkpoint")->needs(em);
  auto* ec = eval_cmd->add_option("--classic", ev.classic, "otsu | canny | hybrid")
                 ->check(CLI::IsMember({"otsu", "canny", "hybrid"}));
  em->excludes(ec);
  eval_cmd->add_option("--data", ev.data, "Scene archive")->required();
  eval_cmd->add_option("--split", ev.split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--out", ev.out, "Output directory");
  eval_cmd->add_option("--label", ev.label, "Name used in reports");
  eval_cmd->add_option("--update-file", ev.update_file, "File whose size counts as the update cost");
  eval_cmd->add_option("--batch-size", ev.batch_size, "Inference batch")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--min-area", ev.classic_params.min_area, "Classic: minimum rock area (0 = auto)");
  eval_cmd->add_option("--blur-k", ev.classic_params.blur_k, "Classic: Canny blur kernel (odd)");
  eval_cmd->add_option("--canny-low", ev.classic_params.canny_low, "Classic: low threshold (-1 = auto)");
  eval_cmd->add_option("--canny-high", ev.classic_params.canny_high, "Classic: high threshold (-1 = auto)");
  common(eval_cmd);

  NoiseCmd nz;
  CLI::App* noise_cmd = app.add_subcommand("noise-sweep", "Balanced accuracy under input corruption");
  noise_cmd->add_option("--model", nz.model, "Model file")->required();
  noise_cmd->add_option("--adapters", nz.adapters, "Adapter checkpoint");
  noise_cmd->add_option("--data", nz.data, "Scene archive")->required();
  noise_cmd->add_option("--split", nz.split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
  noise_cmd->add_option("--noise", nz.noise, "gauss | blur | bad_pxl | all")
      ->check(CLI::IsMember({"gauss", "blur", "bad_pxl", "all"}));
  noise_cmd->add_option("--levels", nz.levels, "Ascending levels (comma separated)")->delimiter(',');
  noise_cmd->add_option("--out", nz.out, "Output directory")->required();
  common(noise_cmd);

  LayerCmd ls;
  ls.t.cfg.max_epochs = 10;
  CLI::App* layer_cmd = app.add_subcommand("layer-sweep", "Fine-tune one backbone layer at a time");
  layer_cmd->add_option("--model", ls.model, "Starting model")->required();
  layer_cmd->add_option("--data", ls.data, "Scene archive")->required();
  layer_cmd->add_option("--out", ls.out, "Output directory")->required();
  add_train_options(layer_cmd, ls.t);
  common(layer_cmd);

  std::string report_dir;
  CLI::App* report_cmd = app.add_subcommand("report", "Summarise a run directory");
  report_cmd->add_option("--run", report_dir, "Directory holding one sub-directory per variant")->required();
  common(report_cmd);

  try {
    app.parse(argc, argv);
    for (CLI::App* sub : app.get_subcommands()) {
      if (!config_path.empty()) merge_config(*sub, read_config_file(config_path));
    }
    if (*eval_cmd && ev.model.empty() && ev.classic.empty()) {
      throw CLI::ValidationError("eval", "give --model or --classic");
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen_cmd) run_gen_data(gen, seed, *gen_cmd);
    else if (*train_cmd) run_train(tr, seed, *train_cmd);
    else if (*rank_cmd) run_rank(rk, *rank_cmd);
    else if (*fuse_cmd) run_fuse(fu);
    else if (*pack_cmd) run_pack(pk);
    else if (*apply_cmd) run_apply(ap, *apply_cmd);
    else if (*inspect_cmd) {
      if (!inspect_pack_path.empty()) std::cout << inspect_pack(read_file_bytes(inspect_pack_path));
      else std::cout << inspect_model(MicroUNet::load(inspect_model_path));
    } else if (*eval_cmd) run_eval(ev, *eval_cmd);
    else if (*noise_cmd) run_noise(nz, seed, *noise_cmd);
    else if (*layer_cmd) run_layer_sweep(ls, seed, *layer_cmd);
    else if (*report_cmd) run_report(report_dir);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace
}  // namespace adapterforge::cli

int main(int argc, char** argv) { return adapterforge::cli::run(argc, argv); }
