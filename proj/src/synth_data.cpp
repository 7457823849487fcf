// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adapterforge/synth_data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "adapterforge/binary_io.hpp"
#include "adapterforge/error.hpp"
#include "adapterforge/rng.hpp"

namespace adapterforge {
namespace {

struct DomainLook {
  double sky_lo, sky_hi;
  double terrain_top, terrain_bottom;
  double rock_lo, rock_hi;
  double shadow_drop;
  double haze_level;
};

DomainLook look(Domain d) {
  if (d == Domain::kMoon) return {0, 30, 90, 160, 170, 230, 60, 160};
  return {150, 200, 100, 140, 120, 160, 40, 160};
}

struct Ellipse {
  double cx, cy, rx, ry;
  bool contains(double x, double y, double margin = 0.0) const {
    const double dx = (x - cx) / (rx + margin);
    const double dy = (y - cy) / (ry + margin);
    return dx * dx + dy * dy <= 1.0;
  }
  bool overlaps(const Ellipse& o, double margin) const {
    // Conservative bounding-circle test, margin in pixels.
    const double dist = std::hypot(cx - o.cx, cy - o.cy);
    return dist < std::max(rx, ry) + std::max(o.rx, o.ry) + margin;
  }
};

/// Bilinear value noise on a coarse lattice, zero mean before normalisation.
std::vector<double> value_noise(Rng& rng, int h, int w, int cell) {
  const int gh = h / cell + 2;
  const int gw = w / cell + 2;
  std::vector<double> lattice(static_cast<std::size_t>(gh) * gw);
  for (double& v : lattice) v = rng.normal();
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double fy = static_cast<double>(y) / cell;
      const double fx = static_cast<double>(x) / cell;
      const int iy = static_cast<int>(fy);
      const int ix = static_cast<int>(fx);
      const double ty = fy - iy;
      const double tx = fx - ix;
      auto L = [&](int yy, int xx) { return lattice[static_cast<std::size_t>(yy) * gw + xx]; };
      const double top = L(iy, ix) * (1 - tx) + L(iy, ix + 1) * tx;
      const double bot = L(iy + 1, ix) * (1 - tx) + L(iy + 1, ix + 1) * tx;
      out[static_cast<std::size_t>(y) * w + x] = top * (1 - ty) + bot * ty;
    }
  }
  return out;
}

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

const char* to_string(Domain d) { return d == Domain::kMoon ? "moon" : "mars"; }

Domain parse_domain(const std::string& name) {
  if (name == "moon") return Domain::kMoon;
  if (name == "mars") return Domain::kMars;
  throw Error(ErrorKind::kInput, "unknown domain '" + name + "'");
}

SceneSpec default_scene_spec(Domain domain) {
  SceneSpec s;
  s.domain = domain;
  if (domain == Domain::kMars) {
    s.noise_std = 24.0;
    s.haze = 0.3;
  }
  return s;
}

LabeledScene generate(const SceneSpec& spec) {
  if (spec.height < 8 || spec.width < 8) throw Error(ErrorKind::kInput, "scene too small");
  if (!(spec.sky_fraction > 0.0 && spec.sky_fraction < 0.5)) {
    throw Error(ErrorKind::kInput, "sky_fraction must lie in (0, 0.5)");
  }
  if (spec.rock_min < 0 || spec.rock_max < spec.rock_min) throw Error(ErrorKind::kInput, "bad rock count range");
  if (spec.noise_std < 0.0 || spec.haze < 0.0 || spec.haze > 1.0) throw Error(ErrorKind::kInput, "bad noise/haze");

  const int h = spec.height;
  const int w = spec.width;
  const DomainLook lk = look(spec.domain);
  const double unit = std::min(h, w) / 48.0;
  Rng rng(spec.seed);

  LabeledScene scene;
  scene.meta = spec;
  scene.image = GrayImage(h, w);
  scene.mask = ClassMask(h, w, kTerrain);
  scene.horizon.resize(static_cast<std::size_t>(w));

  const double base = spec.sky_fraction * h;
  const double amp = rng.uniform(0.0, h / 16.0);
  const double freq = rng.uniform(0.5, 1.5);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (int x = 0; x < w; ++x) {
    const double hz = base + amp * std::sin(2.0 * std::numbers::pi * freq * x / w + phase);
    scene.horizon[static_cast<std::size_t>(x)] = std::clamp(static_cast<int>(std::lround(hz)), 1, h - 2);
  }

  // Terrain texture: two octaves of value noise normalised to noise_std.
  std::vector<double> noise = value_noise(rng, h, w, std::max(2, static_cast<int>(8 * unit)));
  const std::vector<double> fine = value_noise(rng, h, w, 2);
  for (std::size_t i = 0; i < noise.size(); ++i) noise[i] += 0.5 * fine[i];
  double mean = 0.0, sq = 0.0;
  for (double v : noise) mean += v;
  mean /= static_cast<double>(noise.size());
  for (double v : noise) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / static_cast<double>(noise.size()));
  for (double& v : noise) v = sd > 0 ? (v - mean) / sd * spec.noise_std : 0.0;

  std::vector<double> value(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const int hz = scene.horizon[static_cast<std::size_t>(x)];
      if (y < hz) {
        value[i] = rng.uniform(lk.sky_lo, lk.sky_hi);
        scene.mask.pixels[i] = kSky;
      } else {
        const double t = static_cast<double>(y - hz) / std::max(1, h - 1 - hz);
        value[i] = lk.terrain_top + (lk.terrain_bottom - lk.terrain_top) * t + noise[i];
      }
    }
  }

  const int rocks = rng.uniform_int(spec.rock_min, spec.rock_max);
  std::vector<Ellipse> placed;
  std::vector<Ellipse> shadows;
  for (int r = 0; r < rocks; ++r) {
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      Ellipse e;
      e.rx = rng.uniform(1.0, 6.0) * unit;
      e.ry = rng.uniform(1.0, 5.0) * unit;
      e.cx = rng.uniform(e.rx + 1.0, w - e.rx - 2.0);
      const int hz = scene.horizon[static_cast<std::size_t>(std::clamp(static_cast<int>(e.cx), 0, w - 1))];
      const double lo = hz + 1.0;
      const double hi = h - e.ry - 2.0;
      if (hi <= lo) continue;
      e.cy = rng.uniform(lo, hi);
      Ellipse s{e.cx + 0.6 * e.rx, e.cy + 0.5 * e.ry, e.rx, e.ry};
      ok = true;
      for (std::size_t k = 0; k < placed.size() && ok; ++k) {
        if (e.overlaps(placed[k], 3.0 * unit) || s.overlaps(placed[k], 1.0) || e.overlaps(shadows[k], 1.0)) ok = false;
      }
      if (ok) {
        placed.push_back(e);
        shadows.push_back(s);
      }
    }
    if (!ok) {
      throw Error(ErrorKind::kGeneration, "could not place rock " + std::to_string(r + 1) + " of " +
                                              std::to_string(rocks) + " after 100 attempts");
    }
  }

  for (const Ellipse& s : shadows) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (scene.mask.pixels[i] == kTerrain && s.contains(x, y)) value[i] -= lk.shadow_drop;
      }
    }
  }
  for (const Ellipse& e : placed) {
    const double level = rng.uniform(lk.rock_lo, lk.rock_hi);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!e.contains(x, y)) continue;
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        // Lit from the upper left.
        const double nx = (x - e.cx) / e.rx;
        const double ny = (y - e.cy) / e.ry;
        value[i] = level - 10.0 * (nx + ny) / std::numbers::sqrt2 + rng.normal(0.0, 2.0);
        scene.mask.pixels[i] = kRock;
      }
    }
  }

  for (std::size_t i = 0; i < value.size(); ++i) {
    double v = value[i];
    if (spec.domain == Domain::kMars) v = (1.0 - spec.haze) * v + spec.haze * lk.haze_level;
    scene.image.pixels[i] = to_u8(v);
  }
  return scene;
}

Splits make_splits(int n_train, int n_val, int n_test, const SceneSpec& spec_template,
                   std::uint64_t master_seed) {
  if (n_train < 0 || n_val < 0 || n_test < 0) throw Error(ErrorKind::kInput, "negative split size");
  Splits out;
  std::vector<LabeledScene>* lists[3] = {&out.train, &out.val, &out.test};
  const int counts[3] = {n_train, n_val, n_test};
  for (int k = 0; k < 3; ++k) {
    SplitMix64 stream(derive_seed(master_seed, static_cast<std::uint64_t>(k)));
    for (int i = 0; i < counts[k]; ++i) {
      SceneSpec s = spec_template;
      s.seed = stream.next();
      lists[k]->push_back(generate(s));
    }
  }
  return out;
}

std::array<std::int64_t, kNumClasses> class_frequencies(const std::vector<LabeledScene>& scenes) {
  std::array<std::int64_t, kNumClasses> counts{};
  for (const auto& s : scenes) {
    for (std::uint8_t c : s.mask.pixels) {
      if (c < kNumClasses) ++counts[c];
    }
  }
  return counts;
}

namespace {

nlohmann::ordered_json spec_json(const SceneSpec& s) {
  nlohmann::ordered_json j;
  j["domain"] = to_string(s.domain);
  j["height"] = s.height;
  j["width"] = s.width;
  j["rock_min"] = s.rock_min;
  j["rock_max"] = s.rock_max;
  j["sky_fraction"] = s.sky_fraction;
  j["noise_std"] = s.noise_std;
  j["haze"] = s.haze;
  return j;
}

SceneSpec spec_from_json(const nlohmann::json& j) {
  SceneSpec s = default_scene_spec(parse_domain(j.value("domain", std::string("moon"))));
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.rock_min = j.value("rock_min", s.rock_min);
  s.rock_max = j.value("rock_max", s.rock_max);
  s.sky_fraction = j.value("sky_fraction", s.sky_fraction);
  s.noise_std = j.value("noise_std", s.noise_std);
  s.haze = j.value("haze", s.haze);
  return s;
}

}  // namespace

void write_archive(const std::string& dir, const Splits& splits, const SceneSpec& spec_template,
                   std::uint64_t master_seed) {
  namespace fs = std::filesystem;
  nlohmann::ordered_json manifest;
  manifest["format"] = "adapterforge-scenes";
  manifest["version"] = 1;
  manifest["master_seed"] = master_seed;
  manifest["spec"] = spec_json(spec_template);
  nlohmann::ordered_json split_json;
  const std::pair<const char*, const std::vector<LabeledScene>*> parts[] = {
      {"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}};
  for (const auto& [name, scenes] : parts) {
    fs::create_directories(fs::path(dir) / name);
    nlohmann::ordered_json entries = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < scenes->size(); ++i) {
      char stem[32];
      std::snprintf(stem, sizeof(stem), "%05zu", i);
      const std::string image = std::string(name) + "/" + stem + ".pgm";
      const std::string mask = std::string(name) + "/" + stem + "_mask.pgm";
      write_pgm((fs::path(dir) / image).string(), (*scenes)[i].image);
      write_pgm((fs::path(dir) / mask).string(), (*scenes)[i].mask);
      nlohmann::ordered_json e;
      e["image"] = image;
      e["mask"] = mask;
      e["seed"] = (*scenes)[i].meta.seed;
      entries.push_back(e);
    }
    split_json[name] = entries;
  }
  manifest["splits"] = split_json;
  write_text_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

Splits read_archive(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  if (!fs::exists(manifest_path)) throw Error(ErrorKind::kIo, "no manifest.json in " + dir);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(manifest_path.string()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("manifest: ") + e.what());
  }
  const SceneSpec tmpl = manifest.contains("spec") ? spec_from_json(manifest["spec"]) : SceneSpec{};
  Splits out;
  std::vector<LabeledScene>* lists[3] = {&out.train, &out.val, &out.test};
  const char* names[3] = {"train", "val", "test"};
  for (int k = 0; k < 3; ++k) {
    if (!manifest.contains("splits") || !manifest["splits"].contains(names[k])) continue;
    for (const auto& e : manifest["splits"][names[k]]) {
      LabeledScene s;
      s.image = read_pgm((fs::path(dir) / e.at("image").get<std::string>()).string());
      s.mask = read_pgm((fs::path(dir) / e.at("mask").get<std::string>()).string());
      if (s.image.height != s.mask.height || s.image.width != s.mask.width) {
        throw Error(ErrorKind::kDimension, "image/mask size mismatch in " + dir);
      }
      for (std::uint8_t c : s.mask.pixels) {
        if (c >= kNumClasses) throw Error(ErrorKind::kFormat, "mask class id out of range in " + dir);
      }
      s.meta = tmpl;
      s.meta.height = s.image.height;
      s.meta.width = s.image.width;
      s.meta.seed = e.value("seed", std::uint64_t{0});
      lists[k]->push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace adapterforge
