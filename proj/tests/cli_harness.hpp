// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace adapterforge::testing {

inline std::string cli_path() { return ADAPTERFORGE_CLI_PATH; }

struct CliResult {
  int code = -1;
  std::string output;
};

/// Runs the CLI inside `cwd` with stderr folded into the captured output.
inline CliResult run_cli(const std::string& cwd, const std::string& args) {
  const std::string cmd = "cd '" + cwd + "' && '" + cli_path() + "' " + args + " 2>&1";
  CliResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (p == nullptr) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), p)) > 0) r.output.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void drop_timing(nlohmann::json& j) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end();) {
      if (it.key().find("ms_per_image") != std::string::npos) {
        it = j.erase(it);
      } else {
        drop_timing(*it);
        ++it;
      }
    }
  } else if (j.is_array()) {
    for (auto& e : j) drop_timing(e);
  }
}

inline std::vector<std::string> split_on(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

/// Blanks every column whose header mentions milliseconds.
inline std::string mask_timing_columns(const std::string& text, char sep) {
  std::istringstream in(text);
  std::string line, out;
  std::vector<bool> timing;
  while (std::getline(in, line)) {
    auto cells = split_on(line, sep);
    const bool is_header = cells.size() > 2 &&
                           (line.find("ms") != std::string::npos) &&
                           (line.find("ms_per_image") != std::string::npos || line.find("[ms") != std::string::npos);
    if (is_header) {
      timing.assign(cells.size(), false);
      for (std::size_t i = 0; i < cells.size(); ++i)
        timing[i] = cells[i].find("ms_per_image") != std::string::npos || cells[i].find("[ms") != std::string::npos;
    } else if (timing.size() == cells.size()) {
      for (std::size_t i = 0; i < cells.size(); ++i)
        if (timing[i]) cells[i] = "*";
    }
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? std::string(1, sep) : "") + cells[i];
    out += '\n';
  }
  return out;
}

inline std::string normalized_artifact(const std::filesystem::path& p) {
  const std::string raw = read_all(p);
  const std::string ext = p.extension().string();
  if (ext == ".json") {
    auto j = nlohmann::json::parse(raw);
    drop_timing(j);
    return j.dump();
  }
  if (ext == ".csv") return mask_timing_columns(raw, ',');
  if (ext == ".md") return mask_timing_columns(raw, '|');
  return raw;
}

/// Relative paths of files that differ (or exist on one side only).
inline std::vector<std::string> compare_trees(const std::filesystem::path& a, const std::filesystem::path& b,
                                              int* compared = nullptr) {
  namespace fs = std::filesystem;
  std::map<std::string, int> seen;
  for (const auto* root : {&a, &b})
    for (const auto& e : fs::recursive_directory_iterator(*root))
      if (e.is_regular_file()) seen[fs::relative(e.path(), *root).string()] |= root == &a ? 1 : 2;
  std::vector<std::string> diffs;
  int n = 0;
  for (const auto& [rel, mask] : seen) {
    ++n;
    if (mask != 3 || normalized_artifact(a / rel) != normalized_artifact(b / rel)) diffs.push_back(rel);
  }
  if (compared) *compared = n;
  return diffs;
}

/// A small end-to-end run of every artifact-producing subcommand, all paths
/// relative to `dir`. Returns the failing step or an empty string.
inline std::string run_small_pipeline(const std::string& dir, int seed) {
  const std::string s = " --seed " + std::to_string(seed);
  const std::vector<std::string> steps = {
      "gen-data --domain moon --out moon --n-train 8 --n-val 4 --n-test 4" + s,
      "gen-data --domain mars --out mars --n-train 8 --n-val 4 --n-test 4" + s,
      "train --strategy scratch --data moon --out run/src --epochs 2" + s,
      "train --strategy baseline --data mars --model run/src/model.munt --out run/baseline" + s,
      "train --strategy adapters --data mars --model run/src/model.munt --out run/adapters --epochs 2" + s,
      "rank --model run/src/model.munt --adapters run/adapters/adapters.adpt --val mars --out run/rank" + s,
      "fuse --model run/src/model.munt --adapters run/adapters/adapters.adpt --selection run/rank/selection.json"
      " --out fused.munt" + s,
      "pack --model run/src/model.munt --adapters run/adapters/adapters.adpt --selection run/rank/selection.json"
      " --out update.adpt" + s,
      "apply --model run/src/model.munt --pack update.adpt --out applied" + s,
      "eval --model fused.munt --data mars --out run/fused --label fused --update-file update.adpt" + s,
      "eval --classic hybrid --data mars --out run/hybrid" + s,
      "noise-sweep --model run/src/model.munt --adapters run/adapters/adapters.adpt --data mars --out noise" + s,
      "layer-sweep --model run/src/model.munt --data mars --out layers --epochs 1" + s,
      "report --run run" + s,
  };
  for (const auto& step : steps) {
    const CliResult r = run_cli(dir, step);
    if (r.code != 0) return step + " -> exit " + std::to_string(r.code) + ": " + r.output;
  }
  return "";
}

}  // namespace adapterforge::testing
