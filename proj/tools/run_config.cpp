// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "run_config.hpp"

#include <algorithm>
#include <fstream>

namespace adapterforge::cli {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string long_name(const CLI::Option* opt) {
  const auto& names = opt->get_lnames();
  return names.empty() ? std::string() : names.front();
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::FileError::Missing(path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw CLI::ConversionError(path + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    std::replace(key.begin(), key.end(), '_', '-');
    out.emplace_back(key, value);
  }
  return out;
}

void merge_config(CLI::App& sub, const std::vector<std::pair<std::string, std::string>>& entries) {
  for (const auto& [key, value] : entries) {
    CLI::Option* target = nullptr;
    for (CLI::Option* opt : sub.get_options()) {
      if (long_name(opt) == key) target = opt;
    }
    if (target == nullptr || key == "config" || key == "help") {
      throw CLI::ValidationError("config", "unknown key '" + key + "' for " + sub.get_name());
    }
    if (target->count() > 0) continue;
    target->add_result(value);
    target->run_callback();
  }
}

std::string resolved_config(const CLI::App& sub) {
  std::string out = "# " + sub.get_name() + "\n";
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = long_name(opt);
    if (name.empty() || name == "help" || name == "config") continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& results = opt->results();
      for (std::size_t i = 0; i < results.size(); ++i) value += (i ? "," : "") + results[i];
      if (opt->get_type_size() == 0 && results.empty()) value = "true";
    } else {
      value = opt->get_default_str();
      if (value.empty()) value = opt->get_type_size() == 0 ? "false" : "auto";
    }
    out += name + " = " + value + "\n";
  }
  return out;
}

}  // namespace adapterforge::cli
