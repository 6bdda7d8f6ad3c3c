#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "scilm/error.hpp"
#include "scilm/model.hpp"
#include "scilm/synthetic.hpp"

namespace scilm {

// Flat `key = value` configuration text, `#` starts a comment, blank lines
// ignored. Unknown keys are rejected with their line number.

struct ConfigEntry {
  std::size_t line = 0;
  std::string key;
  std::string value;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  std::size_t e = s.find_last_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

inline std::vector<ConfigEntry> parse_key_values(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path.string() + ": cannot open");
  std::vector<ConfigEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.filename().string() + " line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    ConfigEntry entry;
    entry.line = lineno;
    entry.key = trim(stripped.substr(0, eq));
    entry.value = trim(stripped.substr(eq + 1));
    if (entry.key.empty() || entry.value.empty())
      throw ConfigError(path.filename().string() + " line " + std::to_string(lineno) +
                        ": empty key or value");
    entries.push_back(std::move(entry));
  }
  return entries;
}

inline std::string where(const std::filesystem::path& path, const ConfigEntry& e) {
  return path.filename().string() + " line " + std::to_string(e.line);
}

inline double entry_double(const std::filesystem::path& path, const ConfigEntry& e) {
  try {
    std::size_t used = 0;
    const double v = std::stod(e.value, &used);
    if (used != e.value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(where(path, e) + ": '" + e.value + "' is not a number");
  }
}

inline std::size_t entry_size(const std::filesystem::path& path, const ConfigEntry& e) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(e.value, &used);
    if (used != e.value.size() || v < 0) throw std::invalid_argument("bad");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError(where(path, e) + ": '" + e.value + "' is not a nonnegative integer");
  }
}

inline std::uint64_t entry_u64(const std::filesystem::path& path, const ConfigEntry& e) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(e.value, &used);
    if (used != e.value.size()) throw std::invalid_argument("bad");
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw ConfigError(where(path, e) + ": '" + e.value + "' is not an unsigned integer");
  }
}

inline bool entry_bool(const std::filesystem::path& path, const ConfigEntry& e) {
  if (e.value == "true" || e.value == "1" || e.value == "on") return true;
  if (e.value == "false" || e.value == "0" || e.value == "off") return false;
  throw ConfigError(where(path, e) + ": '" + e.value + "' is not a boolean");
}

}  // namespace detail

struct RunConfig {
  ModelConfig model;
  std::optional<std::string> data_dir;
  std::optional<std::string> out_path;
  // q/p pinned in the file; checked against the dataset at load time.
  std::optional<std::size_t> fixed_q, fixed_p;
};

// Defaults follow the documented single-dataset regime: gamma = 2,
// lambda_p = 0.4, lambda_q = 0.4, n = 10, hidden width 1000.
inline RunConfig load_run_config(const std::filesystem::path& path) {
  using namespace detail;
  RunConfig rc;
  for (const ConfigEntry& e : parse_key_values(path)) {
    if (e.key == "hidden")
      rc.model.h = entry_size(path, e);
    else if (e.key == "n")
      rc.model.n = entry_size(path, e);
    else if (e.key == "lambda_p")
      rc.model.lambda_p = entry_double(path, e);
    else if (e.key == "lambda_q")
      rc.model.lambda_q = entry_double(path, e);
    else if (e.key == "beta")
      rc.model.beta = entry_double(path, e);
    else if (e.key == "gamma")
      rc.model.gamma = entry_double(path, e);
    else if (e.key == "lambda_reg")
      rc.model.lambda_reg = entry_double(path, e);
    else if (e.key == "variant") {
      if (e.value.size() != 1) throw ConfigError(where(path, e) + ": variant must be a, b or c");
      rc.model.variant = variant_from_letter(e.value[0]);
    } else if (e.key == "optimizer") {
      if (e.value == "sgd")
        rc.model.optimizer = OptimizerKind::kSgd;
      else if (e.value == "adam")
        rc.model.optimizer = OptimizerKind::kAdam;
      else
        throw ConfigError(where(path, e) + ": optimizer must be sgd or adam");
    } else if (e.key == "learning_rate")
      rc.model.learning_rate = entry_double(path, e);
    else if (e.key == "iterations")
      rc.model.iterations = entry_size(path, e);
    else if (e.key == "seed")
      rc.model.seed = entry_u64(path, e);
    else if (e.key == "squared_norm_cosine")
      rc.model.squared_norm_cosine = entry_bool(path, e);
    else if (e.key == "q")
      rc.fixed_q = entry_size(path, e);
    else if (e.key == "p")
      rc.fixed_p = entry_size(path, e);
    else if (e.key == "data")
      rc.data_dir = e.value;
    else if (e.key == "out")
      rc.out_path = e.value;
    else
      throw ConfigError(where(path, e) + ": unknown key '" + e.key + "'");
  }
  return rc;
}

inline SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  using namespace detail;
  SyntheticSpec spec;
  for (const ConfigEntry& e : parse_key_values(path)) {
    if (e.key == "k_seen")
      spec.k_seen = entry_size(path, e);
    else if (e.key == "t_unseen")
      spec.t_unseen = entry_size(path, e);
    else if (e.key == "p")
      spec.p = entry_size(path, e);
    else if (e.key == "q")
      spec.q = entry_size(path, e);
    else if (e.key == "head")
      spec.head_count = entry_size(path, e);
    else if (e.key == "tail")
      spec.tail_count = entry_size(path, e);
    else if (e.key == "noise_sigma")
      spec.noise_sigma = entry_double(path, e);
    else if (e.key == "attr_link")
      spec.attr_link = entry_size(path, e);
    else if (e.key == "test_per_class")
      spec.test_per_class = entry_size(path, e);
    else if (e.key == "nonneg_features")
      spec.nonneg_features = entry_bool(path, e);
    else if (e.key == "seed")
      spec.seed = entry_u64(path, e);
    else
      throw ConfigError(where(path, e) + ": unknown key '" + e.key + "'");
  }
  return spec;
}

}  // namespace scilm
