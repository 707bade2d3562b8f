#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dce/common.hpp"
#include "dce/trainer.hpp"

namespace dce {

// Flat key=value configuration ('#' comments, blank lines ignored).
inline std::map<std::string, std::string> load_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string trimmed = line;
    const size_t first = trimmed.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    trimmed = trimmed.substr(first);
    if (trimmed[0] == '#') continue;
    const size_t eq = trimmed.find('=');
    if (eq == std::string::npos)
      fail(strf("%s:%d: expected key=value, got '%s'", path.c_str(), lineno, line.c_str()));
    const std::string key = trimmed.substr(0, eq);
    const std::string val = trimmed.substr(eq + 1);
    kv[key] = val;
  }
  return kv;
}

inline void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& val) {
  auto as_int = [&](const std::string& v) {
    try {
      return std::stoi(v);
    } catch (...) {
      fail(strf("config: key '%s' expects an integer, got '%s'", key.c_str(), v.c_str()));
    }
  };
  auto as_double = [&](const std::string& v) {
    try {
      return std::stod(v);
    } catch (...) {
      fail(strf("config: key '%s' expects a number, got '%s'", key.c_str(), v.c_str()));
    }
  };
  if (key == "dataset") cfg.dataset = val;
  else if (key == "data_dir") cfg.data_dir = val;
  else if (key == "arch") cfg.arch = val;
  else if (key == "p") cfg.p = as_double(val);
  else if (key == "batch_size") cfg.batch_size = as_int(val);
  else if (key == "epochs") cfg.epochs = as_int(val);
  else if (key == "lr0") cfg.lr0 = as_double(val);
  else if (key == "momentum") cfg.momentum = as_double(val);
  else if (key == "weight_decay") cfg.weight_decay = as_double(val);
  else if (key == "seed") cfg.seed = uint64_t(std::stoull(val));
  else if (key == "selection") cfg.selection = val;
  else if (key == "pipeline") cfg.pipeline = val;
  else if (key == "freeze_epoch") cfg.freeze_epoch = as_int(val);
  else if (key == "init_strategy") cfg.init_strategy = val;
  else if (key == "precision") cfg.precision = val;
  else if (key == "augment") cfg.augment = val;
  else if (key == "subset_per_class") cfg.subset_per_class = as_int(val);
  else if (key == "test_subset_per_class") cfg.test_subset_per_class = as_int(val);
  else if (key == "min_per_layer") cfg.min_per_layer = as_int(val);
  else if (key == "finetune_epochs") cfg.finetune_epochs = as_int(val);
  else if (key == "out_dir") cfg.out_dir = val;
  else fail("config: unknown key '" + key + "'");
}

inline void apply_override(TrainConfig& cfg, const std::string& kv) {
  const size_t eq = kv.find('=');
  if (eq == std::string::npos) fail("override must be key=value, got '" + kv + "'");
  apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
}

// Every field materialized, sorted keys; loadable as a config file, so a run
// can be reproduced from its manifest alone.
inline std::string manifest_text(const TrainConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["dataset"] = cfg.dataset;
  kv["data_dir"] = cfg.data_dir;
  kv["arch"] = cfg.arch;
  kv["p"] = strf("%.17g", cfg.p);
  kv["batch_size"] = std::to_string(cfg.batch_size);
  kv["epochs"] = std::to_string(cfg.epochs);
  kv["lr0"] = strf("%.17g", cfg.lr0);
  kv["momentum"] = strf("%.17g", cfg.momentum);
  kv["weight_decay"] = strf("%.17g", cfg.weight_decay);
  kv["seed"] = std::to_string(cfg.seed);
  kv["selection"] = cfg.selection;
  kv["pipeline"] = cfg.pipeline;
  kv["freeze_epoch"] = std::to_string(cfg.freeze_epoch);
  kv["init_strategy"] = cfg.init_strategy;
  kv["precision"] = cfg.precision;
  kv["augment"] = cfg.augment;
  kv["subset_per_class"] = std::to_string(cfg.subset_per_class);
  kv["test_subset_per_class"] = std::to_string(cfg.test_subset_per_class);
  kv["min_per_layer"] = std::to_string(cfg.min_per_layer);
  kv["finetune_epochs"] = std::to_string(cfg.finetune_epochs);
  kv["out_dir"] = cfg.out_dir;
  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
  return os.str();
}

inline TrainConfig config_from_manifest(const std::string& path) {
  TrainConfig cfg;
  for (const auto& [k, v] : load_kv_file(path)) apply_config_entry(cfg, k, v);
  return cfg;
}

// FNV-1a over the manifest; hex id in the spirit of a short git hash.
inline std::string run_id(const TrainConfig& cfg) {
  const std::string text = manifest_text(cfg);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return strf("%016llx", static_cast<unsigned long long>(h));
}

}  // namespace dce
