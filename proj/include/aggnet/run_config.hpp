#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "aggnet/model_config.hpp"
#include "aggnet/synth.hpp"

namespace aggnet {

struct TrainOptions {
  int epochs = 20;
  int max_steps = 0;  // 0: unlimited, otherwise stop after this many steps
  int batch = 8;
  double lr = 1e-2;
  double min_lr = 1e-4;
  double momentum = 0.95;
  double weight_decay = 1e-4;
  double plateau_factor = 0.3;
  int plateau_patience = 5;
  double plateau_threshold = 1e-4;  // relative improvement
  std::uint64_t seed = 1;
  bool crop_resize = false;
  double crop_min_scale = 0.8;
  void validate() const;
};

/// Fully resolved configuration of a command.
struct RunConfig {
  ModelConfig model;
  SceneSpec scene;
  TrainOptions train;
};

/// Flat "key = value" configuration. Every key is checked against a registry
/// with a type and a range; unknown keys and duplicates are rejected.
/// Blank lines and lines starting with '#' are ignored.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies one key=value override on top of `cfg` (same validation).
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// Applies "key=value" overrides on top of `cfg` and validates the result
/// as a whole, so interdependent keys may change together.
RunConfig apply_overrides(const RunConfig& cfg, const std::vector<std::string>& assignments);

/// Canonical dump of every registered key, sorted, one "key = value" per line.
/// parse_run_config(dump_run_config(c)) reproduces c.
std::string dump_run_config(const RunConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace aggnet
