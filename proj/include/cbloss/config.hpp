#pragma once

#include <filesystem>
#include <set>
#include <string>

#include <json.hpp>

#include "cbloss/harness.hpp"

namespace cbloss {

/// Everything a CLI subcommand can be configured with. Config files are flat
/// JSON objects whose keys are exactly the field names below; which keys a
/// subcommand accepts depends on its scope, and any other key is an error.
struct Settings {
  TrainConfig train;
  DataSource data;
  SweepGrid grid;
  double imbalance = 1.0;  ///< gen-data / train
  double val_fraction = 0.2;
  std::size_t tail_k = 0;
  unsigned jobs = 1;
};

enum class ConfigScope { kGenData, kTrain, kSweep };

/// Accepted keys for a scope, sorted.
std::set<std::string> config_keys(ConfigScope scope);

/// Applies `doc` on top of `settings`. When `epochs` is set but neither
/// `warmup_epochs` nor `decay_epochs` is, those follow scaled_train_config.
/// Throws std::invalid_argument naming the offending key.
void apply_config(const nlohmann::json& doc, ConfigScope scope, Settings& settings);

nlohmann::json load_json_file(const std::filesystem::path& path);

/// Defaults for the sweep: every family, betas {none, 0.9, 0.99, 0.999, 0.9999},
/// gammas {0.5, 1, 2}, imbalances {10, 100}, seed 0.
SweepGrid default_sweep_grid();

}  // namespace cbloss
