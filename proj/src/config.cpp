#include "cbloss/config.hpp"

#include <fstream>
#include <stdexcept>

#include <fmt/format.h>

namespace cbloss {
namespace {

const std::set<std::string> kDataKeys = {"n_classes",  "dim",        "base_count",     "class_mean_scale",
                                         "noise_std",  "data_seed",  "test_per_class", "train_csv",
                                         "test_csv"};
const std::set<std::string> kTrainKeys = {"epochs",        "batch_size",  "lr",           "momentum",
                                          "weight_decay",  "warmup_epochs", "decay_epochs", "decay_factor",
                                          "focal_lr_multiplier", "arch", "hidden_size"};
const std::set<std::string> kLossKeys = {"family", "gamma", "beta", "seed"};
const std::set<std::string> kGridKeys = {"families", "betas", "gammas", "imbalances", "seeds",
                                         "val_fraction", "tail_k", "jobs"};

std::optional<double> parse_beta(const nlohmann::json& v, const std::string& key) {
  if (v.is_string()) {
    if (v.get<std::string>() == "none") return std::nullopt;
    throw std::invalid_argument(fmt::format("config key '{}': expected a number or \"none\"", key));
  }
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

}  // namespace

std::set<std::string> config_keys(ConfigScope scope) {
  std::set<std::string> keys = kDataKeys;
  if (scope != ConfigScope::kSweep) keys.insert("imbalance");
  if (scope == ConfigScope::kGenData) return keys;
  keys.insert(kTrainKeys.begin(), kTrainKeys.end());
  if (scope == ConfigScope::kTrain) {
    keys.insert(kLossKeys.begin(), kLossKeys.end());
  } else {
    keys.insert(kGridKeys.begin(), kGridKeys.end());
  }
  return keys;
}

void apply_config(const nlohmann::json& doc, ConfigScope scope, Settings& s) {
  if (!doc.is_object()) throw std::invalid_argument("config must be a JSON object");
  const auto allowed = config_keys(scope);
  for (const auto& [key, value] : doc.items()) {
    if (!allowed.count(key)) throw std::invalid_argument(fmt::format("unknown config key '{}'", key));
  }

  const std::string* current = nullptr;
  try {
    for (const auto& [key, v] : doc.items()) {
      current = &key;
      // data
      if (key == "n_classes") s.data.n_classes = v.get<std::size_t>();
      else if (key == "dim") s.data.dim = v.get<std::size_t>();
      else if (key == "base_count") s.data.base_count = v.get<std::int64_t>();
      else if (key == "class_mean_scale") s.data.class_mean_scale = v.get<double>();
      else if (key == "noise_std") s.data.noise_std = v.get<double>();
      else if (key == "data_seed") s.data.data_seed = v.get<std::uint64_t>();
      else if (key == "test_per_class") s.data.test_per_class = v.get<std::int64_t>();
      else if (key == "train_csv") s.data.train_csv = v.get<std::string>();
      else if (key == "test_csv") s.data.test_csv = v.get<std::string>();
      else if (key == "imbalance") s.imbalance = v.get<double>();
      // training
      else if (key == "epochs") s.train.epochs = v.get<int>();
      else if (key == "batch_size") s.train.batch_size = v.get<std::size_t>();
      else if (key == "lr") s.train.lr = v.get<double>();
      else if (key == "momentum") s.train.momentum = v.get<double>();
      else if (key == "weight_decay") s.train.weight_decay = v.get<double>();
      else if (key == "warmup_epochs") s.train.warmup_epochs = v.get<int>();
      else if (key == "decay_epochs") s.train.decay_epochs = v.get<std::vector<int>>();
      else if (key == "decay_factor") s.train.decay_factor = v.get<double>();
      else if (key == "focal_lr_multiplier") s.train.focal_lr_multiplier = v.get<double>();
      else if (key == "arch") s.train.arch = parse_architecture(v.get<std::string>());
      else if (key == "hidden_size") s.train.hidden_size = v.get<std::size_t>();
      else if (key == "family") s.train.family = parse_loss_family(v.get<std::string>());
      else if (key == "gamma") s.train.gamma = v.get<double>();
      else if (key == "beta") s.train.beta = parse_beta(v, key);
      else if (key == "seed") s.train.seed = v.get<std::uint64_t>();
      // sweep
      else if (key == "families") {
        s.grid.families.clear();
        for (const auto& f : v) s.grid.families.push_back(parse_loss_family(f.get<std::string>()));
      } else if (key == "betas") {
        s.grid.betas.clear();
        for (const auto& b : v) s.grid.betas.push_back(parse_beta(b, key));
      } else if (key == "gammas") s.grid.gammas = v.get<std::vector<double>>();
      else if (key == "imbalances") s.grid.imbalances = v.get<std::vector<double>>();
      else if (key == "seeds") s.grid.seeds = v.get<std::vector<std::uint64_t>>();
      else if (key == "val_fraction") s.val_fraction = v.get<double>();
      else if (key == "tail_k") s.tail_k = v.get<std::size_t>();
      else if (key == "jobs") s.jobs = v.get<unsigned>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(fmt::format("config key '{}': {}", current ? *current : "?", e.what()));
  }

  if (doc.contains("epochs") && !doc.contains("warmup_epochs") && !doc.contains("decay_epochs")) {
    const auto scaled = scaled_train_config(s.train.epochs);
    s.train.warmup_epochs = scaled.warmup_epochs;
    s.train.decay_epochs = scaled.decay_epochs;
  }
}

nlohmann::json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open config '{}'", path.string()));
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(fmt::format("{}: {}", path.string(), e.what()));
  }
}

SweepGrid default_sweep_grid() {
  return SweepGrid{{LossFamily::kSoftmaxCe, LossFamily::kSigmoidCe, LossFamily::kFocal},
                   {std::nullopt, 0.9, 0.99, 0.999, 0.9999},
                   {0.5, 1.0, 2.0},
                   {10.0, 100.0},
                   {0}};
}

}  // namespace cbloss
