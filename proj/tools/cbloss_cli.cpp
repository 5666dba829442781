// cbloss: effective-number utilities, covering simulation, long-tail data
// generation, training, sweeps and reports.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cbloss/config.hpp"
#include "cbloss/covering.hpp"
#include "cbloss/effnum.hpp"
#include "cbloss/harness.hpp"
#include "cbloss/longtail.hpp"
#include "cbloss/trainer.hpp"

namespace fs = std::filesystem;
using namespace cbloss;

namespace {

constexpr int kUsageError = 2;

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Flags shared by gen-data, train and sweep; unset ones leave the config file alone.
struct DataFlags {
  std::optional<std::size_t> n_classes, dim;
  std::optional<std::int64_t> base_count, test_per_class;
  std::optional<double> imbalance, mean_scale, noise_std;
  std::optional<std::string> train_csv, test_csv;

  void add(CLI::App* cmd, bool with_imbalance) {
    cmd->add_option("--n-classes", n_classes, "number of classes");
    cmd->add_option("--dim", dim, "feature dimension");
    cmd->add_option("--base-count", base_count, "size of the largest class");
    cmd->add_option("--test-per-class", test_per_class, "balanced test samples per class");
    cmd->add_option("--mean-scale", mean_scale, "distance of class means from the origin");
    cmd->add_option("--noise-std", noise_std, "isotropic noise standard deviation");
    cmd->add_option("--train-csv", train_csv, "ingest a training CSV instead of generating data");
    cmd->add_option("--test-csv", test_csv, "ingest a test CSV (with --train-csv)");
    if (with_imbalance) cmd->add_option("--imbalance", imbalance, "imbalance factor (largest / smallest class)");
  }

  void apply(Settings& s) const {
    if (n_classes) s.data.n_classes = *n_classes;
    if (dim) s.data.dim = *dim;
    if (base_count) s.data.base_count = *base_count;
    if (test_per_class) s.data.test_per_class = *test_per_class;
    if (mean_scale) s.data.class_mean_scale = *mean_scale;
    if (noise_std) s.data.noise_std = *noise_std;
    if (train_csv) s.data.train_csv = *train_csv;
    if (test_csv) s.data.test_csv = *test_csv;
    if (imbalance) s.imbalance = *imbalance;
  }
};

struct TrainFlags {
  std::optional<int> epochs;
  std::optional<double> lr, weight_decay, decay_factor;
  std::optional<std::size_t> batch_size, hidden_size;
  std::optional<std::string> arch;

  void add(CLI::App* cmd) {
    cmd->add_option("--epochs", epochs, "training epochs (warmup and decay milestones scale with it)");
    cmd->add_option("--lr", lr, "base learning rate");
    cmd->add_option("--weight-decay", weight_decay, "L2 weight decay");
    cmd->add_option("--decay-factor", decay_factor, "learning-rate decay factor");
    cmd->add_option("--batch-size", batch_size, "mini-batch size");
    cmd->add_option("--arch", arch, "linear or mlp")->check(CLI::IsMember({"linear", "mlp"}));
    cmd->add_option("--hidden-size", hidden_size, "hidden units for mlp");
  }

  void apply(Settings& s) const {
    if (epochs) {
      const auto scaled = scaled_train_config(*epochs);
      s.train.epochs = *epochs;
      s.train.warmup_epochs = scaled.warmup_epochs;
      s.train.decay_epochs = scaled.decay_epochs;
    }
    if (lr) s.train.lr = *lr;
    if (weight_decay) s.train.weight_decay = *weight_decay;
    if (decay_factor) s.train.decay_factor = *decay_factor;
    if (batch_size) s.train.batch_size = *batch_size;
    if (hidden_size) s.train.hidden_size = *hidden_size;
    if (arch) s.train.arch = parse_architecture(*arch);
  }
};

Settings load_settings(const std::optional<std::string>& config, ConfigScope scope, Settings defaults) {
  if (config) apply_config(load_json_file(*config), scope, defaults);
  return defaults;
}

std::optional<double> parse_beta_flag(const std::string& text) {
  if (text == "none") return std::nullopt;
  std::size_t used = 0;
  const double b = std::stod(text, &used);
  if (used != text.size()) throw std::invalid_argument(fmt::format("bad beta '{}'", text));
  return b;
}

// ---------------------------------------------------------------------------

int run_effnum(const std::vector<double>& betas, const std::vector<double>& protos, std::optional<std::int64_t> n,
               std::optional<std::int64_t> n_max) {
  std::vector<double> all_betas = betas;
  for (double p : protos) all_betas.push_back(beta_from_prototypes(p));
  const std::int64_t lo = n ? *n : 1;
  const std::int64_t hi = n ? *n : *n_max;
  std::cout << "beta,n_prototypes,n,effective_number,weight\n";
  for (double beta : all_betas) {
    const double proto = prototypes_from_beta(beta);
    for (std::int64_t k = lo; k <= hi; ++k) {
      std::cout << fmt::format("{},{},{},{},{}\n", beta, proto, k, effective_number(beta, k),
                               class_balanced_term(beta, k));
    }
  }
  return 0;
}

int run_covering(std::optional<double> proto, std::optional<double> beta, std::int64_t n, std::int64_t trials,
                 std::uint64_t seed, unsigned threads, bool check) {
  CoveringConfig config;
  config.n_prototypes = proto ? *proto : prototypes_from_beta(*beta);
  config.n_samples = n;
  config.n_trials = trials;
  config.rng_seed = seed;
  config.threads = threads;
  const auto result = simulate_covering(config);
  const double b = beta ? *beta : beta_from_prototypes(config.n_prototypes);
  const double expected = effective_number(b, n);
  const double z = result.std_error > 0 ? (result.mean_volume - expected) / result.std_error : 0.0;
  const bool pass = covering_matches(result, expected, trials);
  std::cout << "n_prototypes,beta,n,trials,seed,mean_volume,std_error,effective_number,z_score,agrees\n";
  std::cout << fmt::format("{},{},{},{},{},{},{},{},{:.4f},{}\n", config.n_prototypes, b, n,
                           trials, seed, result.mean_volume, result.std_error, expected, z, pass ? "yes" : "no");
  return check && !pass ? 1 : 0;
}

int run_gen_data(const Settings& s, const fs::path& out) {
  fs::create_directories(out);
  const Task task = make_task(s.data, s.imbalance);
  write_csv(task.train, out / "train.csv");
  write_csv(task.test, out / "test.csv");
  write_profile_csv(task.train.class_counts, out / "profile.csv");
  std::cout << fmt::format("{}: {} train / {} test samples, {} classes, realized imbalance {:.4g}\n",
                           task.dataset_id, task.train.size(), task.test.size(), task.train.n_classes(),
                           imbalance_factor(task.train.class_counts));
  return 0;
}

int run_train(const Settings& s, const fs::path& out) {
  fs::create_directories(out);
  const Task task = make_task(s.data, s.imbalance);
  const RunRecord record = train(task.train, task.test, s.train);
  auto json = to_json(record);
  json["dataset_id"] = task.dataset_id;
  json["tail_error"] = tail_error(record.final_eval.per_class_error, task.train.class_counts, s.tail_k);
  write_file(out / "run.json", json.dump(2) + "\n");
  write_file(out / "metrics.csv", metrics_csv(record));
  if (!record.ok) {
    std::cerr << "run failed: " << record.diagnostic << "\n";
    return 1;
  }
  std::cout << fmt::format("{} {} beta={} gamma={:g}: test error {:.4f}, tail error {:.4f} ({:.2f}s)\n",
                           task.dataset_id, to_string(s.train.family), format_beta(s.train.beta), s.train.gamma,
                           record.final_eval.overall_error, json["tail_error"].get<double>(), record.wall_seconds);
  return 0;
}

int run_sweep_cmd(const Settings& s, const fs::path& out) {
  fs::create_directories(out);
  SweepConfig config{s.train, s.grid, s.data, s.val_fraction, s.tail_k, s.jobs};
  std::cerr << fmt::format("sweep: {} runs\n", config.grid.size());
  const auto result = run_sweep(config);
  write_file(out / "results.csv", results_csv(result.rows));
  write_file(out / "summary.csv", summary_csv(result.rows, Selection::kValidation));
  for (const auto& task : result.tasks) {
    write_profile_csv(task.train.class_counts, out / fmt::format("profile_{}.csv", task.dataset_id));
  }
  const auto failed = std::count_if(result.rows.begin(), result.rows.end(), [](const auto& r) { return !r.ok; });
  std::cout << fmt::format("{} runs, {} failed; wrote {}\n", result.rows.size(), failed,
                           (out / "results.csv").string());
  return result.all_ok ? 0 : 1;
}

int run_report(const fs::path& results, std::optional<std::string> out_dir) {
  const auto rows = parse_results_csv(read_file(results));
  const fs::path dir = results.parent_path().empty() ? fs::path(".") : results.parent_path();
  const fs::path out = out_dir ? fs::path(*out_dir) : dir;
  fs::create_directories(out);
  write_file(out / "deltas.csv", deltas_csv(rows));
  write_file(out / "best.csv", summary_csv(rows, Selection::kTest));

  std::vector<double> betas;
  std::vector<std::string> datasets;
  for (const auto& r : rows) {
    if (r.beta && std::find(betas.begin(), betas.end(), *r.beta) == betas.end()) betas.push_back(*r.beta);
    if (std::find(datasets.begin(), datasets.end(), r.dataset_id) == datasets.end()) datasets.push_back(r.dataset_id);
  }
  std::sort(betas.begin(), betas.end());
  std::string curves = "dataset_id,beta,class_index,count,effective_number,weight\n";
  std::size_t with_profile = 0;
  for (const auto& ds : datasets) {
    const fs::path profile = dir / fmt::format("profile_{}.csv", ds);
    if (!fs::exists(profile)) continue;
    curves += effnum_curves_csv(ds, read_profile_csv(profile), betas);
    ++with_profile;
  }
  write_file(out / "effnum_curves.csv", curves);
  std::cout << fmt::format("wrote deltas.csv, best.csv, effnum_curves.csv ({} of {} datasets with profiles) to {}\n",
                           with_profile, datasets.size(), out.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-balanced losses from the effective number of samples"};
  app.require_subcommand(1);

  // effnum
  auto* effnum = app.add_subcommand("effnum", "print E_n and the class-balanced term as CSV");
  std::vector<double> en_betas, en_protos;
  std::optional<std::int64_t> en_n, en_n_max;
  auto* o_beta = effnum->add_option("--beta", en_betas, "overlap parameter(s) in [0, 1)");
  auto* o_proto = effnum->add_option("--n-proto", en_protos, "prototype count(s) N >= 1");
  auto* o_n = effnum->add_option("--n", en_n, "number of samples")->check(CLI::PositiveNumber);
  auto* o_nmax = effnum->add_option("--n-max", en_n_max, "emit the series n = 1..n-max")->check(CLI::PositiveNumber);
  o_n->excludes(o_nmax);
  effnum->callback([&] {
    if (o_beta->count() + o_proto->count() == 0) throw CLI::ValidationError("--beta or --n-proto is required");
    if (o_n->count() + o_nmax->count() == 0) throw CLI::ValidationError("--n or --n-max is required");
  });

  // simulate-covering
  auto* cover = app.add_subcommand("simulate-covering", "Monte Carlo estimate of the expected covered volume");
  std::optional<double> cv_proto, cv_beta;
  std::int64_t cv_n = 1, cv_trials = 10000;
  std::uint64_t cv_seed = 0;
  unsigned cv_threads = 1;
  bool cv_check = false;
  auto* c_proto = cover->add_option("--n-proto", cv_proto, "prototype count N >= 1");
  auto* c_beta = cover->add_option("--beta", cv_beta, "overlap parameter in [0, 1)");
  c_proto->excludes(c_beta);
  cover->add_option("--n", cv_n, "samples per trial")->required()->check(CLI::PositiveNumber);
  cover->add_option("--trials", cv_trials, "number of trials")->check(CLI::PositiveNumber);
  cover->add_option("--seed", cv_seed, "RNG seed");
  cover->add_option("--threads", cv_threads, "worker threads (0 = all cores)");
  cover->add_flag("--check", cv_check, "exit 1 unless the estimate is within 4 standard errors of E_n");
  cover->callback([&] {
    if (c_proto->count() + c_beta->count() == 0) throw CLI::ValidationError("--n-proto or --beta is required");
  });

  // gen-data / train / sweep share config handling
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";

  auto* gen = app.add_subcommand("gen-data", "write a long-tailed train split, balanced test split and profile");
  DataFlags gen_data;
  gen->add_option("--config", config_path, "flat JSON config");
  gen->add_option("--seed", seed, "data seed");
  gen->add_option("--out", out, "output directory");
  gen_data.add(gen, true);

  auto* trn = app.add_subcommand("train", "train one model and write run.json and metrics.csv");
  DataFlags trn_data;
  TrainFlags trn_flags;
  std::optional<std::string> trn_family, trn_beta;
  std::optional<double> trn_gamma;
  std::optional<std::uint64_t> trn_data_seed;
  trn->add_option("--config", config_path, "flat JSON config");
  trn->add_option("--seed", seed, "training seed");
  trn->add_option("--data-seed", trn_data_seed, "data seed");
  trn->add_option("--out", out, "output directory");
  trn->add_option("--family", trn_family, "softmax, sigmoid or focal");
  trn->add_option("--beta", trn_beta, "class-balance beta in [0, 1), or none");
  trn->add_option("--gamma", trn_gamma, "focal gamma");
  trn_data.add(trn, true);
  trn_flags.add(trn);

  auto* swp = app.add_subcommand("sweep", "run a loss x beta x gamma x imbalance x seed grid");
  DataFlags swp_data;
  TrainFlags swp_flags;
  std::optional<unsigned> swp_jobs;
  swp->add_option("--config", config_path, "flat JSON config");
  swp->add_option("--seed", seed, "run a single training seed");
  swp->add_option("--out", out, "output directory");
  swp->add_option("--jobs", swp_jobs, "concurrent runs");
  swp_data.add(swp, false);
  swp_flags.add(swp);

  auto* rep = app.add_subcommand("report", "delta, best-config and effective-number tables from results.csv");
  std::string rep_results;
  std::optional<std::string> rep_out;
  rep->add_option("results", rep_results, "results.csv written by sweep")->required();
  rep->add_option("--out", rep_out, "output directory (default: next to results.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*effnum) return run_effnum(en_betas, en_protos, en_n, en_n_max);
    if (*cover) return run_covering(cv_proto, cv_beta, cv_n, cv_trials, cv_seed, cv_threads, cv_check);
    if (*gen) {
      Settings s = load_settings(config_path, ConfigScope::kGenData, Settings{});
      gen_data.apply(s);
      if (seed) s.data.data_seed = *seed;
      return run_gen_data(s, out);
    }
    if (*trn) {
      Settings defaults;
      defaults.train = scaled_train_config(30);
      Settings s = load_settings(config_path, ConfigScope::kTrain, defaults);
      trn_data.apply(s);
      trn_flags.apply(s);
      if (trn_family) s.train.family = parse_loss_family(*trn_family);
      if (trn_beta) s.train.beta = parse_beta_flag(*trn_beta);
      if (trn_gamma) s.train.gamma = *trn_gamma;
      if (seed) s.train.seed = *seed;
      if (trn_data_seed) s.data.data_seed = *trn_data_seed;
      return run_train(s, out);
    }
    if (*swp) {
      Settings defaults;
      defaults.train = scaled_train_config(30);
      defaults.grid = default_sweep_grid();
      Settings s = load_settings(config_path, ConfigScope::kSweep, defaults);
      swp_data.apply(s);
      swp_flags.apply(s);
      if (seed) s.grid.seeds = {*seed};
      if (swp_jobs) s.jobs = *swp_jobs;
      return run_sweep_cmd(s, out);
    }
    if (*rep) return run_report(rep_results, rep_out);
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
