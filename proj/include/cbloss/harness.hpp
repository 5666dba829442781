#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbloss/longtail.hpp"
#include "cbloss/losses.hpp"
#include "cbloss/trainer.hpp"

namespace cbloss {

/// Where train/test data comes from: Gaussian clusters (default) or a pair of
/// ingested CSV files whose training split gets subsampled to a long-tail profile.
struct DataSource {
  std::size_t n_classes = 10;
  std::size_t dim = 20;
  std::int64_t base_count = 1000;
  double class_mean_scale = 3.0;
  double noise_std = 1.0;
  std::uint64_t data_seed = 0;
  std::int64_t test_per_class = 500;
  std::optional<std::filesystem::path> train_csv;
  std::optional<std::filesystem::path> test_csv;

  void validate() const;
};

struct Task {
  std::string dataset_id;
  double imbalance = 1.0;
  LongTailProfile profile;
  Dataset train;
  Dataset test;  ///< balanced
};

/// Synthetic: counts from build_profile(C, base, mu_from_imbalance(C, F)), test
/// set with test_per_class samples per class. Ingested: the training file is
/// subsampled to a profile whose base is its smallest class; the test file is
/// used unchanged.
Task make_task(const DataSource& source, double imbalance);
std::string dataset_id(const DataSource& source, double imbalance);

/// Hyperparameter grid. A disengaged beta is the "none" sentinel (no
/// class-balance term). gammas only apply to the focal family; the other
/// families run once per (beta, seed) with gamma = 0.
struct SweepGrid {
  std::vector<LossFamily> families;
  std::vector<std::optional<double>> betas;
  std::vector<double> gammas;
  std::vector<double> imbalances;
  std::vector<std::uint64_t> seeds;

  void validate() const;
  /// Number of runs expand_grid produces.
  std::size_t size() const;
};

struct GridPoint {
  double imbalance = 1.0;
  LossFamily family = LossFamily::kSoftmaxCe;
  std::optional<double> beta;
  double gamma = 0.0;
  std::uint64_t seed = 0;
};

/// Canonical order: imbalance, family, gamma, beta, seed.
std::vector<GridPoint> expand_grid(const SweepGrid& grid);

/// One line of results.csv.
struct ReportRow {
  std::string dataset_id;
  double imbalance = 1.0;
  LossFamily family = LossFamily::kSoftmaxCe;
  std::optional<double> beta;
  double gamma = 0.0;
  std::uint64_t seed = 0;
  bool ok = true;
  double overall_error = 0.0;
  double tail_error = 0.0;
  std::vector<double> per_class_errors;
  double wall_seconds = 0.0;
  /// Balanced validation error used for model selection; not part of results.csv.
  std::optional<double> validation_error;
};

/// Mean test error over the k classes with the fewest training samples
/// (ties broken by class index). k == 0 means ceil(C / 3).
double tail_error(std::span<const double> per_class_error, const ClassCounts& train_counts, std::size_t k = 0);

struct SweepConfig {
  TrainConfig train;  ///< family, gamma, beta and seed are taken from the grid
  SweepGrid grid;
  DataSource data;
  double val_fraction = 0.2;  ///< 0 disables the validation split
  std::size_t tail_k = 0;
  unsigned jobs = 1;
};

struct SweepOutput {
  std::vector<ReportRow> rows;  ///< grid order
  std::vector<Task> tasks;
  bool all_ok = true;
};

/// Runs every grid point. With val_fraction > 0 each model trains on a
/// stratified (1 - val_fraction) share of the training data and is scored on the
/// rest for selection. Runs are independent and execute on `jobs` threads; the
/// output does not depend on the thread count.
SweepOutput run_sweep(const SweepConfig& config);

/// Raised for malformed results files; the message names the offending column.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kResultsHeader =
    "dataset_id,imbalance,family,beta,gamma,seed,status,overall_error,tail_error,per_class_errors,wall_seconds";

std::string results_csv(const std::vector<ReportRow>& rows);
/// results.csv body without the wall_seconds column; equal for identical reruns.
std::string results_csv_without_timing(const std::vector<ReportRow>& rows);
std::vector<ReportRow> parse_results_csv(const std::string& text);

enum class Selection { kValidation, kTest };

/// Best configuration (lowest mean selection error across seeds) per
/// (dataset, family) and per dataset overall, with mean and std over seeds.
std::string summary_csv(const std::vector<ReportRow>& rows, Selection selection);

/// Per (dataset, family, gamma, beta): mean errors and their differences to the
/// beta = none baseline of the same (dataset, family, gamma), paired by seed.
std::string deltas_csv(const std::vector<ReportRow>& rows);

/// Effective number and normalized weight of each class for each beta.
std::string effnum_curves_csv(const std::string& dataset_id, const ClassCounts& counts,
                              const std::vector<double>& betas);

std::string format_beta(const std::optional<double>& beta);

}  // namespace cbloss
