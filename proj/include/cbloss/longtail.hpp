#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cbloss/effnum.hpp"

namespace cbloss {

/// Exponentially decaying class sizes counts[i] = max(1, round(base_count * mu^i)).
/// Rounding is half-to-even.
struct LongTailProfile {
  std::size_t n_classes = 0;
  std::int64_t base_count = 0;
  double mu = 1.0;
  ClassCounts counts;
};

/// mu = imbalance^(-1 / (C - 1)), so that base * mu^(C-1) = base / imbalance before rounding.
double mu_from_imbalance(std::size_t n_classes, double imbalance);

LongTailProfile build_profile(std::size_t n_classes, std::int64_t base_count, double mu);

/// max(counts) / min(counts). Throws std::domain_error on a zero count.
double imbalance_factor(const ClassCounts& counts);

/// Gaussian class clusters standing in for images. Class means are
/// class_mean_scale times a random unit direction; samples add isotropic noise.
struct SyntheticDataSpec {
  std::size_t dim = 2;
  double class_mean_scale = 1.0;
  double noise_std = 1.0;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// Row-major feature matrix plus labels. Construct through make_dataset so that
/// class_counts always agrees with labels.
struct Dataset {
  std::size_t dim = 0;
  std::vector<double> features;
  std::vector<std::size_t> labels;
  ClassCounts class_counts;

  std::size_t size() const { return labels.size(); }
  std::size_t n_classes() const { return class_counts.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }

  bool operator==(const Dataset&) const = default;
};

/// Validates shapes and label range and computes class_counts.
Dataset make_dataset(std::size_t dim, std::size_t n_classes, std::vector<double> features,
                     std::vector<std::size_t> labels);

/// Class means depend on spec.rng_seed only; sample noise on (rng_seed, stream).
/// Use different streams for the train and test draws of the same task.
Dataset generate_synthetic(const LongTailProfile& profile, const SyntheticDataSpec& spec, std::uint64_t stream = 0);

/// Class means used by generate_synthetic, row-major n_classes x dim.
std::vector<double> synthetic_class_means(std::size_t n_classes, const SyntheticDataSpec& spec);

/// Per class, keeps a uniformly drawn subset of size target[i] (without
/// replacement, original row order preserved). Throws std::invalid_argument if a
/// class is too small or the class count differs.
Dataset subsample_to_profile(const Dataset& data, const ClassCounts& target, std::uint64_t seed);
Dataset subsample_to_profile(const Dataset& data, const LongTailProfile& profile, std::uint64_t seed);

/// Stratified split; round(n_i * holdout_fraction) samples of each class are held
/// out, but every non-empty class keeps at least one training sample.
std::pair<Dataset, Dataset> stratified_split(const Dataset& data, double holdout_fraction, std::uint64_t seed);

struct CsvSchema {
  std::optional<std::size_t> n_classes;  ///< if unset, max label + 1
  std::optional<std::size_t> dim;        ///< if set, enforced
};

/// Reads `label,feature_1,...,feature_d` rows after one header line.
/// Errors (std::runtime_error) name the offending line.
Dataset ingest_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
void write_csv(const Dataset& data, const std::filesystem::path& path);

/// `class_index,count` rows.
void write_profile_csv(const ClassCounts& counts, const std::filesystem::path& path);
ClassCounts read_profile_csv(const std::filesystem::path& path);

}  // namespace cbloss
