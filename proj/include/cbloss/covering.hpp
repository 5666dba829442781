#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace cbloss {

/// Monte Carlo model of the two-outcome covering process: each new unit-volume
/// sample lands entirely inside the already covered volume V with probability
/// p = min(V / N, 1), or entirely outside (V += 1) otherwise. For integer N the
/// expected final volume is the effective number E_n; a non-integer N lets V
/// reach ceil(N), so the mean then exceeds E_n.
struct CoveringConfig {
  double n_prototypes = 1.0;  ///< N, may be non-integer
  std::int64_t n_samples = 1;
  std::int64_t n_trials = 1;
  std::uint64_t rng_seed = 0;
  bool keep_trials = false;  ///< fill CoveringResult::per_trial_volumes
  unsigned threads = 1;      ///< 0 = hardware concurrency

  void validate() const;
};

struct CoveringResult {
  double mean_volume = 0.0;
  double std_error = 0.0;
  std::optional<std::vector<double>> per_trial_volumes;
};

/// Runs n_trials independent trials. Trial t draws from a SplitMix64 stream
/// seeded with derive_seed(rng_seed, t), so the result does not depend on the
/// thread count. Deterministic for a fixed seed.
CoveringResult simulate_covering(const CoveringConfig& config);

/// Covered volume after each of the n_samples draws of a single trial.
std::vector<double> covering_trajectory(double n_prototypes, std::int64_t n_samples, std::uint64_t trial_seed);

/// |mean - expected| <= z * max(std_error, 1 / n_trials).
///
/// The 1 / n_trials floor is the resolution of the sample mean; without it a
/// degenerate run whose trials all agree (std_error == 0) could never match an
/// expectation that is not an integer.
bool covering_matches(const CoveringResult& result, double expected, std::int64_t n_trials, double z = 4.0);

}  // namespace cbloss
