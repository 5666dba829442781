#include "cbloss/covering.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "cbloss/rng.hpp"

namespace cbloss {
namespace {

template <typename OnStep>
double run_trial(double n_prototypes, std::int64_t n_samples, std::uint64_t seed, OnStep&& on_step) {
  SplitMix64 rng(seed);
  double volume = 1.0;
  on_step(volume);
  for (std::int64_t k = 1; k < n_samples; ++k) {
    // V can pass a non-integer N once (reaching ceil(N)); the clamp stops it there.
    const double p_overlap = std::min(volume / n_prototypes, 1.0);
    if (rng.uniform() >= p_overlap) volume += 1.0;
    on_step(volume);
  }
  return volume;
}

}  // namespace

void CoveringConfig::validate() const {
  if (!(n_prototypes >= 1.0) || !std::isfinite(n_prototypes)) {
    throw std::invalid_argument("n_prototypes must be finite and >= 1");
  }
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
  if (n_trials < 1) throw std::invalid_argument("n_trials must be >= 1");
}

CoveringResult simulate_covering(const CoveringConfig& config) {
  config.validate();
  const auto trials = static_cast<std::size_t>(config.n_trials);
  std::vector<double> volumes(trials);

  auto worker = [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      volumes[t] = run_trial(config.n_prototypes, config.n_samples, derive_seed(config.rng_seed, t),
                             [](double) {});
    }
  };

  unsigned threads = config.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : config.threads;
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, trials));
  if (threads <= 1) {
    worker(0, trials);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (trials + threads - 1) / threads;
    for (std::size_t begin = 0; begin < trials; begin += chunk) {
      pool.emplace_back(worker, begin, std::min(trials, begin + chunk));
    }
  }

  // Sequential reduction in trial order keeps the result thread-count independent.
  double sum = 0.0;
  for (double v : volumes) sum += v;
  const double mean = sum / static_cast<double>(trials);
  double sq = 0.0;
  for (double v : volumes) sq += (v - mean) * (v - mean);
  const double var = trials > 1 ? sq / static_cast<double>(trials - 1) : 0.0;

  CoveringResult result;
  result.mean_volume = mean;
  result.std_error = std::sqrt(var / static_cast<double>(trials));
  if (config.keep_trials) result.per_trial_volumes = std::move(volumes);
  return result;
}

std::vector<double> covering_trajectory(double n_prototypes, std::int64_t n_samples, std::uint64_t trial_seed) {
  CoveringConfig{n_prototypes, n_samples, 1, trial_seed}.validate();
  std::vector<double> path;
  path.reserve(static_cast<std::size_t>(n_samples));
  run_trial(n_prototypes, n_samples, trial_seed, [&](double v) { path.push_back(v); });
  return path;
}

bool covering_matches(const CoveringResult& result, double expected, std::int64_t n_trials, double z) {
  const double resolution = 1.0 / static_cast<double>(std::max<std::int64_t>(n_trials, 1));
  return std::abs(result.mean_volume - expected) <= z * std::max(result.std_error, resolution);
}

}  // namespace cbloss
