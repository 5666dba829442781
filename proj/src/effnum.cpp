#include "cbloss/effnum.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cbloss {
namespace {

void check_beta(double beta) {
  if (!(beta >= 0.0 && beta < 1.0)) {
    throw std::domain_error("beta must lie in [0, 1), got " + std::to_string(beta));
  }
}

void check_n(std::int64_t n) {
  if (n < 1) throw std::domain_error("sample count must be >= 1, got " + std::to_string(n));
}

// 1 - beta^n without cancellation. 1 - beta is exact for beta >= 0.5.
double one_minus_pow(double beta, std::int64_t n) {
  if (beta == 0.0) return 1.0;
  return -std::expm1(static_cast<double>(n) * std::log1p(-(1.0 - beta)));
}

}  // namespace

EffNumParams EffNumParams::from_beta(double beta) {
  check_beta(beta);
  return EffNumParams(beta);
}

EffNumParams EffNumParams::from_prototypes(double n_prototypes) {
  return EffNumParams(beta_from_prototypes(n_prototypes));
}

double EffNumParams::prototypes() const { return prototypes_from_beta(beta_); }

ClassCounts::ClassCounts(std::vector<std::int64_t> counts) : counts_(std::move(counts)) {
  if (counts_.empty()) throw std::invalid_argument("class counts must have at least one class");
  if (std::any_of(counts_.begin(), counts_.end(), [](auto c) { return c < 0; })) {
    throw std::invalid_argument("class counts must be non-negative");
  }
  if (std::none_of(counts_.begin(), counts_.end(), [](auto c) { return c > 0; })) {
    throw std::invalid_argument("at least one class count must be positive");
  }
}

std::int64_t ClassCounts::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0});
}

std::int64_t ClassCounts::max() const { return *std::max_element(counts_.begin(), counts_.end()); }
std::int64_t ClassCounts::min() const { return *std::min_element(counts_.begin(), counts_.end()); }

double effective_number(double beta, std::int64_t n) {
  check_beta(beta);
  check_n(n);
  if (beta == 0.0 || n == 1) return 1.0;
  const double d = 1.0 - beta;
  const double e = one_minus_pow(beta, n) / d;
  return std::clamp(e, 1.0, std::min(static_cast<double>(n), 1.0 / d));
}

double effective_number_recursive(double beta, std::int64_t n) {
  check_beta(beta);
  check_n(n);
  double e = 1.0;
  for (std::int64_t k = 2; k <= n; ++k) e = 1.0 + beta * e;
  return e;
}

double class_balanced_term(double beta, std::int64_t n) {
  check_beta(beta);
  check_n(n);
  if (beta == 0.0 || n == 1) return 1.0;
  return (1.0 - beta) / one_minus_pow(beta, n);
}

double beta_from_prototypes(double n_prototypes) {
  if (!(n_prototypes >= 1.0) || std::isinf(n_prototypes)) {
    throw std::domain_error("prototype count N must be finite and >= 1");
  }
  return (n_prototypes - 1.0) / n_prototypes;
}

double prototypes_from_beta(double beta) {
  check_beta(beta);
  return 1.0 / (1.0 - beta);
}

WeightVector class_balanced_weights(const ClassCounts& counts, double beta) {
  check_beta(beta);
  const auto values = counts.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == 0) {
      throw std::domain_error("class " + std::to_string(i) +
                              " has no samples; its class-balanced weight is undefined");
    }
  }
  const std::size_t c = values.size();
  const bool uniform = std::all_of(values.begin(), values.end(), [&](auto n) { return n == values[0]; });
  if (beta == 0.0 || uniform) return WeightVector(std::vector<double>(c, 1.0));

  std::vector<double> raw(c);
  std::transform(values.begin(), values.end(), raw.begin(),
                 [beta](std::int64_t n) { return class_balanced_term(beta, n); });
  const double sum = std::accumulate(raw.begin(), raw.end(), 0.0);
  const double scale = static_cast<double>(c) / sum;
  for (auto& r : raw) r *= scale;
  return WeightVector(std::move(raw));
}

}  // namespace cbloss
