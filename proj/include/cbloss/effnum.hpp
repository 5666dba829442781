#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

/// \file
/// Effective number of samples and the class-balanced weights derived from it.
///
/// A class whose feature space has volume N ("unique prototypes") and which has
/// been sampled n times covers, in expectation, E_n = (1 - beta^n) / (1 - beta)
/// of that volume, with beta = (N - 1) / N. Re-weighting the loss of a class by
/// 1 / E_n balances classes by covered volume instead of raw frequency.

namespace cbloss {

/// The overlap hyperparameter beta in [0, 1) and its prototype count N = 1 / (1 - beta).
class EffNumParams {
 public:
  static EffNumParams from_beta(double beta);
  static EffNumParams from_prototypes(double n_prototypes);

  double beta() const { return beta_; }
  /// N, the total volume reachable by sampling. Always 1 / (1 - beta).
  double prototypes() const;

 private:
  explicit EffNumParams(double beta) : beta_(beta) {}
  double beta_;
};

/// Per-class sample counts n_i. Counts may be zero, but at least one must be positive.
class ClassCounts {
 public:
  ClassCounts() = default;
  explicit ClassCounts(std::vector<std::int64_t> counts);

  std::size_t size() const { return counts_.size(); }
  std::int64_t operator[](std::size_t i) const { return counts_[i]; }
  std::span<const std::int64_t> values() const { return counts_; }
  std::int64_t total() const;
  std::int64_t max() const;
  std::int64_t min() const;

  bool operator==(const ClassCounts&) const = default;

 private:
  std::vector<std::int64_t> counts_;
};

/// Normalized class weights alpha_i, sum(alpha) == size().
class WeightVector {
 public:
  std::size_t size() const { return alphas_.size(); }
  double operator[](std::size_t i) const { return alphas_[i]; }
  std::span<const double> values() const { return alphas_; }

 private:
  friend WeightVector class_balanced_weights(const ClassCounts&, double);
  explicit WeightVector(std::vector<double> alphas) : alphas_(std::move(alphas)) {}
  std::vector<double> alphas_;
};

/// E_n = (1 - beta^n) / (1 - beta).
///
/// 1 - beta^n is evaluated as -expm1(n * log1p(-(1 - beta))), which keeps full
/// relative precision as beta -> 1 where the direct form cancels. The result is
/// clamped to the analytic bounds [1, min(n, 1 / (1 - beta))].
/// Throws std::domain_error unless 0 <= beta < 1 and n >= 1.
double effective_number(double beta, std::int64_t n);

/// E_n via the recurrence E_k = 1 + beta * E_{k-1}, E_1 = 1. O(n); an oracle
/// for effective_number.
double effective_number_recursive(double beta, std::int64_t n);

/// Unnormalized class-balanced term (1 - beta) / (1 - beta^n) = 1 / E_n.
double class_balanced_term(double beta, std::int64_t n);

/// beta = (N - 1) / N. Throws std::domain_error if N < 1.
double beta_from_prototypes(double n_prototypes);
/// N = 1 / (1 - beta). Throws std::domain_error unless 0 <= beta < 1.
double prototypes_from_beta(double beta);

/// alpha_i proportional to 1 / E_{n_i}, rescaled so that sum(alpha) = C.
///
/// C is the number of entries in `counts`. beta == 0 and all-equal counts
/// return exact ones. Throws std::domain_error on a zero count: the weight of
/// an empty class is undefined, so empty classes have to be dropped or
/// remapped by the caller.
WeightVector class_balanced_weights(const ClassCounts& counts, double beta);

}  // namespace cbloss
