#include "cbloss/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cbloss {
namespace {

void check_logits(std::span<const double> z) {
  if (z.empty()) throw std::invalid_argument("logits must not be empty");
  for (double v : z) {
    if (!std::isfinite(v)) throw std::domain_error("logits must be finite");
  }
}

void check_label(std::span<const double> z, std::size_t y) {
  if (y >= z.size()) {
    throw std::out_of_range("label " + std::to_string(y) + " out of range for " + std::to_string(z.size()) +
                            " classes");
  }
}

void check_gamma(double gamma) {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw std::domain_error("gamma must be finite and >= 0");
}

LossOutput scaled(LossOutput loss, double weight) {
  loss.value *= weight;
  for (auto& g : loss.grad) g *= weight;
  return loss;
}

bool close(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace

std::string_view to_string(LossFamily family) {
  switch (family) {
    case LossFamily::kSoftmaxCe: return "softmax";
    case LossFamily::kSigmoidCe: return "sigmoid";
    case LossFamily::kFocal: return "focal";
  }
  return "unknown";
}

LossFamily parse_loss_family(std::string_view name) {
  if (name == "softmax" || name == "softmax_ce") return LossFamily::kSoftmaxCe;
  if (name == "sigmoid" || name == "sigmoid_ce") return LossFamily::kSigmoidCe;
  if (name == "focal") return LossFamily::kFocal;
  throw std::invalid_argument("unknown loss family '" + std::string(name) + "'");
}

LossSpec LossSpec::make(LossFamily family, double gamma, std::optional<ClassBalance> cb) {
  check_gamma(gamma);
  return LossSpec{family, family == LossFamily::kFocal ? gamma : 0.0, std::move(cb)};
}

double log_sigmoid(double x) {
  // log(1 / (1 + e^-x)), split by sign so exp never overflows.
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> softmax_probs(std::span<const double> z) {
  check_logits(z);
  const double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) sum += p[i] = std::exp(z[i] - zmax);
  for (auto& v : p) v /= sum;
  return p;
}

LossOutput softmax_ce(std::span<const double> z, std::size_t y) {
  check_logits(z);
  check_label(z, y);
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  const double log_sum = std::log(sum);

  LossOutput out;
  out.value = std::max(0.0, log_sum - (z[y] - zmax));
  out.grad.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out.grad[i] = std::exp(z[i] - zmax - log_sum);
  out.grad[y] -= 1.0;
  return out;
}

std::vector<double> transform_zt(std::span<const double> z, std::size_t y) {
  check_label(z, y);
  std::vector<double> zt(z.begin(), z.end());
  for (std::size_t i = 0; i < zt.size(); ++i) {
    if (i != y) zt[i] = -zt[i];
  }
  return zt;
}

LossOutput sigmoid_ce(std::span<const double> z, std::size_t y) {
  check_logits(z);
  check_label(z, y);
  LossOutput out;
  out.grad.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double sign = i == y ? 1.0 : -1.0;
    const double x = sign * z[i];
    out.value -= log_sigmoid(x);
    // d/dx -log sigmoid(x) = -(1 - sigmoid(x)) = -sigmoid(-x)
    out.grad[i] = sign * -sigmoid(-x);
  }
  return out;
}

LossOutput focal(std::span<const double> z, std::size_t y, double gamma) {
  return alpha_balanced_focal(z, y, gamma, 1.0);
}

LossOutput alpha_balanced_focal(std::span<const double> z, std::size_t y, double gamma, double alpha_t) {
  check_logits(z);
  check_label(z, y);
  check_gamma(gamma);
  LossOutput out;
  out.grad.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double sign = i == y ? 1.0 : -1.0;
    const double x = sign * z[i];
    const double log_p = log_sigmoid(x);
    const double q = sigmoid(-x);  // 1 - p
    const double modulator = std::exp(gamma * log_sigmoid(-x));  // (1 - p)^gamma
    out.value -= alpha_t * (modulator * log_p);
    const double p = sigmoid(x);
    const double dx = gamma * p * modulator * log_p - q * modulator;
    out.grad[i] = alpha_t * (sign * dx);
  }
  return out;
}

LossOutput compute_loss(LossFamily family, std::span<const double> z, std::size_t y, double gamma) {
  switch (family) {
    case LossFamily::kSoftmaxCe: return softmax_ce(z, y);
    case LossFamily::kSigmoidCe: return sigmoid_ce(z, y);
    case LossFamily::kFocal: return focal(z, y, gamma);
  }
  throw std::invalid_argument("unknown loss family");
}

LossOutput compute_loss(const LossSpec& spec, std::span<const double> z, std::size_t y) {
  auto loss = compute_loss(spec.family, z, y, spec.gamma);
  if (spec.class_balance) loss = class_balanced(std::move(loss), y, spec.class_balance->beta, spec.class_balance->counts);
  return loss;
}

LossOutput class_balanced(LossOutput loss, std::size_t y, double beta, const ClassCounts& counts) {
  if (y >= counts.size()) throw std::out_of_range("label out of range for class counts");
  if (counts[y] == 0) throw std::domain_error("class " + std::to_string(y) + " has no training samples");
  return class_balanced(std::move(loss), y, class_balanced_weights(counts, beta));
}

LossOutput class_balanced(LossOutput loss, std::size_t y, const WeightVector& weights) {
  if (y >= weights.size()) throw std::out_of_range("label out of range for class weights");
  return scaled(std::move(loss), weights[y]);
}

bool cb_focal_alpha_equivalence_check(std::span<const double> z, std::size_t y, double gamma, double beta,
                                      const ClassCounts& counts) {
  const auto cb = class_balanced(focal(z, y, gamma), y, beta, counts);
  const double alpha_t = class_balanced_weights(counts, beta)[y];
  const auto ab = alpha_balanced_focal(z, y, gamma, alpha_t);
  if (!close(cb.value, ab.value, 1e-12)) return false;
  for (std::size_t i = 0; i < cb.grad.size(); ++i) {
    if (!close(cb.grad[i], ab.grad[i], 1e-12)) return false;
  }
  return true;
}

}  // namespace cbloss
