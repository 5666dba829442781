#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "cbloss/effnum.hpp"

/// \file
/// Softmax cross-entropy, sigmoid cross-entropy and focal loss for a single
/// sample with one ground-truth label, with analytic gradients with respect to
/// the logits, plus the class-balanced re-weighting that applies to all three.
///
/// Logits are passed as spans; every entry must be finite (std::domain_error
/// otherwise). Labels are 0-indexed (std::out_of_range otherwise).

namespace cbloss {

enum class LossFamily { kSoftmaxCe, kSigmoidCe, kFocal };

std::string_view to_string(LossFamily family);
/// Accepts "softmax", "softmax_ce", "sigmoid", "sigmoid_ce", "focal".
LossFamily parse_loss_family(std::string_view name);

struct ClassBalance {
  double beta = 0.0;
  ClassCounts counts;
};

struct LossSpec {
  LossFamily family = LossFamily::kSoftmaxCe;
  double gamma = 0.0;  ///< focal only; forced to 0 for the other families
  std::optional<ClassBalance> class_balance;

  static LossSpec make(LossFamily family, double gamma = 0.0, std::optional<ClassBalance> cb = std::nullopt);
};

struct LossOutput {
  double value = 0.0;
  std::vector<double> grad;  ///< d value / d z_i
};

/// Numerically stable log(sigmoid(x)); finite for every finite x.
double log_sigmoid(double x);
double sigmoid(double x);

std::vector<double> softmax_probs(std::span<const double> z);

/// -log softmax(z)_y; grad = p - onehot(y).
LossOutput softmax_ce(std::span<const double> z, std::size_t y);

/// z^t: z_i for i == y, -z_i otherwise.
std::vector<double> transform_zt(std::span<const double> z, std::size_t y);

/// -sum_i log sigmoid(z^t_i).
LossOutput sigmoid_ce(std::span<const double> z, std::size_t y);

/// -sum_i (1 - p^t_i)^gamma log p^t_i with p^t_i = sigmoid(z^t_i).
///
/// Both p^t and 1 - p^t are handled in log space, so the gradient
///   d/dx [-(1-p)^g log p] = g p (1-p)^g log p - (1-p)^(g+1),   x = z^t_i
/// has no singular factor (1-p)^(g-1) and needs no clamping. gamma == 0
/// reproduces sigmoid_ce bit for bit.
LossOutput focal(std::span<const double> z, std::size_t y, double gamma);

/// Focal loss with the alpha_t factor folded into every term.
LossOutput alpha_balanced_focal(std::span<const double> z, std::size_t y, double gamma, double alpha_t);

/// Loss of `family` without any class-balance term.
LossOutput compute_loss(LossFamily family, std::span<const double> z, std::size_t y, double gamma = 0.0);
/// Loss described by `spec`, including its class-balance term if present.
LossOutput compute_loss(const LossSpec& spec, std::span<const double> z, std::size_t y);

/// Scales value and gradient by the normalized weight alpha_y.
LossOutput class_balanced(LossOutput loss, std::size_t y, double beta, const ClassCounts& counts);
LossOutput class_balanced(LossOutput loss, std::size_t y, const WeightVector& weights);

/// Whether class_balanced(focal(...)) equals alpha_balanced_focal with
/// alpha_t = normalized class weight of y, to relative 1e-12.
bool cb_focal_alpha_equivalence_check(std::span<const double> z, std::size_t y, double gamma, double beta,
                                      const ClassCounts& counts);

}  // namespace cbloss
