#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cbloss/longtail.hpp"
#include "cbloss/losses.hpp"

namespace cbloss {

enum class Architecture { kLinear, kMlp };

std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view name);

/// Fully connected layer, weights stored row-major (out x in).
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  bool operator==(const DenseLayer&) const = default;
};

/// Linear classifier (one layer) or one-hidden-layer ReLU network (two layers).
struct ModelParams {
  Architecture arch = Architecture::kLinear;
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().in; }
  std::size_t n_classes() const { return layers.back().out; }
  std::vector<double> logits(std::span<const double> x) const;

  bool operator==(const ModelParams&) const = default;
};

/// Glorot-uniform weights from std::mt19937_64(seed). The last-layer bias is
/// -log((1 - pi) / pi) with prior pi = 1 / C for the sigmoid-based families, so
/// every class starts at probability 1 / C instead of 0.5; it is 0 for softmax.
ModelParams init_model(Architecture arch, std::size_t hidden_size, std::size_t n_classes, std::size_t dim,
                       LossFamily family, std::uint64_t seed);

struct TrainConfig {
  int epochs = 200;
  std::size_t batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int warmup_epochs = 5;
  std::vector<int> decay_epochs = {160, 180};
  double decay_factor = 0.01;
  LossFamily family = LossFamily::kSoftmaxCe;
  double gamma = 0.0;
  std::optional<double> beta;  ///< class-balance term; counts come from the training data
  std::uint64_t seed = 0;
  double focal_lr_multiplier = 1.0;
  Architecture arch = Architecture::kLinear;
  std::size_t hidden_size = 64;

  void validate() const;
  LossSpec loss_spec(const ClassCounts& train_counts) const;
};

/// Default config for an `epochs`-long run: warmup and the decay milestones of
/// the 200-epoch schedule (5 warmup epochs, decay at 160 and 180) are scaled
/// proportionally.
TrainConfig scaled_train_config(int epochs);

/// Learning rate for global step `step` (0-based). Linear per-step warmup from
/// lr / W to lr over the first W = warmup_epochs * steps_per_epoch steps, then
/// one decay_factor multiplication for every milestone already reached. The
/// focal multiplier applies throughout when the family is focal.
double lr_at(std::int64_t step, std::int64_t steps_per_epoch, const TrainConfig& config);

struct Evaluation {
  double overall_error = 0.0;
  std::vector<double> per_class_error;
  std::vector<std::vector<std::int64_t>> confusion;  ///< [true][predicted]

  bool operator==(const Evaluation&) const = default;
};

/// Argmax prediction (lowest index wins ties). A class without test samples
/// reports error 0.
Evaluation evaluate(const ModelParams& model, const Dataset& test);

struct EpochMetrics {
  int epoch = 0;  ///< 1-based
  double train_loss = 0.0;
  double test_error = 0.0;
  std::vector<double> per_class_error;

  bool operator==(const EpochMetrics&) const = default;
};

struct RunRecord {
  TrainConfig config;
  ClassCounts train_counts;
  std::vector<EpochMetrics> epochs;
  Evaluation final_eval;
  ModelParams model;
  bool ok = true;
  std::string diagnostic;  ///< why the run stopped early, if !ok
  double wall_seconds = 0.0;
};

/// Shuffled mini-batch SGD with momentum (v <- m v + g, theta <- theta - lr v)
/// on the batch-mean loss. Class-balance weights are computed once from
/// data.class_counts. L2 decay applies to every parameter except the
/// last-layer bias. A non-finite loss stops the run with ok == false and a
/// diagnostic instead of throwing. Deterministic for a fixed config.
RunRecord train(const Dataset& data, const Dataset& test, const TrainConfig& config);

/// True when two runs produced bit-identical metrics, evaluation and final
/// parameters (config and wall clock are ignored).
bool identical_results(const RunRecord& a, const RunRecord& b);

nlohmann::json to_json(const TrainConfig& config);
nlohmann::json to_json(const RunRecord& record);
/// `epoch,train_loss,test_error,per_class_errors` with per-class errors joined by ';'.
std::string metrics_csv(const RunRecord& record);

/// Joins values with ';' using a fixed 6-decimal format.
std::string join_errors(std::span<const double> values);

}  // namespace cbloss
