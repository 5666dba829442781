#include "cbloss/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "cbloss/rng.hpp"

namespace cbloss {
namespace {

// Forward pass that keeps the hidden activations for backprop.
struct Activations {
  std::vector<double> hidden;  // post-ReLU, empty for linear models
  std::vector<double> logits;
};

void dense_forward(const DenseLayer& layer, std::span<const double> x, std::vector<double>& out) {
  out.assign(layer.bias.begin(), layer.bias.end());
  for (std::size_t o = 0; o < layer.out; ++o) {
    const double* w = layer.weights.data() + o * layer.in;
    double acc = 0.0;
    for (std::size_t i = 0; i < layer.in; ++i) acc += w[i] * x[i];
    out[o] += acc;
  }
}

void forward(const ModelParams& model, std::span<const double> x, Activations& act) {
  if (model.layers.size() == 1) {
    dense_forward(model.layers[0], x, act.logits);
    return;
  }
  dense_forward(model.layers[0], x, act.hidden);
  for (auto& h : act.hidden) h = std::max(h, 0.0);
  dense_forward(model.layers[1], act.hidden, act.logits);
}

// Accumulates d loss / d params into `grads` given d loss / d logits.
void backward(const ModelParams& model, std::span<const double> x, const Activations& act,
              std::span<const double> dlogits, std::vector<DenseLayer>& grads) {
  auto accumulate = [](DenseLayer& g, std::span<const double> input, std::span<const double> dout) {
    for (std::size_t o = 0; o < g.out; ++o) {
      const double d = dout[o];
      if (d == 0.0) continue;
      g.bias[o] += d;
      double* w = g.weights.data() + o * g.in;
      for (std::size_t i = 0; i < g.in; ++i) w[i] += d * input[i];
    }
  };
  if (model.layers.size() == 1) {
    accumulate(grads[0], x, dlogits);
    return;
  }
  const DenseLayer& top = model.layers[1];
  accumulate(grads[1], act.hidden, dlogits);
  std::vector<double> dhidden(top.in, 0.0);
  for (std::size_t o = 0; o < top.out; ++o) {
    const double* w = top.weights.data() + o * top.in;
    for (std::size_t i = 0; i < top.in; ++i) dhidden[i] += dlogits[o] * w[i];
  }
  for (std::size_t i = 0; i < top.in; ++i) {
    if (act.hidden[i] <= 0.0) dhidden[i] = 0.0;
  }
  accumulate(grads[0], x, dhidden);
}

DenseLayer zeros_like(const DenseLayer& layer) {
  return DenseLayer{layer.in, layer.out, std::vector<double>(layer.weights.size(), 0.0),
                    std::vector<double>(layer.bias.size(), 0.0)};
}

void zero(std::vector<DenseLayer>& layers) {
  for (auto& l : layers) {
    std::fill(l.weights.begin(), l.weights.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
}

}  // namespace

std::string_view to_string(Architecture arch) { return arch == Architecture::kLinear ? "linear" : "mlp"; }

Architecture parse_architecture(std::string_view name) {
  if (name == "linear") return Architecture::kLinear;
  if (name == "mlp") return Architecture::kMlp;
  throw std::invalid_argument(fmt::format("unknown architecture '{}'", name));
}

std::vector<double> ModelParams::logits(std::span<const double> x) const {
  if (x.size() != input_dim()) throw std::invalid_argument("input dimension mismatch");
  Activations act;
  forward(*this, x, act);
  return act.logits;
}

ModelParams init_model(Architecture arch, std::size_t hidden_size, std::size_t n_classes, std::size_t dim,
                       LossFamily family, std::uint64_t seed) {
  if (n_classes < 1 || dim < 1) throw std::invalid_argument("model needs at least one class and one input");
  if (arch == Architecture::kMlp && hidden_size < 1) throw std::invalid_argument("hidden_size must be >= 1");
  std::mt19937_64 rng(seed);
  auto make_layer = [&rng](std::size_t in, std::size_t out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    DenseLayer layer{in, out, std::vector<double>(in * out), std::vector<double>(out, 0.0)};
    for (auto& w : layer.weights) w = uniform(rng);
    return layer;
  };

  ModelParams model{arch, {}};
  if (arch == Architecture::kLinear) {
    model.layers.push_back(make_layer(dim, n_classes));
  } else {
    model.layers.push_back(make_layer(dim, hidden_size));
    model.layers.push_back(make_layer(hidden_size, n_classes));
  }
  if (family != LossFamily::kSoftmaxCe) {
    const double prior = 1.0 / static_cast<double>(n_classes);
    const double bias = -std::log((1.0 - prior) / prior);
    std::fill(model.layers.back().bias.begin(), model.layers.back().bias.end(), bias);
  }
  return model;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (warmup_epochs < 0) throw std::invalid_argument("warmup_epochs must be >= 0");
  for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
    if (decay_epochs[i] < 1 || decay_epochs[i] > epochs || (i > 0 && decay_epochs[i] <= decay_epochs[i - 1])) {
      throw std::invalid_argument("decay_epochs must be strictly increasing within [1, epochs]");
    }
  }
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw std::invalid_argument("decay_factor must lie in (0, 1]");
  if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be >= 0");
  if (beta && !(*beta >= 0.0 && *beta < 1.0)) throw std::invalid_argument("beta must lie in [0, 1)");
  if (!(focal_lr_multiplier > 0.0)) throw std::invalid_argument("focal_lr_multiplier must be > 0");
  if (arch == Architecture::kMlp && hidden_size < 1) throw std::invalid_argument("hidden_size must be >= 1");
}

LossSpec TrainConfig::loss_spec(const ClassCounts& train_counts) const {
  std::optional<ClassBalance> cb;
  if (beta) cb = ClassBalance{*beta, train_counts};
  return LossSpec::make(family, gamma, std::move(cb));
}

TrainConfig scaled_train_config(int epochs) {
  TrainConfig config;
  config.epochs = epochs;
  config.warmup_epochs = static_cast<int>(std::lround(5.0 * epochs / 200.0));
  config.decay_epochs.clear();
  for (int milestone : {160, 180}) {
    const int e = static_cast<int>(std::lround(static_cast<double>(milestone) * epochs / 200.0));
    if (e >= 1 && e <= epochs && (config.decay_epochs.empty() || e > config.decay_epochs.back())) {
      config.decay_epochs.push_back(e);
    }
  }
  return config;
}

double lr_at(std::int64_t step, std::int64_t steps_per_epoch, const TrainConfig& config) {
  if (step < 0 || steps_per_epoch < 1) throw std::invalid_argument("step must be >= 0 and steps_per_epoch >= 1");
  double lr = config.lr;
  if (config.family == LossFamily::kFocal) lr *= config.focal_lr_multiplier;
  const std::int64_t warmup_steps = static_cast<std::int64_t>(config.warmup_epochs) * steps_per_epoch;
  if (step < warmup_steps) lr *= static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  const std::int64_t epoch = step / steps_per_epoch;  // 0-based
  for (int milestone : config.decay_epochs) {
    if (epoch >= milestone) lr *= config.decay_factor;
  }
  return lr;
}

Evaluation evaluate(const ModelParams& model, const Dataset& test) {
  if (test.dim != model.input_dim() || test.n_classes() != model.n_classes()) {
    throw std::invalid_argument("test set shape does not match the model");
  }
  const std::size_t c = model.n_classes();
  Evaluation ev;
  ev.confusion.assign(c, std::vector<std::int64_t>(c, 0));
  Activations act;
  std::int64_t wrong = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    forward(model, test.row(i), act);
    const auto pred = static_cast<std::size_t>(std::max_element(act.logits.begin(), act.logits.end()) -
                                               act.logits.begin());
    ++ev.confusion[test.labels[i]][pred];
    if (pred != test.labels[i]) ++wrong;
  }
  ev.overall_error = static_cast<double>(wrong) / static_cast<double>(test.size());
  ev.per_class_error.resize(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    const auto n = test.class_counts[k];
    if (n > 0) ev.per_class_error[k] = 1.0 - static_cast<double>(ev.confusion[k][k]) / static_cast<double>(n);
  }
  return ev;
}

RunRecord train(const Dataset& data, const Dataset& test, const TrainConfig& config) {
  config.validate();
  if (data.dim != test.dim || data.n_classes() != test.n_classes()) {
    throw std::invalid_argument(fmt::format("train/test mismatch: dim {} vs {}, classes {} vs {}", data.dim,
                                            test.dim, data.n_classes(), test.n_classes()));
  }
  const auto start = std::chrono::steady_clock::now();

  RunRecord record;
  record.config = config;
  record.train_counts = data.class_counts;
  const LossSpec spec = config.loss_spec(data.class_counts);
  std::optional<WeightVector> weights;
  if (spec.class_balance) weights = class_balanced_weights(data.class_counts, spec.class_balance->beta);

  ModelParams model =
      init_model(config.arch, config.hidden_size, data.n_classes(), data.dim, config.family, config.seed);
  std::vector<DenseLayer> grads, velocity;
  for (const auto& l : model.layers) {
    grads.push_back(zeros_like(l));
    velocity.push_back(zeros_like(l));
  }

  const std::size_t n = data.size();
  const auto steps_per_epoch = static_cast<std::int64_t>((n + config.batch_size - 1) / config.batch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, 1));
  Activations act;
  std::int64_t step = 0;

  for (int epoch = 1; epoch <= config.epochs && record.ok; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < n; begin += config.batch_size, ++step) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      zero(grads);
      for (std::size_t b = begin; b < end; ++b) {
        const std::size_t idx = order[b];
        const auto x = data.row(idx);
        const std::size_t y = data.labels[idx];
        forward(model, x, act);
        LossOutput loss;
        try {
          loss = compute_loss(spec.family, act.logits, y, spec.gamma);
        } catch (const std::exception& e) {
          record.ok = false;
          record.diagnostic = fmt::format("epoch {} step {}: {}", epoch, step, e.what());
          break;
        }
        if (weights) loss = class_balanced(std::move(loss), y, *weights);
        if (!std::isfinite(loss.value)) {
          record.ok = false;
          record.diagnostic = fmt::format("epoch {} step {}: non-finite loss", epoch, step);
          break;
        }
        loss_sum += loss.value;
        for (auto& g : loss.grad) g *= inv_batch;
        backward(model, x, act, loss.grad, grads);
      }
      if (!record.ok) break;

      const double lr = lr_at(step, steps_per_epoch, config);
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& p = model.layers[l];
        auto& g = grads[l];
        auto& v = velocity[l];
        const bool last = l + 1 == model.layers.size();
        for (std::size_t i = 0; i < p.weights.size(); ++i) {
          v.weights[i] = config.momentum * v.weights[i] + g.weights[i] + config.weight_decay * p.weights[i];
          p.weights[i] -= lr * v.weights[i];
        }
        for (std::size_t i = 0; i < p.bias.size(); ++i) {
          const double decay = last ? 0.0 : config.weight_decay * p.bias[i];
          v.bias[i] = config.momentum * v.bias[i] + g.bias[i] + decay;
          p.bias[i] -= lr * v.bias[i];
        }
      }
    }
    if (!record.ok) break;

    const auto ev = evaluate(model, test);
    record.epochs.push_back(EpochMetrics{epoch, loss_sum / static_cast<double>(n), ev.overall_error,
                                         ev.per_class_error});
  }

  record.final_eval = evaluate(model, test);
  record.model = std::move(model);
  record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

bool identical_results(const RunRecord& a, const RunRecord& b) {
  return a.ok == b.ok && a.diagnostic == b.diagnostic && a.epochs == b.epochs && a.final_eval == b.final_eval &&
         a.model == b.model && a.train_counts == b.train_counts;
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["warmup_epochs"] = c.warmup_epochs;
  j["decay_epochs"] = c.decay_epochs;
  j["decay_factor"] = c.decay_factor;
  j["family"] = std::string(to_string(c.family));
  j["gamma"] = c.gamma;
  j["beta"] = c.beta ? nlohmann::json(*c.beta) : nlohmann::json("none");
  j["seed"] = c.seed;
  j["focal_lr_multiplier"] = c.focal_lr_multiplier;
  j["arch"] = std::string(to_string(c.arch));
  j["hidden_size"] = c.hidden_size;
  return j;
}

nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json j;
  j["config"] = to_json(r.config);
  j["train_counts"] = std::vector<std::int64_t>(r.train_counts.values().begin(), r.train_counts.values().end());
  auto& epochs = j["epochs"] = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"test_error", e.test_error},
                      {"per_class_error", e.per_class_error}});
  }
  j["final"] = {{"overall_error", r.final_eval.overall_error},
                {"per_class_error", r.final_eval.per_class_error},
                {"confusion", r.final_eval.confusion}};
  j["status"] = r.ok ? "ok" : "failed";
  if (!r.ok) j["diagnostic"] = r.diagnostic;
  j["wall_seconds"] = r.wall_seconds;
  return j;
}

std::string join_errors(std::span<const double> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ';';
    out += fmt::format("{:.6f}", values[i]);
  }
  return out;
}

std::string metrics_csv(const RunRecord& record) {
  std::string out = "epoch,train_loss,test_error,per_class_errors\n";
  for (const auto& e : record.epochs) {
    out += fmt::format("{},{:.9g},{:.6f},{}\n", e.epoch, e.train_loss, e.test_error, join_errors(e.per_class_error));
  }
  return out;
}

}  // namespace cbloss
