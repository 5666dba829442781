#include "cbloss/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <gtest/gtest.h>

#include "cbloss/harness.hpp"

namespace cbloss {
namespace {

TrainConfig quick_config(LossFamily family, int epochs = 20) {
  TrainConfig c = scaled_train_config(epochs);
  c.family = family;
  return c;
}

Dataset balanced_test(std::size_t classes, std::size_t dim, double scale, std::uint64_t seed) {
  return generate_synthetic(build_profile(classes, 200, 1.0), {dim, scale, 1.0, seed}, 1);
}

TEST(InitModel, LastLayerBias) {
  const auto sig = init_model(Architecture::kLinear, 0, 1000, 4, LossFamily::kSigmoidCe, 1);
  for (double b : sig.layers.back().bias) EXPECT_NEAR(b, -6.906754778648554, 1e-12);
  const auto foc = init_model(Architecture::kMlp, 8, 2, 4, LossFamily::kFocal, 1);
  for (double b : foc.layers.back().bias) EXPECT_EQ(b, 0.0);
  const auto soft = init_model(Architecture::kMlp, 8, 17, 4, LossFamily::kSoftmaxCe, 1);
  ASSERT_EQ(soft.layers.size(), 2u);
  for (double b : soft.layers.back().bias) EXPECT_EQ(b, 0.0);
  EXPECT_EQ(soft.n_classes(), 17u);
  EXPECT_EQ(soft.input_dim(), 4u);
}

TEST(InitModel, SeededWeights) {
  EXPECT_EQ(init_model(Architecture::kMlp, 16, 5, 3, LossFamily::kSoftmaxCe, 9),
            init_model(Architecture::kMlp, 16, 5, 3, LossFamily::kSoftmaxCe, 9));
  EXPECT_NE(init_model(Architecture::kLinear, 0, 5, 3, LossFamily::kSoftmaxCe, 9),
            init_model(Architecture::kLinear, 0, 5, 3, LossFamily::kSoftmaxCe, 10));
}

TEST(LearningRate, Schedule) {
  TrainConfig c;
  c.lr = 0.1;
  c.warmup_epochs = 5;
  c.decay_epochs = {160, 180};
  c.decay_factor = 0.01;
  const std::int64_t spe = 10;
  EXPECT_DOUBLE_EQ(lr_at(0, spe, c), 0.1 / 50.0);
  EXPECT_EQ(lr_at(5 * spe - 1, spe, c), 0.1);
  EXPECT_EQ(lr_at(100 * spe, spe, c), 0.1);
  EXPECT_DOUBLE_EQ(lr_at(170 * spe, spe, c), 0.001);
  EXPECT_DOUBLE_EQ(lr_at(190 * spe, spe, c), 0.1 * 0.01 * 0.01);

  TrainConfig flat;
  flat.warmup_epochs = 0;
  flat.decay_epochs.clear();
  for (std::int64_t s : {0, 1, 1000, 99999}) EXPECT_EQ(lr_at(s, 7, flat), flat.lr);

  flat.focal_lr_multiplier = 4.0;
  EXPECT_EQ(lr_at(3, 7, flat), flat.lr);
  flat.family = LossFamily::kFocal;
  EXPECT_EQ(lr_at(3, 7, flat), 4.0 * flat.lr);
}

TEST(LearningRate, ScaledDefaults) {
  const auto full = scaled_train_config(200);
  EXPECT_EQ(full.warmup_epochs, 5);
  EXPECT_EQ(full.decay_epochs, (std::vector<int>{160, 180}));
  const auto short_run = scaled_train_config(30);
  EXPECT_EQ(short_run.decay_epochs, (std::vector<int>{24, 27}));
  EXPECT_NO_THROW(short_run.validate());
  EXPECT_NO_THROW(scaled_train_config(1).validate());
}

TEST(TrainConfigValidation, Rejects) {
  TrainConfig c;
  c.decay_epochs = {180, 160};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.decay_epochs = {250};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.beta = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Evaluate, PerfectAndConstantPredictors) {
  // Identity features with a linear model that copies them: perfect predictor.
  std::vector<double> features;
  std::vector<std::size_t> labels;
  for (std::size_t k = 0; k < 4; ++k) {
    for (int r = 0; r < 5; ++r) {
      for (std::size_t d = 0; d < 4; ++d) features.push_back(d == k ? 1.0 : 0.0);
      labels.push_back(k);
    }
  }
  const auto test = make_dataset(4, 4, features, labels);
  ModelParams identity{Architecture::kLinear, {DenseLayer{4, 4, std::vector<double>(16, 0.0), std::vector<double>(4, 0.0)}}};
  for (std::size_t k = 0; k < 4; ++k) identity.layers[0].weights[k * 4 + k] = 1.0;
  const auto perfect = evaluate(identity, test);
  EXPECT_EQ(perfect.overall_error, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(perfect.confusion[i][j], i == j ? 5 : 0);
  }

  ModelParams constant{Architecture::kLinear, {DenseLayer{4, 4, std::vector<double>(16, 0.0), {0, 0, 1, 0}}}};
  const auto c = evaluate(constant, test);
  EXPECT_DOUBLE_EQ(c.overall_error, 3.0 / 4.0);
  EXPECT_DOUBLE_EQ(std::accumulate(c.per_class_error.begin(), c.per_class_error.end(), 0.0) / 4.0, c.overall_error);
  EXPECT_EQ(c.per_class_error[2], 0.0);
}

TEST(Train, SeparableBalancedTask) {
  const SyntheticDataSpec spec{2, 8.0, 1.0, 3};
  const auto train_set = generate_synthetic(build_profile(2, 200, 1.0), spec, 0);
  const auto test_set = generate_synthetic(build_profile(2, 500, 1.0), spec, 1);
  const auto record = train(train_set, test_set, quick_config(LossFamily::kSoftmaxCe, 50));
  ASSERT_TRUE(record.ok) << record.diagnostic;
  EXPECT_EQ(record.epochs.size(), 50u);
  EXPECT_LE(record.final_eval.overall_error, 0.02);
  for (const auto& e : record.epochs) {
    EXPECT_TRUE(std::isfinite(e.train_loss));
    for (double p : e.per_class_error) EXPECT_TRUE(p >= 0.0 && p <= 1.0);
    const double mean = std::accumulate(e.per_class_error.begin(), e.per_class_error.end(), 0.0) / 2.0;
    EXPECT_NEAR(mean, e.test_error, 1e-12);
  }
}

TEST(Train, DeterministicAndClassBalanceIdentities) {
  const Task task = make_task(DataSource{4, 6, 300, 3.0, 1.0, 5, 100}, 20.0);
  for (auto family : {LossFamily::kSoftmaxCe, LossFamily::kSigmoidCe, LossFamily::kFocal}) {
    auto plain = quick_config(family, 8);
    plain.gamma = 1.0;
    auto zero = plain;
    zero.beta = 0.0;
    const auto a = train(task.train, task.test, plain);
    EXPECT_TRUE(identical_results(a, train(task.train, task.test, plain)));
    EXPECT_TRUE(identical_results(a, train(task.train, task.test, zero)));

    auto cb = plain;
    cb.beta = 0.99;
    EXPECT_FALSE(identical_results(a, train(task.train, task.test, cb)));
  }
  const Task balanced = make_task(DataSource{4, 6, 300, 3.0, 1.0, 5, 100}, 1.0);
  auto plain = quick_config(LossFamily::kFocal, 8);
  plain.gamma = 2.0;
  auto cb = plain;
  cb.beta = 0.9999;
  EXPECT_TRUE(identical_results(train(balanced.train, balanced.test, plain), train(balanced.train, balanced.test, cb)));
}

TEST(Train, SigmoidBiasInitKeepsFirstLossSmall) {
  for (std::size_t classes : {10u, 100u}) {
    const Task task = make_task(DataSource{classes, 8, 200, 3.0, 1.0, 2, 20}, 10.0);
    for (auto family : {LossFamily::kSigmoidCe, LossFamily::kFocal}) {
      const auto model = init_model(Architecture::kLinear, 0, classes, 8, family, 0);
      const double bound = 2.0 * static_cast<double>(classes) * std::log(static_cast<double>(classes));
      for (std::size_t i = 0; i < 50; ++i) {
        EXPECT_LT(compute_loss(family, model.logits(task.train.row(i)), task.train.labels[i], 2.0).value, bound);
      }
    }
  }
}

TEST(Train, SingleStepDecreasesSampleLoss) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> normal;
  for (int draw = 0; draw < 20; ++draw) {
    const std::size_t classes = 2 + draw % 5;
    std::vector<double> x(6);
    for (auto& v : x) v = normal(rng);
    const std::size_t y = rng() % classes;
    std::vector<std::size_t> labels = {y};
    const auto data = make_dataset(6, classes, x, labels);
    for (auto family : {LossFamily::kSoftmaxCe, LossFamily::kSigmoidCe, LossFamily::kFocal}) {
      for (auto arch : {Architecture::kLinear, Architecture::kMlp}) {
        TrainConfig c;
        c.epochs = 1;
        c.batch_size = 1;
        c.lr = 1e-4;
        c.momentum = 0.0;
        c.weight_decay = 0.0;
        c.warmup_epochs = 0;
        c.decay_epochs.clear();
        c.family = family;
        c.gamma = 2.0;
        c.arch = arch;
        c.hidden_size = 16;
        c.seed = static_cast<std::uint64_t>(draw);
        const auto before = init_model(arch, 16, classes, 6, family, c.seed);
        const auto record = train(data, data, c);
        ASSERT_TRUE(record.ok);
        EXPECT_LT(compute_loss(family, record.model.logits(x), y, 2.0).value,
                  compute_loss(family, before.logits(x), y, 2.0).value);
      }
    }
  }
}

TEST(Train, NonFiniteLossIsRecorded) {
  // A huge step drives the weights to infinity after the first update.
  std::vector<double> x = {1e10, -1e10, 1e10, -1e10};
  std::vector<std::size_t> labels = {0, 1};
  const auto data = make_dataset(2, 2, x, labels);
  auto c = quick_config(LossFamily::kSoftmaxCe, 3);
  c.batch_size = 1;
  c.lr = 1e300;
  c.warmup_epochs = 0;
  const auto record = train(data, data, c);
  EXPECT_FALSE(record.ok);
  EXPECT_EQ(record.diagnostic.rfind("epoch 1 step 1:", 0), 0u) << record.diagnostic;
  EXPECT_EQ(to_json(record)["status"], "failed");
}

TEST(Train, DimensionMismatch) {
  const auto a = generate_synthetic(build_profile(2, 10, 1.0), {3, 1.0, 1.0, 0});
  const auto b = generate_synthetic(build_profile(2, 10, 1.0), {4, 1.0, 1.0, 0});
  EXPECT_THROW(train(a, b, quick_config(LossFamily::kSoftmaxCe, 1)), std::invalid_argument);
}

TEST(Train, MlpLearns) {
  const SyntheticDataSpec spec{5, 4.0, 1.0, 8};
  const auto train_set = generate_synthetic(build_profile(3, 150, 1.0), spec, 0);
  auto c = quick_config(LossFamily::kSigmoidCe, 30);
  c.arch = Architecture::kMlp;
  c.hidden_size = 32;
  const auto record = train(train_set, balanced_test(3, 5, 4.0, 8), c);
  ASSERT_TRUE(record.ok);
  EXPECT_LE(record.final_eval.overall_error, 0.15);
}

TEST(Train, ClassBalanceHelpsTheTail) {
  // C = 10, IF = 100, five seeds: CB softmax (beta = 0.9999) beats plain softmax
  // on the three smallest classes.
  double plain_tail = 0.0, cb_tail = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    DataSource source;
    source.data_seed = seed;
    const Task task = make_task(source, 100.0);
    auto plain = quick_config(LossFamily::kSoftmaxCe, 30);
    plain.seed = seed;
    auto cb = plain;
    cb.beta = 0.9999;
    plain_tail += tail_error(train(task.train, task.test, plain).final_eval.per_class_error, task.train.class_counts, 3);
    cb_tail += tail_error(train(task.train, task.test, cb).final_eval.per_class_error, task.train.class_counts, 3);
  }
  EXPECT_LT(cb_tail, plain_tail);
}

TEST(RunRecordIo, JsonAndMetrics) {
  const Task task = make_task(DataSource{3, 4, 60, 3.0, 1.0, 1, 20}, 5.0);
  auto c = quick_config(LossFamily::kFocal, 3);
  c.gamma = 0.5;
  c.beta = 0.99;
  const auto record = train(task.train, task.test, c);
  const auto j = to_json(record);
  EXPECT_EQ(j["config"]["family"], "focal");
  EXPECT_EQ(j["config"]["beta"], 0.99);
  EXPECT_EQ(j["epochs"].size(), 3u);
  EXPECT_EQ(j["final"]["confusion"].size(), 3u);
  EXPECT_EQ(j["status"], "ok");
  const auto csv = metrics_csv(record);
  EXPECT_EQ(csv.rfind("epoch,train_loss,test_error,per_class_errors\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

}  // namespace
}  // namespace cbloss
