// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   cbloss_acceptance [--workdir DIR] [--only N]...

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cbloss/config.hpp"
#include "cbloss/covering.hpp"
#include "cbloss/effnum.hpp"
#include "cbloss/harness.hpp"
#include "cbloss/longtail.hpp"
#include "cbloss/losses.hpp"
#include "cbloss/trainer.hpp"

namespace fs = std::filesystem;
using namespace cbloss;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double time_limit_s;  // <= 0: no limit
  std::function<Outcome(const fs::path&)> run;
};

const std::vector<double> kTableBetas = {0.9, 0.99, 0.999, 0.9999};

Outcome closed_form_vs_recurrence(const fs::path&) {
  std::vector<std::int64_t> ns;
  for (std::int64_t n = 1; n <= 100; ++n) ns.push_back(n);
  ns.push_back(1000);
  ns.push_back(10000);
  double worst = 0.0;
  std::string where;
  for (double beta : {0.0, 0.5, 0.9, 0.99, 0.999, 0.9999}) {
    for (auto n : ns) {
      const double a = effective_number(beta, n);
      const double b = effective_number_recursive(beta, n);
      const double rel = std::abs(a - b) / std::abs(b);
      if (rel > worst) {
        worst = rel;
        where = fmt::format("beta={} n={}", beta, n);
      }
    }
  }
  return {worst <= 1e-9, fmt::format("max rel err {:.3g}{}", worst, where.empty() ? "" : " at " + where)};
}

Outcome monte_carlo_oracle(const fs::path&) {
  int failures = 0;
  double worst_z = 0.0;
  std::uint64_t seed = 2024;
  for (double beta : {0.0, 0.5, 0.9, 0.99}) {
    for (std::int64_t n : {1, 10, 100}) {
      CoveringConfig c{prototypes_from_beta(beta), n, 100000, seed++};
      const auto r = simulate_covering(c);
      const double diff = std::abs(r.mean_volume - effective_number(beta, n));
      if (diff > 4.0 * r.std_error) ++failures;
      if (r.std_error > 0) worst_z = std::max(worst_z, diff / r.std_error);
    }
  }
  return {failures == 0, fmt::format("12 grid points, {} outside 4 se, max |z| {:.2f}", failures, worst_z)};
}

Outcome asymptotics(const fs::path&) {
  bool zero_ok = true;
  for (std::int64_t n = 1; n <= 10000; ++n) zero_ok = zero_ok && effective_number(0.0, n) == 1.0;
  const double beta = 1.0 - 1e-12;
  double worst = 1.0;
  for (std::int64_t n = 1; n <= 10000; ++n) worst = std::min(worst, effective_number(beta, n) / static_cast<double>(n));
  return {zero_ok && worst >= 1.0 - 1e-6,
          fmt::format("beta=0 exact: {}, min E_n/n at beta=1-1e-12: 1-{:.3g}", zero_ok ? "yes" : "no", 1.0 - worst)};
}

Outcome gradient_suite(const fs::path&) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  const double h = 1e-5;
  double worst = 0.0;
  std::string where;
  std::size_t checks = 0;
  for (auto family : {LossFamily::kSoftmaxCe, LossFamily::kSigmoidCe, LossFamily::kFocal}) {
    for (double gamma : {0.0, 0.5, 1.0, 2.0}) {
      if (family != LossFamily::kFocal && gamma != 0.0) continue;
      for (std::size_t c : {2u, 10u}) {
        for (int draw = 0; draw < 100; ++draw) {
          std::vector<double> z(c);
          for (auto& v : z) v = u(rng);
          const std::size_t y = rng() % c;
          const auto analytic = compute_loss(family, z, y, gamma).grad;
          for (std::size_t i = 0; i < c; ++i) {
            const double saved = z[i];
            z[i] = saved + h;
            const double up = compute_loss(family, z, y, gamma).value;
            z[i] = saved - h;
            const double down = compute_loss(family, z, y, gamma).value;
            z[i] = saved;
            const double numeric = (up - down) / (2 * h);
            // relative error, judged on absolute error for components below 1e-3
            const double rel =
                std::abs(analytic[i] - numeric) / std::max({std::abs(analytic[i]), std::abs(numeric), 1e-3});
            ++checks;
            if (rel > worst) {
              worst = rel;
              where = fmt::format("{} gamma={} C={}", to_string(family), gamma, c);
            }
          }
        }
      }
    }
  }
  return {worst <= 1e-5, fmt::format("{} components, max rel err {:.3g} ({})", checks, worst, where)};
}

Outcome degeneracies(const fs::path&) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 3.0);
  double worst = 0.0;
  for (int draw = 0; draw < 1000; ++draw) {
    const std::size_t c = 2 + rng() % 20;
    std::vector<double> z(c);
    for (auto& v : z) v = normal(rng);
    const std::size_t y = rng() % c;
    const auto f = focal(z, y, 0.0);
    const auto s = sigmoid_ce(z, y);
    worst = std::max(worst, std::abs(f.value - s.value) / std::max(1.0, std::abs(s.value)));
    for (std::size_t i = 0; i < c; ++i) worst = std::max(worst, std::abs(f.grad[i] - s.grad[i]));
  }

  int identical = 0, total = 0;
  DataSource source{5, 8, 200, 3.0, 1.0, 11, 50};
  const Task skewed = make_task(source, 20.0);
  const Task balanced = make_task(source, 1.0);
  for (auto family : {LossFamily::kSoftmaxCe, LossFamily::kSigmoidCe, LossFamily::kFocal}) {
    auto plain = scaled_train_config(10);
    plain.family = family;
    plain.gamma = family == LossFamily::kFocal ? 2.0 : 0.0;
    plain.seed = 3;
    auto zero = plain;
    zero.beta = 0.0;
    auto big = plain;
    big.beta = 0.9999;
    total += 2;
    identical += identical_results(train(skewed.train, skewed.test, plain), train(skewed.train, skewed.test, zero));
    identical +=
        identical_results(train(balanced.train, balanced.test, plain), train(balanced.train, balanced.test, big));
  }
  return {worst <= 1e-12 && identical == total,
          fmt::format("focal(0) vs sigmoid max diff {:.3g}; {}/{} CB runs bit-identical to plain", worst, identical,
                      total)};
}

Outcome weight_normalization(const fs::path&) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> classes(1, 100);
  std::uniform_real_distribution<double> log_count(0.0, 6.0);
  double worst = 0.0;
  for (int v = 0; v < 1000; ++v) {
    std::vector<std::int64_t> counts(classes(rng));
    for (auto& n : counts) n = std::llround(std::pow(10.0, log_count(rng)));
    const ClassCounts cc(counts);
    for (double beta : kTableBetas) {
      const auto w = class_balanced_weights(cc, beta);
      double sum = 0.0;
      for (double a : w.values()) sum += a;
      const double c = static_cast<double>(cc.size());
      worst = std::max(worst, std::abs(sum - c) / c);
    }
  }
  return {worst <= 1e-9, fmt::format("4000 weight vectors, max rel deviation of sum from C {:.3g}", worst)};
}

Outcome profile_round_trip(const fs::path&) {
  std::vector<std::string> misses;
  double worst = 0.0;
  int cases = 0;
  for (std::int64_t base : {500, 1000, 2000, 5000}) {
    for (std::size_t c : {10u, 100u}) {
      for (double f : {10.0, 20.0, 50.0, 100.0, 200.0}) {
        ++cases;
        const auto p = build_profile(c, base, mu_from_imbalance(c, f));
        const double rel = std::abs(imbalance_factor(p.counts) - f) / f;
        worst = std::max(worst, rel);
        if (rel > 0.05) {
          misses.push_back(fmt::format("base={} C={} F={} -> {:g} (min count {})", base, c, f,
                                       imbalance_factor(p.counts), p.counts.min()));
        }
      }
    }
  }
  std::string detail = fmt::format("{} profiles, max rel deviation {:.3g}", cases, worst);
  for (const auto& m : misses) detail += "; " + m;
  return {misses.empty(), detail};
}

Outcome trend_reproduction(const fs::path&) {
  double plain_tail = 0, cb_tail = 0, plain_all = 0, cb_all = 0;
  const int seeds = 5;
  for (int seed = 0; seed < seeds; ++seed) {
    DataSource source;  // C = 10, dim = 20, base 1000
    source.data_seed = static_cast<std::uint64_t>(seed);
    const Task task = make_task(source, 100.0);
    auto plain = scaled_train_config(30);
    plain.family = LossFamily::kSoftmaxCe;
    plain.seed = static_cast<std::uint64_t>(seed);
    auto cb = plain;
    cb.beta = 0.9999;
    const auto a = train(task.train, task.test, plain);
    const auto b = train(task.train, task.test, cb);
    if (!a.ok || !b.ok) return {false, "training run failed: " + a.diagnostic + b.diagnostic};
    plain_tail += tail_error(a.final_eval.per_class_error, task.train.class_counts, 3);
    cb_tail += tail_error(b.final_eval.per_class_error, task.train.class_counts, 3);
    plain_all += a.final_eval.overall_error;
    cb_all += b.final_eval.overall_error;
  }
  plain_tail /= seeds, cb_tail /= seeds, plain_all /= seeds, cb_all /= seeds;
  const double margin = plain_tail - cb_tail;
  return {margin >= 0.02 && cb_all < plain_all,
          fmt::format("tail-3 error {:.4f} -> {:.4f} (margin {:.2f} pp), overall {:.4f} -> {:.4f}", plain_tail, cb_tail,
                      100.0 * margin, plain_all, cb_all)};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome sweep_integrity(const fs::path& workdir) {
  Settings settings;
  settings.train = scaled_train_config(30);
  settings.grid = default_sweep_grid();
  SweepConfig config{settings.train, settings.grid, settings.data, settings.val_fraction, settings.tail_k, 1};

  std::vector<std::string> bodies;
  std::size_t rows = 0;
  bool all_ok = true, rectangular = true;
  for (const char* name : {"sweep_a", "sweep_b"}) {
    const auto out = run_sweep(config);
    const fs::path dir = workdir / name;
    fs::create_directories(dir);
    std::ofstream(dir / "results.csv", std::ios::binary) << results_csv(out.rows);
    const auto parsed = parse_results_csv(read_file(dir / "results.csv"));
    rows = parsed.size();
    all_ok = all_ok && out.all_ok;

    std::set<std::tuple<std::string, LossFamily, std::optional<double>, double, std::uint64_t>> keys;
    for (const auto& r : parsed) {
      keys.insert({r.dataset_id, r.family, r.beta, r.gamma, r.seed});
      rectangular = rectangular && r.per_class_errors.size() == config.data.n_classes;
    }
    rectangular = rectangular && keys.size() == config.grid.size() && parsed.size() == config.grid.size();
    bodies.push_back(results_csv_without_timing(parsed));
  }
  const bool same = bodies[0] == bodies[1];
  return {all_ok && rectangular && same,
          fmt::format("{} rows (expected {}), all ok: {}, rectangular: {}, rerun byte-identical: {}", rows,
                      config.grid.size(), all_ok ? "yes" : "no", rectangular ? "yes" : "no", same ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cbloss acceptance suite"};
  std::string workdir = "acceptance_work";
  std::vector<int> only;
  app.add_option("--workdir", workdir, "scratch directory for sweep outputs");
  app.add_option("--only", only, "run only the listed criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  const std::vector<Criterion> criteria = {
      {1, "closed form vs recurrence", 1.0, closed_form_vs_recurrence},
      {2, "Monte Carlo covering oracle", 30.0, monte_carlo_oracle},
      {3, "asymptotics", 0.0, asymptotics},
      {4, "gradient suite", 10.0, gradient_suite},
      {5, "degeneracies", 0.0, degeneracies},
      {6, "weight normalization", 0.0, weight_normalization},
      {7, "profile round-trip", 0.0, profile_round_trip},
      {8, "trend reproduction", 300.0, trend_reproduction},
      {9, "sweep integrity", 1800.0, sweep_integrity},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(workdir);
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = fmt::format("{:.2f} s", secs);
    if (c.time_limit_s > 0) {
      timing += fmt::format(" / limit {:g} s", c.time_limit_s);
      if (secs > c.time_limit_s) {
        o.pass = false;
        timing += " EXCEEDED";
      }
    }
    if (!o.pass) ++failed;
    fmt::print("[{}] {}. {}: {} ({})\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail, timing);
    std::fflush(stdout);
  }
  fmt::print("{} criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
