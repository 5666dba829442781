#include "cbloss/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>
#include <tuple>

#include <fmt/format.h>

#include "cbloss/effnum.hpp"
#include "cbloss/rng.hpp"

namespace cbloss {
namespace {

constexpr std::uint64_t kSplitStream = 0x5eed;

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? std::nan("") : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double sq = 0.0;
  for (double x : v) sq += (x - m) * (x - m);
  return std::sqrt(sq / static_cast<double>(v.size() - 1));
}

// Mean per-class error over classes that have at least one sample.
double balanced_error(const Evaluation& ev, const Dataset& data) {
  double sum = 0.0;
  std::size_t classes = 0;
  for (std::size_t k = 0; k < data.n_classes(); ++k) {
    if (data.class_counts[k] == 0) continue;
    sum += ev.per_class_error[k];
    ++classes;
  }
  return sum / static_cast<double>(classes);
}

std::string format_error(double v) { return std::isnan(v) ? "" : fmt::format("{:.6f}", v); }

std::string row_prefix(const ReportRow& r) {
  return fmt::format("{},{:g},{},{},{:g},{},{},{},{},{}", r.dataset_id, r.imbalance, to_string(r.family),
                     format_beta(r.beta), r.gamma, r.seed, r.ok ? "ok" : "failed",
                     r.ok ? format_error(r.overall_error) : "", r.ok ? format_error(r.tail_error) : "",
                     r.ok ? join_errors(r.per_class_errors) : "");
}

template <typename T>
T parse_field(const std::string& text, const char* column, std::size_t line) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw SchemaError(fmt::format("line {}: bad value '{}' in column '{}'", line, text, column));
  }
  return value;
}

using GroupKey = std::tuple<std::string, LossFamily, double, std::optional<double>>;

GroupKey group_key(const ReportRow& r) { return {r.dataset_id, r.family, r.gamma, r.beta}; }

// Groups rows by configuration, keeping first-appearance order.
std::vector<std::pair<GroupKey, std::vector<const ReportRow*>>> group_rows(const std::vector<ReportRow>& rows) {
  std::vector<std::pair<GroupKey, std::vector<const ReportRow*>>> groups;
  std::map<GroupKey, std::size_t> index;
  for (const auto& r : rows) {
    auto key = group_key(r);
    auto [it, inserted] = index.emplace(key, groups.size());
    if (inserted) groups.push_back({key, {}});
    groups[it->second].second.push_back(&r);
  }
  return groups;
}

}  // namespace

std::string format_beta(const std::optional<double>& beta) { return beta ? fmt::format("{:g}", *beta) : "none"; }

void DataSource::validate() const {
  if (train_csv.has_value() != test_csv.has_value()) {
    throw std::invalid_argument("train_csv and test_csv must be given together");
  }
  if (train_csv) return;
  if (n_classes < 2) throw std::invalid_argument("n_classes must be >= 2");
  if (base_count < 1) throw std::invalid_argument("base_count must be >= 1");
  if (test_per_class < 1) throw std::invalid_argument("test_per_class must be >= 1");
  SyntheticDataSpec{dim, class_mean_scale, noise_std, data_seed}.validate();
}

std::string dataset_id(const DataSource& source, double imbalance) {
  const std::string stem = source.train_csv ? source.train_csv->stem().string() : "synthetic";
  return fmt::format("{}_if{:g}", stem, imbalance);
}

Task make_task(const DataSource& source, double imbalance) {
  source.validate();
  Task task;
  task.dataset_id = dataset_id(source, imbalance);
  task.imbalance = imbalance;
  if (source.train_csv) {
    const Dataset full = ingest_csv(*source.train_csv);
    task.test = ingest_csv(*source.test_csv, CsvSchema{full.n_classes(), full.dim});
    const std::int64_t smallest = full.class_counts.min();
    if (smallest < 1) throw std::invalid_argument("ingested training set has an empty class");
    task.profile = build_profile(full.n_classes(), smallest, mu_from_imbalance(full.n_classes(), imbalance));
    task.train = subsample_to_profile(full, task.profile, source.data_seed);
    return task;
  }
  const SyntheticDataSpec spec{source.dim, source.class_mean_scale, source.noise_std, source.data_seed};
  task.profile = build_profile(source.n_classes, source.base_count, mu_from_imbalance(source.n_classes, imbalance));
  task.train = generate_synthetic(task.profile, spec, 0);
  task.test = generate_synthetic(build_profile(source.n_classes, source.test_per_class, 1.0), spec, 1);
  return task;
}

void SweepGrid::validate() const {
  if (families.empty() || betas.empty() || imbalances.empty() || seeds.empty()) {
    throw std::invalid_argument("sweep grid axes must be non-empty");
  }
  const bool has_focal = std::find(families.begin(), families.end(), LossFamily::kFocal) != families.end();
  if (has_focal && gammas.empty()) throw std::invalid_argument("focal family needs at least one gamma");
  for (const auto& b : betas) {
    if (b && !(*b >= 0.0 && *b < 1.0)) throw std::invalid_argument("betas must lie in [0, 1)");
  }
  for (double g : gammas) {
    if (!(g >= 0.0)) throw std::invalid_argument("gammas must be >= 0");
  }
  for (double f : imbalances) {
    if (!(f >= 1.0)) throw std::invalid_argument("imbalances must be >= 1");
  }
}

std::size_t SweepGrid::size() const {
  std::size_t per_setting = 0;
  for (auto f : families) per_setting += f == LossFamily::kFocal ? gammas.size() : 1;
  return imbalances.size() * per_setting * betas.size() * seeds.size();
}

std::vector<GridPoint> expand_grid(const SweepGrid& grid) {
  grid.validate();
  std::vector<GridPoint> points;
  points.reserve(grid.size());
  for (double imbalance : grid.imbalances) {
    for (auto family : grid.families) {
      const std::vector<double> gammas = family == LossFamily::kFocal ? grid.gammas : std::vector<double>{0.0};
      for (double gamma : gammas) {
        for (const auto& beta : grid.betas) {
          for (auto seed : grid.seeds) points.push_back(GridPoint{imbalance, family, beta, gamma, seed});
        }
      }
    }
  }
  return points;
}

double tail_error(std::span<const double> per_class_error, const ClassCounts& train_counts, std::size_t k) {
  const std::size_t c = train_counts.size();
  if (per_class_error.size() != c) throw std::invalid_argument("per-class error length differs from class count");
  if (k == 0) k = (c + 2) / 3;
  k = std::min(k, c);
  std::vector<std::size_t> order(c);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return train_counts[a] < train_counts[b]; });
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += per_class_error[order[i]];
  return sum / static_cast<double>(k);
}

SweepOutput run_sweep(const SweepConfig& config) {
  const auto points = expand_grid(config.grid);
  if (config.val_fraction < 0.0 || config.val_fraction >= 1.0) {
    throw std::invalid_argument("val_fraction must lie in [0, 1)");
  }

  SweepOutput out;
  struct Split {
    Dataset fit;
    std::optional<Dataset> val;
  };
  std::vector<Split> splits;
  std::map<double, std::size_t> task_index;
  for (double imbalance : config.grid.imbalances) {
    if (task_index.count(imbalance)) continue;
    task_index[imbalance] = out.tasks.size();
    out.tasks.push_back(make_task(config.data, imbalance));
    const Task& task = out.tasks.back();
    if (config.val_fraction > 0.0) {
      auto [fit, val] = stratified_split(task.train, config.val_fraction, derive_seed(config.data.data_seed, kSplitStream));
      splits.push_back(Split{std::move(fit), std::move(val)});
    } else {
      splits.push_back(Split{task.train, std::nullopt});
    }
  }

  out.rows.resize(points.size());
  auto run_one = [&](std::size_t i) {
    const GridPoint& p = points[i];
    const std::size_t t = task_index.at(p.imbalance);
    const Task& task = out.tasks[t];
    const Split& split = splits[t];
    ReportRow row;
    row.dataset_id = task.dataset_id;
    row.imbalance = p.imbalance;
    row.family = p.family;
    row.beta = p.beta;
    row.gamma = p.gamma;
    row.seed = p.seed;
    TrainConfig tc = config.train;
    tc.family = p.family;
    tc.gamma = p.gamma;
    tc.beta = p.beta;
    tc.seed = p.seed;
    try {
      const RunRecord record = train(split.fit, task.test, tc);
      row.ok = record.ok;
      row.wall_seconds = record.wall_seconds;
      if (record.ok) {
        row.overall_error = record.final_eval.overall_error;
        row.per_class_errors = record.final_eval.per_class_error;
        row.tail_error = tail_error(row.per_class_errors, task.train.class_counts, config.tail_k);
        if (split.val) row.validation_error = balanced_error(evaluate(record.model, *split.val), *split.val);
      }
    } catch (const std::exception&) {
      row.ok = false;
    }
    out.rows[i] = std::move(row);
  };

  const unsigned jobs = std::max(1u, config.jobs == 0 ? std::thread::hardware_concurrency() : config.jobs);
  if (jobs == 1) {
    for (std::size_t i = 0; i < points.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned j = 0; j < jobs; ++j) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < points.size(); i = next++) run_one(i);
      });
    }
  }
  out.all_ok = std::all_of(out.rows.begin(), out.rows.end(), [](const ReportRow& r) { return r.ok; });
  return out;
}

std::string results_csv(const std::vector<ReportRow>& rows) {
  std::string out = std::string(kResultsHeader) + "\n";
  for (const auto& r : rows) out += fmt::format("{},{:.3f}\n", row_prefix(r), r.wall_seconds);
  return out;
}

std::string results_csv_without_timing(const std::vector<ReportRow>& rows) {
  std::string out;
  for (const auto& r : rows) out += row_prefix(r) + "\n";
  return out;
}

std::vector<ReportRow> parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty results file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto expected = split(kResultsHeader, ',');
  const auto header = split(line, ',');
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (i >= header.size() || header[i] != expected[i]) {
      const bool present = std::find(header.begin(), header.end(), expected[i]) != header.end();
      throw SchemaError(present ? fmt::format("column '{}' out of order", expected[i])
                                : fmt::format("missing column '{}'", expected[i]));
    }
  }
  if (header.size() > expected.size()) throw SchemaError(fmt::format("unexpected column '{}'", header[expected.size()]));

  std::vector<ReportRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != expected.size()) {
      throw SchemaError(fmt::format("line {}: expected {} columns, found {}", line_no, expected.size(), f.size()));
    }
    ReportRow r;
    r.dataset_id = f[0];
    r.imbalance = parse_field<double>(f[1], "imbalance", line_no);
    try {
      r.family = parse_loss_family(f[2]);
    } catch (const std::invalid_argument&) {
      throw SchemaError(fmt::format("line {}: bad value '{}' in column 'family'", line_no, f[2]));
    }
    if (f[3] != "none") r.beta = parse_field<double>(f[3], "beta", line_no);
    r.gamma = parse_field<double>(f[4], "gamma", line_no);
    r.seed = parse_field<std::uint64_t>(f[5], "seed", line_no);
    if (f[6] != "ok" && f[6] != "failed") {
      throw SchemaError(fmt::format("line {}: bad value '{}' in column 'status'", line_no, f[6]));
    }
    r.ok = f[6] == "ok";
    if (r.ok) {
      r.overall_error = parse_field<double>(f[7], "overall_error", line_no);
      r.tail_error = parse_field<double>(f[8], "tail_error", line_no);
      for (const auto& e : split(f[9], ';')) r.per_class_errors.push_back(parse_field<double>(e, "per_class_errors", line_no));
    }
    r.wall_seconds = parse_field<double>(f[10], "wall_seconds", line_no);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string summary_csv(const std::vector<ReportRow>& rows, Selection selection) {
  struct Aggregate {
    GroupKey key;
    std::size_t n = 0;
    double selection_error = 0.0, mean_overall = 0.0, std_overall = 0.0, mean_tail = 0.0, std_tail = 0.0;
    bool by_validation = false;
  };
  std::vector<Aggregate> aggregates;
  for (const auto& [key, members] : group_rows(rows)) {
    std::vector<double> overall, tail, val;
    for (const auto* r : members) {
      if (!r->ok) continue;
      overall.push_back(r->overall_error);
      tail.push_back(r->tail_error);
      if (r->validation_error) val.push_back(*r->validation_error);
    }
    if (overall.empty()) continue;
    Aggregate a{key, overall.size()};
    a.mean_overall = mean_of(overall);
    a.std_overall = std_of(overall);
    a.mean_tail = mean_of(tail);
    a.std_tail = std_of(tail);
    a.by_validation = selection == Selection::kValidation && val.size() == overall.size();
    a.selection_error = a.by_validation ? mean_of(val) : a.mean_overall;
    aggregates.push_back(a);
  }

  std::string out =
      "dataset_id,scope,family,beta,gamma,n_seeds,selection,selection_error,mean_overall_error,std_overall_error,"
      "mean_tail_error,std_tail_error\n";
  auto emit = [&](const std::string& scope, const Aggregate& a) {
    const auto& [ds, family, gamma, beta] = a.key;
    out += fmt::format("{},{},{},{},{:g},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", ds, scope, to_string(family),
                       format_beta(beta), gamma, a.n, a.by_validation ? "validation" : "test", a.selection_error,
                       a.mean_overall, a.std_overall, a.mean_tail, a.std_tail);
  };

  std::vector<std::string> datasets;
  for (const auto& a : aggregates) {
    if (std::find(datasets.begin(), datasets.end(), std::get<0>(a.key)) == datasets.end()) {
      datasets.push_back(std::get<0>(a.key));
    }
  }
  for (const auto& ds : datasets) {
    const Aggregate* overall_best = nullptr;
    for (auto family : {LossFamily::kSoftmaxCe, LossFamily::kSigmoidCe, LossFamily::kFocal}) {
      const Aggregate* best = nullptr;
      for (const auto& a : aggregates) {
        if (std::get<0>(a.key) != ds || std::get<1>(a.key) != family) continue;
        if (!best || a.selection_error < best->selection_error) best = &a;
      }
      if (!best) continue;
      emit(std::string(to_string(family)), *best);
      if (!overall_best || best->selection_error < overall_best->selection_error) overall_best = best;
    }
    if (overall_best) emit("overall", *overall_best);
  }
  return out;
}

std::string deltas_csv(const std::vector<ReportRow>& rows) {
  std::map<std::tuple<std::string, LossFamily, double, std::uint64_t>, const ReportRow*> baselines;
  for (const auto& r : rows) {
    if (!r.beta && r.ok) baselines[{r.dataset_id, r.family, r.gamma, r.seed}] = &r;
  }
  std::string out =
      "dataset_id,imbalance,family,gamma,beta,n_pairs,mean_overall_error,baseline_overall_error,delta_overall_error,"
      "mean_tail_error,baseline_tail_error,delta_tail_error\n";
  for (const auto& [key, members] : group_rows(rows)) {
    std::vector<double> overall, base_overall, tail, base_tail;
    for (const auto* r : members) {
      if (!r->ok) continue;
      auto it = baselines.find({r->dataset_id, r->family, r->gamma, r->seed});
      if (it == baselines.end()) continue;
      overall.push_back(r->overall_error);
      base_overall.push_back(it->second->overall_error);
      tail.push_back(r->tail_error);
      base_tail.push_back(it->second->tail_error);
    }
    if (overall.empty()) continue;
    const auto& [ds, family, gamma, beta] = key;
    std::vector<double> d_overall(overall.size()), d_tail(tail.size());
    for (std::size_t i = 0; i < overall.size(); ++i) {
      d_overall[i] = overall[i] - base_overall[i];
      d_tail[i] = tail[i] - base_tail[i];
    }
    out += fmt::format("{},{:g},{},{:g},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", ds, members.front()->imbalance,
                       to_string(family), gamma, format_beta(beta), overall.size(), mean_of(overall),
                       mean_of(base_overall), mean_of(d_overall), mean_of(tail), mean_of(base_tail), mean_of(d_tail));
  }
  return out;
}

std::string effnum_curves_csv(const std::string& dataset_id, const ClassCounts& counts,
                              const std::vector<double>& betas) {
  std::string out;
  for (double beta : betas) {
    const auto weights = class_balanced_weights(counts, beta);
    for (std::size_t i = 0; i < counts.size(); ++i) {
      out += fmt::format("{},{:g},{},{},{:.9g},{:.9g}\n", dataset_id, beta, i, counts[i],
                         effective_number(beta, counts[i]), weights[i]);
    }
  }
  return out;
}

}  // namespace cbloss
