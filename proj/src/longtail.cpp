#include "cbloss/longtail.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

#include "cbloss/rng.hpp"

namespace cbloss {
namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& data) {
  std::vector<std::vector<std::size_t>> by_class(data.n_classes());
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);
  return by_class;
}

Dataset take_rows(const Dataset& data, const std::vector<std::size_t>& rows) {
  std::vector<double> features;
  features.reserve(rows.size() * data.dim);
  std::vector<std::size_t> labels;
  labels.reserve(rows.size());
  for (auto r : rows) {
    auto row = data.row(r);
    features.insert(features.end(), row.begin(), row.end());
    labels.push_back(data.labels[r]);
  }
  return make_dataset(data.dim, data.n_classes(), std::move(features), std::move(labels));
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

double mu_from_imbalance(std::size_t n_classes, double imbalance) {
  if (n_classes < 2) throw std::domain_error("need at least 2 classes to define an imbalance factor");
  if (!(imbalance >= 1.0) || !std::isfinite(imbalance)) throw std::domain_error("imbalance must be >= 1");
  return std::pow(imbalance, -1.0 / static_cast<double>(n_classes - 1));
}

LongTailProfile build_profile(std::size_t n_classes, std::int64_t base_count, double mu) {
  if (n_classes < 1) throw std::invalid_argument("n_classes must be >= 1");
  if (base_count < 1) throw std::invalid_argument("base_count must be >= 1");
  if (!(mu > 0.0 && mu <= 1.0)) throw std::invalid_argument("mu must lie in (0, 1]");
  std::vector<std::int64_t> counts(n_classes);
  for (std::size_t i = 0; i < n_classes; ++i) {
    // nearbyint under the default FE_TONEAREST mode rounds half to even.
    const double target = static_cast<double>(base_count) * std::pow(mu, static_cast<double>(i));
    counts[i] = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::nearbyint(target)));
  }
  return LongTailProfile{n_classes, base_count, mu, ClassCounts(std::move(counts))};
}

double imbalance_factor(const ClassCounts& counts) {
  if (counts.min() <= 0) throw std::domain_error("imbalance factor undefined with an empty class");
  return static_cast<double>(counts.max()) / static_cast<double>(counts.min());
}

void SyntheticDataSpec::validate() const {
  if (dim < 1) throw std::invalid_argument("dim must be >= 1");
  if (!(class_mean_scale > 0.0)) throw std::invalid_argument("class_mean_scale must be > 0");
  if (!(noise_std > 0.0)) throw std::invalid_argument("noise_std must be > 0");
}

Dataset make_dataset(std::size_t dim, std::size_t n_classes, std::vector<double> features,
                     std::vector<std::size_t> labels) {
  if (dim < 1) throw std::invalid_argument("dataset dim must be >= 1");
  if (features.size() != labels.size() * dim) {
    throw std::invalid_argument("feature matrix size does not match labels x dim");
  }
  if (labels.empty()) throw std::invalid_argument("empty dataset");
  std::vector<std::int64_t> counts(n_classes, 0);
  for (auto y : labels) {
    if (y >= n_classes) throw std::out_of_range(fmt::format("label {} out of range for {} classes", y, n_classes));
    ++counts[y];
  }
  return Dataset{dim, std::move(features), std::move(labels), ClassCounts(std::move(counts))};
}

std::vector<double> synthetic_class_means(std::size_t n_classes, const SyntheticDataSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(derive_seed(spec.rng_seed, 0));
  std::normal_distribution<double> normal;
  std::vector<double> means(n_classes * spec.dim);
  for (std::size_t c = 0; c < n_classes; ++c) {
    double norm = 0.0;
    for (std::size_t d = 0; d < spec.dim; ++d) {
      const double g = normal(rng);
      means[c * spec.dim + d] = g;
      norm += g * g;
    }
    norm = std::sqrt(norm);
    for (std::size_t d = 0; d < spec.dim; ++d) means[c * spec.dim + d] *= spec.class_mean_scale / norm;
  }
  return means;
}

Dataset generate_synthetic(const LongTailProfile& profile, const SyntheticDataSpec& spec, std::uint64_t stream) {
  const std::size_t c = profile.counts.size();
  const auto means = synthetic_class_means(c, spec);
  std::mt19937_64 rng(derive_seed(spec.rng_seed, stream + 1));
  std::normal_distribution<double> normal;

  const auto total = static_cast<std::size_t>(profile.counts.total());
  std::vector<double> features;
  features.reserve(total * spec.dim);
  std::vector<std::size_t> labels;
  labels.reserve(total);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::int64_t s = 0; s < profile.counts[k]; ++s) {
      for (std::size_t d = 0; d < spec.dim; ++d) {
        features.push_back(means[k * spec.dim + d] + spec.noise_std * normal(rng));
      }
      labels.push_back(k);
    }
  }
  return make_dataset(spec.dim, c, std::move(features), std::move(labels));
}

Dataset subsample_to_profile(const Dataset& data, const ClassCounts& target, std::uint64_t seed) {
  if (target.size() != data.n_classes()) {
    throw std::invalid_argument(
        fmt::format("profile has {} classes but dataset has {}", target.size(), data.n_classes()));
  }
  const auto by_class = indices_by_class(data);
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    const auto want = static_cast<std::size_t>(target[k]);
    if (want > by_class[k].size()) {
      throw std::invalid_argument(fmt::format("class {} has {} samples, {} requested", k, by_class[k].size(), want));
    }
    std::mt19937_64 rng(derive_seed(seed, k));
    std::sample(by_class[k].begin(), by_class[k].end(), std::back_inserter(keep), want, rng);
  }
  std::sort(keep.begin(), keep.end());
  return take_rows(data, keep);
}

Dataset subsample_to_profile(const Dataset& data, const LongTailProfile& profile, std::uint64_t seed) {
  return subsample_to_profile(data, profile.counts, seed);
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& data, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw std::invalid_argument("holdout fraction must lie in (0, 1)");
  }
  const auto by_class = indices_by_class(data);
  std::vector<std::size_t> train, held;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto idx = by_class[k];
    if (idx.empty()) continue;
    std::mt19937_64 rng(derive_seed(seed, k));
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_held = static_cast<std::size_t>(std::nearbyint(static_cast<double>(idx.size()) * holdout_fraction));
    n_held = std::min(n_held, idx.size() - 1);
    held.insert(held.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_held));
    train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_held), idx.end());
  }
  if (held.empty()) throw std::invalid_argument("holdout split is empty; too few samples per class");
  std::sort(train.begin(), train.end());
  std::sort(held.begin(), held.end());
  return {take_rows(data, train), take_rows(data, held)};
}

Dataset ingest_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(fmt::format("{}: empty dataset", path.string()));
  const auto header = split_commas(trim(line));
  if (header.size() < 2 || header[0] != "label") {
    throw std::runtime_error(fmt::format("{}:1: header must be 'label,feature_1,...'", path.string()));
  }
  const std::size_t dim = header.size() - 1;
  if (schema.dim && *schema.dim != dim) {
    throw std::runtime_error(fmt::format("{}: expected {} features, header has {}", path.string(), *schema.dim, dim));
  }

  std::vector<double> features;
  std::vector<std::size_t> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_commas(trim(line));
    if (fields.size() != header.size()) {
      throw std::runtime_error(fmt::format("{}:{}: expected {} fields, found {}", path.string(), line_no,
                                           header.size(), fields.size()));
    }
    long long label = 0;
    if (!parse_number(fields[0], label)) {
      throw std::runtime_error(fmt::format("{}:{}: bad label '{}'", path.string(), line_no, fields[0]));
    }
    if (label < 0 || (schema.n_classes && static_cast<std::size_t>(label) >= *schema.n_classes)) {
      throw std::runtime_error(fmt::format("{}:{}: label {} out of range", path.string(), line_no, label));
    }
    labels.push_back(static_cast<std::size_t>(label));
    for (std::size_t d = 1; d < fields.size(); ++d) {
      double v = 0.0;
      if (!parse_number(fields[d], v) || !std::isfinite(v)) {
        throw std::runtime_error(fmt::format("{}:{}: bad feature '{}'", path.string(), line_no, fields[d]));
      }
      features.push_back(v);
    }
  }
  if (labels.empty()) throw std::runtime_error(fmt::format("{}: empty dataset", path.string()));
  const std::size_t n_classes = schema.n_classes.value_or(*std::max_element(labels.begin(), labels.end()) + 1);
  return make_dataset(dim, n_classes, std::move(features), std::move(labels));
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << "label";
  for (std::size_t d = 1; d <= data.dim; ++d) out << ",feature_" << d;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.labels[i];
    for (double v : data.row(i)) out << ',' << fmt::format("{}", v);  // shortest round-trip form
    out << '\n';
  }
}

void write_profile_csv(const ClassCounts& counts, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << "class_index,count\n";
  for (std::size_t i = 0; i < counts.size(); ++i) out << i << ',' << counts[i] << '\n';
}

ClassCounts read_profile_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line) || trim(line) != "class_index,count") {
    throw std::runtime_error(fmt::format("{}:1: header must be 'class_index,count'", path.string()));
  }
  std::vector<std::int64_t> counts;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_commas(trim(line));
    std::size_t index = 0;
    std::int64_t count = 0;
    if (fields.size() != 2 || !parse_number(fields[0], index) || !parse_number(fields[1], count) ||
        index != counts.size()) {
      throw std::runtime_error(fmt::format("{}:{}: malformed profile row", path.string(), line_no));
    }
    counts.push_back(count);
  }
  return ClassCounts(std::move(counts));
}

}  // namespace cbloss
