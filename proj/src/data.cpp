#include "dho/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "dho/rng.hpp"

namespace dho {

const char* to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::kTrain:
      return "train";
    case SplitTag::kVal:
      return "val";
    case SplitTag::kTest:
      return "test";
  }
  return "unknown";
}

Dataset::Dataset(std::vector<Example> examples, std::size_t num_classes, std::size_t feature_dim,
                 SplitTag tag)
    : examples_(std::move(examples)), num_classes_(num_classes), feature_dim_(feature_dim), tag_(tag) {
  if (num_classes_ < 2) throw SchemaError("dataset needs at least 2 classes");
  if (feature_dim_ == 0) throw SchemaError("dataset feature dimension must be positive");
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    const Example& ex = examples_[i];
    if (ex.features.size() != feature_dim_) {
      throw SchemaError("example " + std::to_string(i) + " has " + std::to_string(ex.features.size()) +
                        " features, expected " + std::to_string(feature_dim_));
    }
    if (ex.label && *ex.label >= num_classes_) {
      throw SchemaError("example " + std::to_string(i) + " has label " + std::to_string(*ex.label) +
                        " >= " + std::to_string(num_classes_) + " classes");
    }
  }
}

std::size_t Dataset::labeled_count() const {
  return static_cast<std::size_t>(
      std::count_if(examples_.begin(), examples_.end(), [](const Example& e) { return e.label.has_value(); }));
}

std::vector<std::optional<ClassId>> Dataset::labels() const {
  std::vector<std::optional<ClassId>> out;
  out.reserve(examples_.size());
  for (const auto& e : examples_) out.push_back(e.label);
  return out;
}

std::vector<std::vector<std::size_t>> Dataset::indices_by_class() const {
  std::vector<std::vector<std::size_t>> by_class(num_classes_);
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    if (examples_[i].label) by_class[*examples_[i].label].push_back(i);
  }
  return by_class;
}

std::vector<std::size_t> LabeledSplit::all() const {
  std::vector<std::size_t> out = labeled;
  out.insert(out.end(), unlabeled.begin(), unlabeled.end());
  return out;
}

namespace {

// Picks `take[c]` indices per class; everything else becomes unlabeled.
LabeledSplit stratified_pick(const Dataset& dataset, const std::vector<std::size_t>& take,
                             std::uint64_t seed) {
  Rng rng = named_stream(seed, "split");
  auto by_class = dataset.indices_by_class();
  std::vector<char> is_labeled(dataset.size(), 0);
  LabeledSplit split;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& pool = by_class[c];
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t k = 0; k < take[c]; ++k) {
      split.labeled.push_back(pool[k]);
      is_labeled[pool[k]] = 1;
    }
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (!is_labeled[i]) split.unlabeled.push_back(i);
  }
  return split;
}

}  // namespace

LabeledSplit kshot_split(const Dataset& dataset, std::size_t shots, std::uint64_t seed) {
  if (shots == 0) throw InvalidArgument("kshot_split: K must be positive");
  const auto by_class = dataset.indices_by_class();
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].size() < shots) {
      throw InsufficientData("class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                             " labeled examples, need " + std::to_string(shots));
    }
  }
  LabeledSplit split = stratified_pick(dataset, std::vector<std::size_t>(by_class.size(), shots), seed);
  split.shots_per_class = shots;
  return split;
}

LabeledSplit fraction_split(const Dataset& dataset, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidArgument("fraction_split: fraction must be in (0,1)");
  const std::size_t classes = dataset.num_classes();
  if (fraction * static_cast<double>(dataset.size()) < static_cast<double>(classes)) {
    throw InsufficientData("fraction " + std::to_string(fraction) + " of " + std::to_string(dataset.size()) +
                           " examples cannot cover " + std::to_string(classes) + " classes");
  }
  const auto by_class = dataset.indices_by_class();
  std::vector<std::size_t> take(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    if (by_class[c].empty()) throw InsufficientData("class " + std::to_string(c) + " has no labeled examples");
    const auto want = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(by_class[c].size())));
    take[c] = std::clamp<std::size_t>(want, 1, by_class[c].size());
  }
  LabeledSplit split = stratified_pick(dataset, take, seed);
  split.label_fraction = fraction;
  return split;
}

std::pair<LabeledSplit, std::vector<std::size_t>> carve_validation(const Dataset& dataset,
                                                                   const LabeledSplit& split,
                                                                   double fraction,
                                                                   std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidArgument("carve_validation: fraction must be in (0,1)");
  Rng rng = named_stream(seed, "validation");
  std::vector<std::vector<std::size_t>> by_class(dataset.num_classes());
  for (std::size_t idx : split.labeled) by_class[dataset[idx].label.value()].push_back(idx);

  LabeledSplit reduced = split;
  reduced.labeled.clear();
  std::vector<std::size_t> validation;
  for (auto& pool : by_class) {
    std::shuffle(pool.begin(), pool.end(), rng);
    auto carve = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pool.size())));
    carve = std::min(carve, pool.empty() ? 0 : pool.size() - 1);
    validation.insert(validation.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(carve));
    reduced.labeled.insert(reduced.labeled.end(), pool.begin() + static_cast<std::ptrdiff_t>(carve), pool.end());
  }
  return {std::move(reduced), std::move(validation)};
}

Dataset strip_labels(const Dataset& dataset, const LabeledSplit& split) {
  std::vector<char> keep(dataset.size(), 0);
  for (std::size_t i : split.labeled) keep.at(i) = 1;
  std::vector<Example> examples = dataset.examples();
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (!keep[i]) examples[i].label.reset();
  }
  return Dataset(std::move(examples), dataset.num_classes(), dataset.feature_dim(), dataset.tag());
}

Dataset restore_labels(const Dataset& dataset, const std::vector<std::optional<ClassId>>& labels) {
  if (labels.size() != dataset.size()) throw InvalidArgument("restore_labels: label column size mismatch");
  std::vector<Example> examples = dataset.examples();
  for (std::size_t i = 0; i < examples.size(); ++i) examples[i].label = labels[i];
  return Dataset(std::move(examples), dataset.num_classes(), dataset.feature_dim(), dataset.tag());
}

Dataset subset(const Dataset& dataset, const std::vector<std::size_t>& indices, SplitTag tag) {
  std::vector<Example> examples;
  examples.reserve(indices.size());
  for (std::size_t i : indices) examples.push_back(dataset.examples().at(i));
  return Dataset(std::move(examples), dataset.num_classes(), dataset.feature_dim(), tag);
}

GaussianMixture generate_gaussian_mixture(const MixtureParams& params, std::uint64_t seed) {
  if (params.num_classes < 2) throw InvalidArgument("generate_gaussian_mixture: need at least 2 classes");
  if (params.feature_dim < 2) throw InvalidArgument("generate_gaussian_mixture: need feature_dim >= 2");
  if (!(params.noise > 0.0)) throw InvalidArgument("generate_gaussian_mixture: noise must be positive");
  if (params.separation < 0.0) throw InvalidArgument("generate_gaussian_mixture: negative separation");

  Rng rng = named_stream(seed, "mixture-means");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix means(params.num_classes, params.feature_dim);
  for (std::size_t c = 0; c < params.num_classes; ++c) {
    auto row = means.row(c);
    for (double& v : row) v = normal(rng);
    const double n = norm2(row);
    for (double& v : row) v *= params.separation / n;
  }
  Dataset data = sample_mixture(means, params.per_class, params.noise, seed, SplitTag::kTrain);
  return {std::move(data), std::move(means)};
}

Dataset sample_mixture(const Matrix& means, std::size_t per_class, double noise, std::uint64_t seed,
                       SplitTag tag) {
  if (!(noise > 0.0)) throw InvalidArgument("sample_mixture: noise must be positive");
  Rng rng = named_stream(seed, std::string("mixture-samples-") + to_string(tag));
  std::normal_distribution<double> normal(0.0, noise);
  std::vector<Example> examples;
  examples.reserve(means.rows() * per_class);
  // Interleave classes so row order carries no class blocks.
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < means.rows(); ++c) {
      Vector x(means.row(c).begin(), means.row(c).end());
      for (double& v : x) v += normal(rng);
      examples.push_back({std::move(x), c});
    }
  }
  return Dataset(std::move(examples), means.rows(), means.cols(), tag);
}

namespace {

std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

Dataset load_csv_dataset(const std::filesystem::path& path, const CsvSchema& schema, SplitTag tag) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");

  const auto header = split_cells(line);
  std::optional<std::size_t> label_col;
  std::vector<std::size_t> feature_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto name = trim(header[i]);
    if (name == schema.label_column) {
      label_col = i;
    } else {
      feature_cols.push_back(i);
    }
  }
  const std::size_t dim = schema.feature_dim != 0 ? schema.feature_dim : feature_cols.size();
  if (feature_cols.size() != dim) {
    throw ParseError(1, "header has " + std::to_string(feature_cols.size()) + " feature columns, schema declares " +
                            std::to_string(dim));
  }

  std::vector<Example> examples;
  std::size_t max_label = 0;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_cells(line);
    if (cells.size() != header.size()) {
      throw ParseError(row, "expected " + std::to_string(header.size()) + " cells, got " +
                                std::to_string(cells.size()));
    }
    Example ex;
    ex.features.reserve(dim);
    for (std::size_t col : feature_cols) {
      const auto cell = trim(cells[col]);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty() || !std::isfinite(v)) {
        throw ParseError(row, "non-numeric feature '" + std::string(cell) + "' in column " + std::to_string(col));
      }
      ex.features.push_back(v);
    }
    if (label_col) {
      const auto cell = trim(cells[*label_col]);
      if (!cell.empty()) {
        std::size_t label = 0;
        const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), label);
        if (ec != std::errc() || ptr != cell.data() + cell.size()) {
          throw ParseError(row, "invalid label '" + std::string(cell) + "'");
        }
        if (schema.num_classes && label >= *schema.num_classes) {
          throw SchemaError("row " + std::to_string(row) + ": label " + std::to_string(label) + " >= " +
                            std::to_string(*schema.num_classes) + " classes");
        }
        max_label = std::max(max_label, label);
        ex.label = label;
      }
    }
    examples.push_back(std::move(ex));
  }
  const std::size_t classes = schema.num_classes.value_or(std::max<std::size_t>(2, max_label + 1));
  return Dataset(std::move(examples), classes, dim, tag);
}

void write_csv_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t j = 0; j < dataset.feature_dim(); ++j) out << 'f' << j << ',';
  out << "label\n";
  char buf[32];
  for (const auto& ex : dataset.examples()) {
    for (double v : ex.features) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf << ',';
    }
    if (ex.label) out << *ex.label;
    out << '\n';
  }
}

FeatureScaler FeatureScaler::fit(const Dataset& train) {
  if (train.size() == 0) throw InvalidArgument("FeatureScaler::fit: empty dataset");
  FeatureScaler s;
  const std::size_t d = train.feature_dim();
  s.mean_.assign(d, 0.0);
  s.scale_.assign(d, 0.0);
  for (const auto& ex : train.examples()) axpy(1.0, ex.features, s.mean_);
  for (double& m : s.mean_) m /= static_cast<double>(train.size());
  for (const auto& ex : train.examples()) {
    for (std::size_t j = 0; j < d; ++j) {
      const double dev = ex.features[j] - s.mean_[j];
      s.scale_[j] += dev * dev;
    }
  }
  for (double& v : s.scale_) {
    v = std::sqrt(v / static_cast<double>(train.size()));
    if (v == 0.0) v = 1.0;
  }
  return s;
}

Dataset FeatureScaler::apply(const Dataset& dataset) const {
  if (dataset.feature_dim() != mean_.size()) throw InvalidArgument("FeatureScaler::apply: dimension mismatch");
  std::vector<Example> examples = dataset.examples();
  for (auto& ex : examples) {
    for (std::size_t j = 0; j < ex.features.size(); ++j) ex.features[j] = (ex.features[j] - mean_[j]) / scale_[j];
  }
  return Dataset(std::move(examples), dataset.num_classes(), dataset.feature_dim(), dataset.tag());
}

}  // namespace dho
