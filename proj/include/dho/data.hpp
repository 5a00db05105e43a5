#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dho/numcore.hpp"

namespace dho {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A class cannot supply the requested number of labels.
class InsufficientData : public DataError {
 public:
  using DataError::DataError;
};

/// Malformed CSV input; `row()` is 1-based and counts the header as row 1.
class ParseError : public DataError {
 public:
  ParseError(std::size_t row, const std::string& what)
      : DataError("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

using ClassId = std::size_t;

struct Example {
  Vector features;
  std::optional<ClassId> label;
};

enum class SplitTag { kTrain, kVal, kTest };

const char* to_string(SplitTag tag);

class Dataset {
 public:
  Dataset(std::vector<Example> examples, std::size_t num_classes, std::size_t feature_dim,
          SplitTag tag = SplitTag::kTrain);

  const std::vector<Example>& examples() const { return examples_; }
  const Example& operator[](std::size_t i) const { return examples_[i]; }
  std::size_t size() const { return examples_.size(); }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t feature_dim() const { return feature_dim_; }
  SplitTag tag() const { return tag_; }

  std::size_t labeled_count() const;
  std::vector<std::optional<ClassId>> labels() const;
  /// Indices of labeled examples grouped by class.
  std::vector<std::vector<std::size_t>> indices_by_class() const;

 private:
  std::vector<Example> examples_;
  std::size_t num_classes_;
  std::size_t feature_dim_;
  SplitTag tag_;
};

struct LabeledSplit {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;
  /// K in K-shot mode.
  std::optional<std::size_t> shots_per_class;
  /// Requested labeled fraction in fraction mode.
  std::optional<double> label_fraction;

  /// labeled ∪ unlabeled, labeled first.
  std::vector<std::size_t> all() const;
};

/// Uniformly samples K labeled examples per class without replacement.
LabeledSplit kshot_split(const Dataset& dataset, std::size_t shots, std::uint64_t seed);

/// Stratified sampling of round(fraction · |class|) labels per class, at least one per class.
LabeledSplit fraction_split(const Dataset& dataset, double fraction, std::uint64_t seed);

/// Moves about `fraction` of each class's labeled indices into a validation list, leaving at
/// least one labeled example per class. Returns the reduced split and the validation indices.
std::pair<LabeledSplit, std::vector<std::size_t>> carve_validation(const Dataset& dataset,
                                                                   const LabeledSplit& split,
                                                                   double fraction,
                                                                   std::uint64_t seed);

/// Copy of `dataset` in which every example outside split.labeled has its label removed.
Dataset strip_labels(const Dataset& dataset, const LabeledSplit& split);
/// Re-attaches a saved label column (as returned by Dataset::labels()).
Dataset restore_labels(const Dataset& dataset, const std::vector<std::optional<ClassId>>& labels);

/// Subset of `dataset` at `indices`, in that order.
Dataset subset(const Dataset& dataset, const std::vector<std::size_t>& indices, SplitTag tag);

struct MixtureParams {
  std::size_t num_classes = 4;
  std::size_t feature_dim = 16;
  std::size_t per_class = 100;
  double separation = 5.0;
  double noise = 1.0;
};

struct GaussianMixture {
  Dataset data;
  /// Class means, one row per class.
  Matrix means;
};

/// Class means uniform on the sphere of radius `separation`; samples are mean + N(0, noise²·I).
GaussianMixture generate_gaussian_mixture(const MixtureParams& params, std::uint64_t seed);

/// Draws `per_class` fresh samples around existing class means (for val/test partitions).
Dataset sample_mixture(const Matrix& means, std::size_t per_class, double noise, std::uint64_t seed,
                       SplitTag tag);

struct CsvSchema {
  std::size_t feature_dim = 0;
  /// Inferred as max(label) + 1 (at least 2) when absent.
  std::optional<std::size_t> num_classes;
  std::string label_column = "label";
};

Dataset load_csv_dataset(const std::filesystem::path& path, const CsvSchema& schema,
                         SplitTag tag = SplitTag::kTrain);
void write_csv_dataset(const std::filesystem::path& path, const Dataset& dataset);

/// Per-feature z-scoring fitted on training data only.
class FeatureScaler {
 public:
  static FeatureScaler fit(const Dataset& train);
  Dataset apply(const Dataset& dataset) const;
  const Vector& mean() const { return mean_; }
  const Vector& scale() const { return scale_; }

 private:
  Vector mean_;
  Vector scale_;
};

}  // namespace dho
