#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "dho/data.hpp"
#include "dho/numcore.hpp"

namespace dho {

/// Frozen soft labels for every example of a dataset, produced at `temperature`.
class TeacherPredictions {
 public:
  TeacherPredictions(std::vector<ProbVector> rows, double temperature);

  const ProbVector& operator[](std::size_t i) const { return rows_[i]; }
  const std::vector<ProbVector>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  std::size_t num_classes() const { return rows_.empty() ? 0 : rows_.front().size(); }
  double temperature() const { return temperature_; }

  /// Teacher distribution re-tempered by an extra factor η, i.e. logits / (temperature·η).
  /// Computed as p^{1/η} renormalized, which is exact for softmax outputs.
  TeacherPredictions retempered(double eta) const;

 private:
  std::vector<ProbVector> rows_;
  double temperature_;
};

/// p^{1/η} / Σ p^{1/η}.
ProbVector retemper(const ProbVector& p, double eta);

struct OracleTeacherConfig {
  Matrix prototypes;  // C × d_in
  double logit_noise = 0.0;
  double temperature = 0.01;
  double corruption_rate = 0.0;
};

/// Synthetic teacher: logits_c = CosSim(x, prototype_c)/temperature + N(0, logit_noise²). With
/// probability corruption_rate the logits are replaced by a vector peaked on a uniformly drawn
/// wrong class (relative to the example's label, or the clean argmax if unlabeled).
TeacherPredictions oracle_teacher_predict(const OracleTeacherConfig& config, const Dataset& dataset,
                                          std::uint64_t seed);

/// CSV with header p0..p{C-1}, one row per dataset example. Rows within 1e-4 of unit sum are
/// renormalized; others raise ParseError.
TeacherPredictions load_teacher_predictions(const std::filesystem::path& path, const Dataset& dataset,
                                            double temperature);
void write_teacher_predictions(const std::filesystem::path& path, const TeacherPredictions& preds);

/// Fraction of labeled examples whose teacher argmax equals the label.
double measure_teacher_accuracy(const TeacherPredictions& preds, const Dataset& dataset);

}  // namespace dho
