#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dho/config.hpp"
#include "dho/data.hpp"
#include "dho/model.hpp"
#include "dho/teacher.hpp"

namespace dho {

/// Everything a training run consumes, materialized from a RunConfig and a seed.
struct RunData {
  /// Training partition with every label the source provides; the student only reads split.labeled.
  Dataset train;
  LabeledSplit split;
  std::optional<Dataset> validation;
  std::optional<Dataset> test;
  /// Teacher soft labels for `train`, at the configured teacher temperature.
  TeacherPredictions teacher;
  /// Teacher top-1 accuracy on the labeled split.
  double teacher_accuracy = 0.0;
  /// Class prototypes behind the oracle teacher (mixture class means).
  std::optional<Matrix> prototypes;
  std::string dataset_descriptor;
  std::string teacher_descriptor;
};

RunData prepare_data(const RunConfig& config, std::uint64_t seed);

/// Initialized student for `data` (random or language-aware init, per config).
StudentModel build_student(const RunConfig& config, const RunData& data, std::uint64_t seed);

/// Class-embedding matrix (C × d) for language-aware init: the loaded file, or the teacher
/// prototypes mapped through the freshly initialized extractor.
Matrix class_embeddings(const RunConfig& config, const RunData& data, const FeatureExtractor& extractor);

/// Reads a headerless or headed numeric CSV into a matrix.
Matrix load_matrix_csv(const std::string& path);

}  // namespace dho
