#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "dho/data.hpp"
#include "dho/model.hpp"
#include "dho/numcore.hpp"

namespace dho {

struct InterpolationSetting {
  double alpha = 0.5;
  double beta = 1.0;
  std::optional<double> validation_accuracy;

  void validate() const;
};

/// α·p_ce + (1−α)·softmax(kd_logits / β).
ProbVector interpolate(const ProbVector& p_ce, std::span<const double> kd_logits, double alpha, double beta);
/// α·p_ce + (1−α)·p_kd.
ProbVector mix(const ProbVector& p_ce, const ProbVector& p_kd, double alpha);

/// Per-input head outputs, computed once and reused across inference settings.
struct HeadOutputs {
  ProbVector p_ce;
  Vector kd_logits;
};

HeadOutputs head_outputs(const StudentModel& model, std::span<const double> x);
std::vector<HeadOutputs> head_outputs(const StudentModel& model, const Dataset& dataset);

/// Argmax of the interpolated distribution; ties go to the lowest class index.
std::size_t predict(const StudentModel& model, std::span<const double> x, const InterpolationSetting& setting);
std::size_t predict(const HeadOutputs& out, const InterpolationSetting& setting);

/// exp(−H(p_ce)) / (exp(−H(p_ce)) + exp(−H(p_kd))).
double entropy_adaptive_alpha(const ProbVector& p_ce, const ProbVector& p_kd);
/// Prediction with the entropy-adaptive α; KD head read at temperature `beta`.
std::size_t predict_adaptive(const HeadOutputs& out, double beta = 1.0);

/// Inference setting under which DHO reproduces SHO trained with λ: (α=λ, β=1).
InterpolationSetting emulate_sho(double lambda);

/// Fallback when no validation set exists: β=0.5, α=0.2 for teachers at or above
/// `accuracy_threshold`, α=0.4 otherwise.
InterpolationSetting heuristic_setting(double teacher_accuracy, double accuracy_threshold = 0.75);

struct GridSearchResult {
  std::vector<double> alphas;
  std::vector<double> betas;
  Matrix accuracy;  // rows = α, cols = β
  InterpolationSetting best;
};

std::vector<double> default_alpha_grid();
std::vector<double> default_beta_grid();

/// Accuracy at every (α, β) pair. Ties prefer α closest to 0.5, then smaller β.
GridSearchResult grid_search(const StudentModel& model, const Dataset& validation, const std::vector<double>& alphas,
                             const std::vector<double>& betas);
GridSearchResult grid_search(const std::vector<HeadOutputs>& outputs, const std::vector<std::size_t>& labels,
                             const std::vector<double>& alphas, const std::vector<double>& betas);

void write_grid_csv(const std::filesystem::path& path, const GridSearchResult& result);

struct EvalResult {
  double ce_head_accuracy = 0.0;
  double kd_head_accuracy = 0.0;
  double combined_accuracy = 0.0;
  std::vector<std::size_t> predictions;
  /// α actually used per example (constant unless adaptive).
  std::vector<double> alphas;
};

/// Accuracies over labeled examples; predictions cover every example.
EvalResult evaluate(const StudentModel& model, const Dataset& dataset, const InterpolationSetting& setting);
EvalResult evaluate_adaptive(const StudentModel& model, const Dataset& dataset, double beta = 1.0);

}  // namespace dho
