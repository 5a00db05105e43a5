#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dho/data.hpp"
#include "dho/model.hpp"
#include "dho/numcore.hpp"
#include "dho/teacher.hpp"

namespace dho {

struct LossBreakdown {
  double ce = 0.0;
  double kd = 0.0;
  double combined = 0.0;
  double lambda = 0.5;
};

/// One optimization step's worth of data. `teacher` must already be at the training
/// temperature (see TeacherPredictions::retempered).
struct LossInputs {
  const Dataset& data;
  const TeacherPredictions& teacher;
  std::span<const std::size_t> labeled;
  std::span<const std::size_t> unlabeled;
  double lambda = 0.5;
  double eta = 2.0;
};

/// Requires an SHO model; CE and KD both read the shared head.
LossBreakdown sho_losses(const StudentModel& model, const LossInputs& in, ClampTally* tally = nullptr);
/// CE through the CE head, KD through the KD head. Accepts SHO models (heads aliased).
LossBreakdown dho_losses(const StudentModel& model, const LossInputs& in, ClampTally* tally = nullptr);

/// Gradients of L_CE and L_KD kept apart over the full parameter set. Neither is scaled by λ.
struct GradientBundle {
  LossBreakdown losses;
  ModelGrad ce;
  ModelGrad kd;
  HeadMode mode = HeadMode::kDho;
  /// Batch mean over labeled examples of (p̂_CE − y)ᵀ(p̂_KD − p).
  double inner_product = 0.0;
  std::size_t clamp_events = 0;

  /// λ·∇L_CE + (1−λ)·∇L_KD, folded onto the model's head slots.
  ModelGrad combined(double lambda) const;
};

GradientBundle compute_gradients(const StudentModel& model, const LossInputs& in);

/// ∇_W = (p̂ − target) zᵀ / temperature and ∇_b = (p̂ − target) / temperature for a linear head
/// whose logits are divided by `temperature` before the softmax.
HeadGrad head_gradients(const ProbVector& probs, const ProbVector& target, std::span<const double> z,
                        double temperature = 1.0);

/// Backpropagates per-loss upstream feature gradients through the extractor, returning
/// (∇_θ L_CE, ∇_θ L_KD) separately.
std::pair<ExtractorGrad, ExtractorGrad> backprop_extractor(const FeatureExtractor& extractor,
                                                           std::span<const double> grad_z_ce,
                                                           std::span<const double> grad_z_kd,
                                                           const Activations& cache);

/// (p̂_CE − y)ᵀ(p̂_KD − p); the SHO form when both predictions come from one head.
double prediction_inner_product(const ProbVector& p_ce, std::size_t label, const ProbVector& p_kd,
                                const ProbVector& teacher);

struct ConflictSample {
  std::size_t step = 0;
  std::optional<double> cossim_head;
  std::optional<double> cossim_theta;
  double inner_product = 0.0;
  /// CosSim of the CE and KD gradients per extractor layer (weights and bias together).
  std::vector<std::optional<double>> per_layer;
};

/// Cosines between CE and KD gradients: head weights (shared W in SHO, W_CE vs W_KD in DHO)
/// and the flattened extractor parameters. Zero gradients leave the metric absent.
ConflictSample conflict_metrics(const GradientBundle& bundle, std::size_t step = 0);

struct ConflictTrace {
  HeadMode mode = HeadMode::kDho;
  std::vector<ConflictSample> samples;
};

void write_conflict_trace(const std::filesystem::path& path, const ConflictTrace& trace);
ConflictTrace read_conflict_trace(const std::filesystem::path& path);

/// Exponential moving average; the first present value seeds the average and absent entries
/// repeat the previous smoothed value.
std::vector<std::optional<double>> smooth_series(const std::vector<std::optional<double>>& values,
                                                 double factor = 0.99);

/// Mean over the batch of ‖P·z − t‖².
double feature_distillation_loss(const std::vector<Vector>& student_features, const std::vector<Vector>& teacher_features,
                                 const Matrix& projection);

}  // namespace dho
