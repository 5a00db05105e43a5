#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dho/data.hpp"
#include "dho/losses.hpp"
#include "dho/model.hpp"
#include "dho/teacher.hpp"

namespace dho {

enum class OptimizerKind { kAdamW, kSgd };

const char* to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& s);

struct TrainConfig {
  double lambda = 0.5;
  /// ζ: temperature the teacher predictions were produced at.
  double teacher_temperature = 0.01;
  /// η: extra temperature on the student KD logits; teacher is re-tempered to ζ·η.
  double eta = 2.0;
  std::size_t epochs = 200;
  std::size_t batch_labeled = 64;
  std::size_t batch_unlabeled = 64;
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  bool cosine_decay = true;
  std::size_t warmup_steps = 0;
  OptimizerKind optimizer = OptimizerKind::kAdamW;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Std-dev of Gaussian noise added to input features each epoch; 0 disables it.
  double feature_jitter = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Raised when a loss or gradient stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptimizerState {
  std::size_t step = 0;
  std::vector<Vector> first_moment;
  std::vector<Vector> second_moment;
};

/// One AdamW (decoupled weight decay) or SGD update at learning rate lr·multiplier.
void optimizer_step(const std::vector<ParamView>& params, const std::vector<ParamView>& grads, OptimizerState& state,
                    const TrainConfig& config, double multiplier = 1.0);

/// Linear warmup to 1 over `warmup_steps`, then half-cosine decay to 0 at `total_steps`.
double cosine_schedule(std::size_t step, std::size_t total_steps, std::size_t warmup_steps);

/// Number of optimizer steps per epoch: ceil(|D^(l) ∪ D^(u)| / B′).
std::size_t steps_per_epoch(const LabeledSplit& split, const TrainConfig& config);

struct EpochStats {
  double ce = 0.0;
  double kd = 0.0;
  double combined = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  ConflictTrace trace;
  std::size_t steps = 0;
  std::size_t clamp_events = 0;
  bool labeled_with_replacement = false;
  double wall_seconds = 0.0;
};

/// Trains `model` in place. SHO and DHO share this loop; the model's head aliasing decides
/// which parameters each loss reaches. Labels outside split.labeled are never read.
TrainReport train(StudentModel& model, const Dataset& data, const LabeledSplit& split,
                  const TeacherPredictions& teacher, const TrainConfig& config, OptimizerState* state = nullptr);

struct ProbeConfig {
  std::size_t epochs = 100;
  std::size_t batch = 64;
  double learning_rate = 1e-2;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

/// Fits a fresh linear head with CE on frozen extractor features of a fully labeled set.
ProbeResult linear_probe(const FeatureExtractor& extractor, const Dataset& train_set, const Dataset& test_set,
                         const ProbeConfig& config);

/// Same protocol on precomputed features; `features[i]` pairs with `labels[i]`.
ProbeResult linear_probe_features(const std::vector<Vector>& train_features, const std::vector<std::size_t>& train_labels,
                                  const std::vector<Vector>& test_features, const std::vector<std::size_t>& test_labels,
                                  std::size_t num_classes, const ProbeConfig& config);

}  // namespace dho
