#include "dho/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "dho/rng.hpp"

namespace dho {

const char* to_string(OptimizerKind kind) { return kind == OptimizerKind::kAdamW ? "adamw" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adamw") return OptimizerKind::kAdamW;
  if (s == "sgd") return OptimizerKind::kSgd;
  throw InvalidArgument("unknown optimizer '" + s + "'");
}

void TrainConfig::validate() const {
  if (lambda < 0.0 || lambda > 1.0) throw InvalidArgument("lambda must be in [0,1]");
  if (!(teacher_temperature > 0.0)) throw InvalidArgument("teacher temperature must be positive");
  if (!(eta > 0.0)) throw InvalidArgument("eta must be positive");
  if (batch_labeled == 0 || batch_unlabeled == 0) throw InvalidArgument("batch sizes must be at least 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (weight_decay < 0.0) throw InvalidArgument("weight decay must be non-negative");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw InvalidArgument("Adam betas must be in [0,1)");
  if (feature_jitter < 0.0) throw InvalidArgument("feature jitter must be non-negative");
}

void optimizer_step(const std::vector<ParamView>& params, const std::vector<ParamView>& grads, OptimizerState& state,
                    const TrainConfig& config, double multiplier) {
  if (params.size() != grads.size()) throw InvalidArgument("optimizer_step: parameter/gradient group mismatch");
  for (std::size_t g = 0; g < params.size(); ++g) {
    if (params[g].values.size() != grads[g].values.size()) {
      throw InvalidArgument("optimizer_step: shape mismatch in " + params[g].name);
    }
    if (!all_finite(grads[g].values)) throw DivergenceError("non-finite gradient in parameter group " + grads[g].name);
  }
  const double lr = config.learning_rate * multiplier;
  ++state.step;

  // A group whose gradient has been identically zero so far is outside the loss graph (e.g.
  // the KD head when λ = 1); it receives neither a step nor weight decay.
  auto untouched = [&](std::size_t g) {
    const auto d = grads[g].values;
    if (std::any_of(d.begin(), d.end(), [](double x) { return x != 0.0; })) return false;
    if (config.optimizer == OptimizerKind::kSgd || state.first_moment.size() != params.size()) return true;
    const auto& m = state.first_moment[g];
    return std::all_of(m.begin(), m.end(), [](double x) { return x == 0.0; });
  };

  if (config.optimizer == OptimizerKind::kSgd) {
    for (std::size_t g = 0; g < params.size(); ++g) {
      if (untouched(g)) continue;
      auto p = params[g].values;
      auto d = grads[g].values;
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * (d[i] + config.weight_decay * p[i]);
    }
    return;
  }

  if (state.first_moment.size() != params.size()) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.values.size(), 0.0);
      state.second_moment.emplace_back(p.values.size(), 0.0);
    }
  }
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(config.beta1, t);
  const double bias2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t g = 0; g < params.size(); ++g) {
    if (untouched(g)) continue;
    auto p = params[g].values;
    auto d = grads[g].values;
    auto& m = state.first_moment[g];
    auto& v = state.second_moment[g];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * d[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * d[i] * d[i];
      p[i] *= 1.0 - lr * config.weight_decay;
      p[i] -= lr * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + config.adam_epsilon);
    }
  }
}

double cosine_schedule(std::size_t step, std::size_t total_steps, std::size_t warmup_steps) {
  if (step < warmup_steps) return static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (total_steps <= warmup_steps) return step >= total_steps ? 0.0 : 1.0;
  const double progress =
      static_cast<double>(std::min(step, total_steps) - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

std::size_t steps_per_epoch(const LabeledSplit& split, const TrainConfig& config) {
  const std::size_t pool = split.labeled.size() + split.unlabeled.size();
  return (pool + config.batch_unlabeled - 1) / config.batch_unlabeled;
}

namespace {

Dataset jittered(const Dataset& data, double scale, Rng& rng) {
  std::normal_distribution<double> noise(0.0, scale);
  std::vector<Example> examples = data.examples();
  for (auto& ex : examples) {
    for (double& v : ex.features) v += noise(rng);
  }
  return Dataset(std::move(examples), data.num_classes(), data.feature_dim(), data.tag());
}

}  // namespace

TrainReport train(StudentModel& model, const Dataset& data, const LabeledSplit& split,
                  const TeacherPredictions& teacher, const TrainConfig& config, OptimizerState* state) {
  config.validate();
  if (teacher.size() != data.size()) throw InvalidArgument("train: teacher predictions do not cover the dataset");
  if (split.labeled.empty()) throw InvalidArgument("train: no labeled examples");
  if (data.num_classes() != model.num_classes()) throw InvalidArgument("train: class count mismatch");
  const auto started = std::chrono::steady_clock::now();

  TrainReport report;
  report.trace.mode = model.mode();
  const Dataset visible = strip_labels(data, split);
  const TeacherPredictions targets = teacher.retempered(config.eta);
  OptimizerState local_state;
  OptimizerState& opt = state != nullptr ? *state : local_state;

  Rng batch_rng = named_stream(config.seed, "batches");
  Rng jitter_rng = named_stream(config.seed, "jitter");
  const std::vector<std::size_t> pool = split.all();
  const std::size_t per_epoch = steps_per_epoch(split, config);
  const std::size_t total_steps = per_epoch * config.epochs;
  report.labeled_with_replacement = split.labeled.size() < config.batch_labeled;

  std::vector<std::size_t> order = pool;
  std::vector<std::size_t> labeled_pool = split.labeled;
  std::vector<std::size_t> labeled_batch(config.batch_labeled);
  std::uniform_int_distribution<std::size_t> pick(0, split.labeled.size() - 1);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const Dataset epoch_data = config.feature_jitter > 0.0 ? jittered(visible, config.feature_jitter, jitter_rng) : visible;
    std::shuffle(order.begin(), order.end(), batch_rng);
    EpochStats stats;
    for (std::size_t s = 0; s < per_epoch; ++s, ++step) {
      const std::size_t begin = s * config.batch_unlabeled;
      const std::size_t end = std::min(order.size(), begin + config.batch_unlabeled);
      const std::span<const std::size_t> unlabeled_batch(order.data() + begin, end - begin);
      if (report.labeled_with_replacement) {
        for (auto& idx : labeled_batch) idx = split.labeled[pick(batch_rng)];
      } else {
        std::shuffle(labeled_pool.begin(), labeled_pool.end(), batch_rng);
        std::copy_n(labeled_pool.begin(), config.batch_labeled, labeled_batch.begin());
      }

      const LossInputs in{epoch_data, targets, labeled_batch, unlabeled_batch, config.lambda, config.eta};
      GradientBundle bundle = compute_gradients(model, in);
      if (!std::isfinite(bundle.losses.combined)) {
        throw DivergenceError("non-finite loss at step " + std::to_string(step));
      }
      report.clamp_events += bundle.clamp_events;
      report.trace.samples.push_back(conflict_metrics(bundle, step));
      stats.ce += bundle.losses.ce;
      stats.kd += bundle.losses.kd;
      stats.combined += bundle.losses.combined;

      ModelGrad grad = bundle.combined(config.lambda);
      const double multiplier = config.cosine_decay ? cosine_schedule(step, total_steps, config.warmup_steps) : 1.0;
      optimizer_step(model.parameters(), StudentModel::grad_views(grad, model.mode()), opt, config, multiplier);
    }
    const double n = static_cast<double>(per_epoch);
    report.epochs.push_back({stats.ce / n, stats.kd / n, stats.combined / n});
  }
  report.steps = step;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

ProbeResult linear_probe_features(const std::vector<Vector>& train_features, const std::vector<std::size_t>& train_labels,
                                  const std::vector<Vector>& test_features, const std::vector<std::size_t>& test_labels,
                                  std::size_t num_classes, const ProbeConfig& config) {
  if (train_features.empty() || train_features.size() != train_labels.size()) {
    throw InvalidArgument("linear_probe: training features and labels must be non-empty and aligned");
  }
  if (test_features.size() != test_labels.size()) throw InvalidArgument("linear_probe: test features/labels misaligned");
  const std::size_t dim = train_features.front().size();
  LinearHead head{Matrix(num_classes, dim), Vector(num_classes, 0.0)};

  TrainConfig opt_config;
  opt_config.learning_rate = config.learning_rate;
  opt_config.weight_decay = config.weight_decay;
  OptimizerState opt;
  Rng rng = named_stream(config.seed, "probe");
  std::vector<std::size_t> order(train_features.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t per_epoch = (order.size() + config.batch - 1) / config.batch;
  const std::size_t total = per_epoch * config.epochs;

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t s = 0; s < per_epoch; ++s, ++step) {
      const std::size_t begin = s * config.batch;
      const std::size_t end = std::min(order.size(), begin + config.batch);
      HeadGrad grad{Matrix(num_classes, dim), Vector(num_classes, 0.0)};
      const double inv = 1.0 / static_cast<double>(end - begin);
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t i = order[k];
        const ProbVector p = softmax(linear_head_forward(head, train_features[i]));
        Vector g(num_classes);
        for (std::size_t c = 0; c < num_classes; ++c) g[c] = (p[c] - (c == train_labels[i] ? 1.0 : 0.0)) * inv;
        add_outer(g, train_features[i], 1.0, grad.weight);
        axpy(1.0, g, grad.bias);
      }
      std::vector<ParamView> params{{"probe.weight", head.weight.flat()}, {"probe.bias", head.bias}};
      std::vector<ParamView> grads{{"probe.weight", grad.weight.flat()}, {"probe.bias", grad.bias}};
      optimizer_step(params, grads, opt, opt_config, cosine_schedule(step, total, 0));
    }
  }

  auto accuracy = [&](const std::vector<Vector>& feats, const std::vector<std::size_t>& labels) {
    if (feats.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < feats.size(); ++i) {
      if (argmax(linear_head_forward(head, feats[i])) == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(feats.size());
  };
  return {accuracy(train_features, train_labels), accuracy(test_features, test_labels)};
}

ProbeResult linear_probe(const FeatureExtractor& extractor, const Dataset& train_set, const Dataset& test_set,
                         const ProbeConfig& config) {
  auto collect = [&extractor](const Dataset& d, std::vector<Vector>& feats, std::vector<std::size_t>& labels) {
    for (const auto& ex : d.examples()) {
      if (!ex.label) throw InvalidArgument("linear_probe: requires fully labeled datasets");
      feats.push_back(extractor.forward(ex.features));
      labels.push_back(*ex.label);
    }
  };
  std::vector<Vector> train_feats, test_feats;
  std::vector<std::size_t> train_labels, test_labels;
  collect(train_set, train_feats, train_labels);
  collect(test_set, test_feats, test_labels);
  return linear_probe_features(train_feats, train_labels, test_feats, test_labels, train_set.num_classes(), config);
}

}  // namespace dho
