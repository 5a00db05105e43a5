#include "dho/inference.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace dho {

void InterpolationSetting::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must be in [0,1]");
  if (!(beta > 0.0)) throw InvalidArgument("beta must be positive");
}

ProbVector mix(const ProbVector& p_ce, const ProbVector& p_kd, double alpha) {
  if (p_ce.size() != p_kd.size()) throw InvalidArgument("mix: dimension mismatch");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must be in [0,1]");
  if (alpha == 1.0) return p_ce;
  if (alpha == 0.0) return p_kd;
  std::vector<double> out(p_ce.size());
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = alpha * p_ce[c] + (1.0 - alpha) * p_kd[c];
  return ProbVector::trusted(std::move(out));
}

ProbVector interpolate(const ProbVector& p_ce, std::span<const double> kd_logits, double alpha, double beta) {
  InterpolationSetting{alpha, beta, {}}.validate();
  return mix(p_ce, softmax(kd_logits, beta), alpha);
}

HeadOutputs head_outputs(const StudentModel& model, std::span<const double> x) {
  const Vector z = model.extractor().forward(x);
  return {softmax(head_forward(model.ce_head(), z)), head_forward(model.kd_head(), z)};
}

std::vector<HeadOutputs> head_outputs(const StudentModel& model, const Dataset& dataset) {
  std::vector<HeadOutputs> out;
  out.reserve(dataset.size());
  for (const auto& ex : dataset.examples()) out.push_back(head_outputs(model, ex.features));
  return out;
}

std::size_t predict(const HeadOutputs& out, const InterpolationSetting& setting) {
  return interpolate(out.p_ce, out.kd_logits, setting.alpha, setting.beta).argmax();
}

std::size_t predict(const StudentModel& model, std::span<const double> x, const InterpolationSetting& setting) {
  return predict(head_outputs(model, x), setting);
}

double entropy_adaptive_alpha(const ProbVector& p_ce, const ProbVector& p_kd) {
  // Logistic form of the ratio: 1 / (1 + exp(H_ce − H_kd)).
  return 1.0 / (1.0 + std::exp(entropy(p_ce) - entropy(p_kd)));
}

std::size_t predict_adaptive(const HeadOutputs& out, double beta) {
  const ProbVector p_kd = softmax(out.kd_logits, beta);
  return mix(out.p_ce, p_kd, entropy_adaptive_alpha(out.p_ce, p_kd)).argmax();
}

InterpolationSetting emulate_sho(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("emulate_sho: lambda must be in [0,1]");
  return {lambda, 1.0, {}};
}

InterpolationSetting heuristic_setting(double teacher_accuracy, double accuracy_threshold) {
  return {teacher_accuracy >= accuracy_threshold ? 0.2 : 0.4, 0.5, {}};
}

std::vector<double> default_alpha_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
  return g;
}

std::vector<double> default_beta_grid() { return {0.1, 0.3, 0.5, 0.7, 1.0, 2.0}; }

GridSearchResult grid_search(const std::vector<HeadOutputs>& outputs, const std::vector<std::size_t>& labels,
                             const std::vector<double>& alphas, const std::vector<double>& betas) {
  if (outputs.empty()) throw InvalidArgument("grid_search: empty validation set");
  if (outputs.size() != labels.size()) throw InvalidArgument("grid_search: outputs/labels misaligned");
  if (alphas.empty() || betas.empty()) throw InvalidArgument("grid_search: empty grid");
  for (double a : alphas) InterpolationSetting{a, 1.0, {}}.validate();
  for (double b : betas) InterpolationSetting{0.5, b, {}}.validate();

  GridSearchResult r{alphas, betas, Matrix(alphas.size(), betas.size()), {}};
  const double n = static_cast<double>(outputs.size());
  std::size_t best_correct = 0;
  bool have_best = false;
  for (std::size_t j = 0; j < betas.size(); ++j) {
    // The KD distribution depends only on β, so compute it once per column.
    std::vector<ProbVector> p_kd;
    p_kd.reserve(outputs.size());
    for (const auto& o : outputs) p_kd.push_back(softmax(o.kd_logits, betas[j]));
    for (std::size_t i = 0; i < alphas.size(); ++i) {
      std::size_t correct = 0;
      for (std::size_t k = 0; k < outputs.size(); ++k) {
        if (mix(outputs[k].p_ce, p_kd[k], alphas[i]).argmax() == labels[k]) ++correct;
      }
      r.accuracy(i, j) = static_cast<double>(correct) / n;
      bool better = !have_best || correct > best_correct;
      if (have_best && correct == best_correct) {
        const double d_new = std::abs(alphas[i] - 0.5);
        const double d_old = std::abs(r.best.alpha - 0.5);
        better = d_new < d_old || (d_new == d_old && betas[j] < r.best.beta);
      }
      if (better) {
        have_best = true;
        best_correct = correct;
        r.best = {alphas[i], betas[j], r.accuracy(i, j)};
      }
    }
  }
  return r;
}

GridSearchResult grid_search(const StudentModel& model, const Dataset& validation, const std::vector<double>& alphas,
                             const std::vector<double>& betas) {
  std::vector<HeadOutputs> outputs;
  std::vector<std::size_t> labels;
  for (const auto& ex : validation.examples()) {
    if (!ex.label) continue;
    outputs.push_back(head_outputs(model, ex.features));
    labels.push_back(*ex.label);
  }
  return grid_search(outputs, labels, alphas, betas);
}

void write_grid_csv(const std::filesystem::path& path, const GridSearchResult& result) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  char buf[32];
  out << "alpha\\beta";
  for (double b : result.betas) {
    std::snprintf(buf, sizeof buf, "%.17g", b);
    out << ',' << buf;
  }
  out << '\n';
  for (std::size_t i = 0; i < result.alphas.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", result.alphas[i]);
    out << buf;
    for (std::size_t j = 0; j < result.betas.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", result.accuracy(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

namespace {

template <typename Predict>
EvalResult evaluate_with(const StudentModel& model, const Dataset& dataset, Predict&& predict_one) {
  EvalResult r;
  std::size_t labeled = 0, ce_ok = 0, kd_ok = 0, combined_ok = 0;
  for (const auto& ex : dataset.examples()) {
    const HeadOutputs out = head_outputs(model, ex.features);
    const auto [pred, alpha] = predict_one(out);
    r.predictions.push_back(pred);
    r.alphas.push_back(alpha);
    if (!ex.label) continue;
    ++labeled;
    if (out.p_ce.argmax() == *ex.label) ++ce_ok;
    if (argmax(out.kd_logits) == *ex.label) ++kd_ok;
    if (pred == *ex.label) ++combined_ok;
  }
  if (labeled > 0) {
    const double n = static_cast<double>(labeled);
    r.ce_head_accuracy = static_cast<double>(ce_ok) / n;
    r.kd_head_accuracy = static_cast<double>(kd_ok) / n;
    r.combined_accuracy = static_cast<double>(combined_ok) / n;
  }
  return r;
}

}  // namespace

EvalResult evaluate(const StudentModel& model, const Dataset& dataset, const InterpolationSetting& setting) {
  setting.validate();
  return evaluate_with(model, dataset, [&](const HeadOutputs& out) {
    return std::pair<std::size_t, double>{predict(out, setting), setting.alpha};
  });
}

EvalResult evaluate_adaptive(const StudentModel& model, const Dataset& dataset, double beta) {
  return evaluate_with(model, dataset, [&](const HeadOutputs& out) {
    const ProbVector p_kd = softmax(out.kd_logits, beta);
    const double alpha = entropy_adaptive_alpha(out.p_ce, p_kd);
    return std::pair<std::size_t, double>{mix(out.p_ce, p_kd, alpha).argmax(), alpha};
  });
}

}  // namespace dho
