#include "dho/losses.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

namespace dho {

namespace {

void check_inputs(const StudentModel& model, const LossInputs& in) {
  if (in.labeled.empty()) throw InvalidArgument("losses: empty labeled batch");
  if (in.lambda < 0.0 || in.lambda > 1.0) throw InvalidArgument("losses: lambda must be in [0,1]");
  if (!(in.eta > 0.0)) throw InvalidArgument("losses: eta must be positive");
  if (in.teacher.size() != in.data.size()) throw InvalidArgument("losses: teacher does not cover dataset");
  if (in.data.num_classes() != model.num_classes()) throw InvalidArgument("losses: class count mismatch");
}

std::size_t label_of(const Dataset& data, std::size_t idx) {
  const auto& label = data[idx].label;
  if (!label) throw InvalidArgument("losses: labeled batch contains unlabeled example " + std::to_string(idx));
  return *label;
}

LossBreakdown evaluate(const StudentModel& model, const LossInputs& in, ClampTally* tally) {
  check_inputs(model, in);
  const bool shared = model.mode() == HeadMode::kSho;
  LossBreakdown out;
  out.lambda = in.lambda;

  double ce = 0.0;
  double kd_labeled = 0.0;
  for (std::size_t idx : in.labeled) {
    const Vector z = model.extractor().forward(in.data[idx].features);
    const Vector logits_ce = head_forward(model.ce_head(), z);
    ce += cross_entropy(softmax(logits_ce), label_of(in.data, idx), tally);
    const Vector logits_kd = shared ? logits_ce : head_forward(model.kd_head(), z);
    kd_labeled += kl_divergence(in.teacher[idx], softmax(logits_kd, in.eta), tally);
  }
  double kd_unlabeled = 0.0;
  for (std::size_t idx : in.unlabeled) {
    const Vector z = model.extractor().forward(in.data[idx].features);
    kd_unlabeled += kl_divergence(in.teacher[idx], softmax(head_forward(model.kd_head(), z), in.eta), tally);
  }
  const double n_l = static_cast<double>(in.labeled.size());
  out.ce = ce / n_l;
  out.kd = kd_labeled / n_l;
  if (!in.unlabeled.empty()) out.kd += kd_unlabeled / static_cast<double>(in.unlabeled.size());
  out.combined = in.lambda * out.ce + (1.0 - in.lambda) * out.kd;
  return out;
}

Vector difference(const ProbVector& a, const ProbVector& b, double scale) {
  Vector d(a.size());
  for (std::size_t c = 0; c < a.size(); ++c) d[c] = (a[c] - b[c]) * scale;
  return d;
}

}  // namespace

LossBreakdown sho_losses(const StudentModel& model, const LossInputs& in, ClampTally* tally) {
  if (model.mode() != HeadMode::kSho) throw InvalidArgument("sho_losses: model is not in SHO mode");
  return evaluate(model, in, tally);
}

LossBreakdown dho_losses(const StudentModel& model, const LossInputs& in, ClampTally* tally) {
  return evaluate(model, in, tally);
}

ModelGrad GradientBundle::combined(double lambda) const {
  ModelGrad out = ce;
  ModelGrad kd_copy = kd;
  auto dst = StudentModel::grad_views(out, mode);
  auto src = StudentModel::grad_views(kd_copy, mode);
  for (std::size_t g = 0; g < dst.size(); ++g) {
    for (std::size_t i = 0; i < dst[g].values.size(); ++i) {
      dst[g].values[i] = lambda * dst[g].values[i] + (1.0 - lambda) * src[g].values[i];
    }
  }
  return out;
}

GradientBundle compute_gradients(const StudentModel& model, const LossInputs& in) {
  check_inputs(model, in);
  const bool shared = model.mode() == HeadMode::kSho;
  const auto& extractor = model.extractor();
  const std::size_t classes = model.num_classes();

  GradientBundle b;
  b.mode = model.mode();
  b.losses.lambda = in.lambda;
  b.ce = model.zero_grad();
  b.kd = model.zero_grad();
  HeadGrad& ce_head_grad = b.ce.heads[model.ce_slot()];
  HeadGrad& kd_head_grad = b.kd.heads[model.kd_slot()];
  ClampTally tally;

  const double inv_l = 1.0 / static_cast<double>(in.labeled.size());
  Activations cache;
  double kd_labeled = 0.0;
  for (std::size_t idx : in.labeled) {
    const std::size_t label = label_of(in.data, idx);
    const ProbVector& target = in.teacher[idx];
    const Vector z = extractor.forward(in.data[idx].features, &cache);

    const Vector logits_ce = head_forward(model.ce_head(), z);
    const ProbVector p_ce = softmax(logits_ce);
    b.losses.ce += cross_entropy(p_ce, label, &tally);
    Vector g_ce = difference(p_ce, ProbVector::one_hot(classes, label), inv_l);
    const Vector dz_ce = head_backward(model.ce_head(), z, g_ce, ce_head_grad);

    const Vector logits_kd = shared ? logits_ce : head_forward(model.kd_head(), z);
    const ProbVector p_kd = softmax(logits_kd, in.eta);
    kd_labeled += kl_divergence(target, p_kd, &tally);
    const Vector g_kd = difference(p_kd, target, inv_l / in.eta);
    const Vector dz_kd = head_backward(model.kd_head(), z, g_kd, kd_head_grad);

    extractor.backward(dz_ce, cache, b.ce.extractor);
    extractor.backward(dz_kd, cache, b.kd.extractor);
    b.inner_product += prediction_inner_product(p_ce, label, p_kd, target);
  }
  b.losses.ce *= inv_l;
  b.losses.kd = kd_labeled * inv_l;
  b.inner_product *= inv_l;

  if (!in.unlabeled.empty()) {
    const double inv_u = 1.0 / static_cast<double>(in.unlabeled.size());
    double kd_unlabeled = 0.0;
    for (std::size_t idx : in.unlabeled) {
      const ProbVector& target = in.teacher[idx];
      const Vector z = extractor.forward(in.data[idx].features, &cache);
      const ProbVector p_kd = softmax(head_forward(model.kd_head(), z), in.eta);
      kd_unlabeled += kl_divergence(target, p_kd, &tally);
      const Vector g_kd = difference(p_kd, target, inv_u / in.eta);
      const Vector dz_kd = head_backward(model.kd_head(), z, g_kd, kd_head_grad);
      extractor.backward(dz_kd, cache, b.kd.extractor);
    }
    b.losses.kd += kd_unlabeled * inv_u;
  }
  b.losses.combined = in.lambda * b.losses.ce + (1.0 - in.lambda) * b.losses.kd;
  b.clamp_events = tally.events;
  return b;
}

HeadGrad head_gradients(const ProbVector& probs, const ProbVector& target, std::span<const double> z,
                        double temperature) {
  if (probs.size() != target.size()) throw InvalidArgument("head_gradients: probability dimension mismatch");
  if (!(temperature > 0.0)) throw InvalidArgument("head_gradients: temperature must be positive");
  HeadGrad g{Matrix(probs.size(), z.size()), difference(probs, target, 1.0 / temperature)};
  add_outer(g.bias, z, 1.0, g.weight);
  return g;
}

std::pair<ExtractorGrad, ExtractorGrad> backprop_extractor(const FeatureExtractor& extractor,
                                                           std::span<const double> grad_z_ce,
                                                           std::span<const double> grad_z_kd,
                                                           const Activations& cache) {
  if (cache.empty()) throw StateError("backprop_extractor: forward activations were not retained");
  ExtractorGrad ce = extractor.zero_grad();
  ExtractorGrad kd = extractor.zero_grad();
  extractor.backward(grad_z_ce, cache, ce);
  extractor.backward(grad_z_kd, cache, kd);
  return {std::move(ce), std::move(kd)};
}

double prediction_inner_product(const ProbVector& p_ce, std::size_t label, const ProbVector& p_kd,
                                const ProbVector& teacher) {
  double s = 0.0;
  for (std::size_t c = 0; c < p_ce.size(); ++c) {
    const double y = c == label ? 1.0 : 0.0;
    s += (p_ce[c] - y) * (p_kd[c] - teacher[c]);
  }
  return s;
}

namespace {

std::optional<double> safe_cosine(std::span<const double> a, std::span<const double> b) {
  if (norm2(a) == 0.0 || norm2(b) == 0.0) return std::nullopt;
  return cosine_similarity(a, b);
}

}  // namespace

ConflictSample conflict_metrics(const GradientBundle& bundle, std::size_t step) {
  ConflictSample s;
  s.step = step;
  s.inner_product = bundle.inner_product;
  const std::size_t kd_slot = bundle.kd.heads.size() == 1 || bundle.mode == HeadMode::kSho ? 0 : 1;
  s.cossim_head = safe_cosine(bundle.ce.heads.at(0).weight.flat(), bundle.kd.heads.at(kd_slot).weight.flat());
  s.cossim_theta = safe_cosine(bundle.ce.extractor.flatten(), bundle.kd.extractor.flatten());
  for (std::size_t l = 0; l < bundle.ce.extractor.layers.size(); ++l) {
    ExtractorGrad a{{bundle.ce.extractor.layers[l]}};
    ExtractorGrad b{{bundle.kd.extractor.layers[l]}};
    s.per_layer.push_back(safe_cosine(a.flatten(), b.flatten()));
  }
  return s;
}

namespace {

std::string format_optional(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

std::optional<double> parse_optional(std::string_view cell) {
  if (cell.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw DataError("conflict trace: bad number '" + std::string(cell) + "'");
  }
  return v;
}

}  // namespace

void write_conflict_trace(const std::filesystem::path& path, const ConflictTrace& trace) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "step,cossim_head,cossim_theta,inner_product,mode\n";
  for (const auto& s : trace.samples) {
    out << s.step << ',' << format_optional(s.cossim_head) << ',' << format_optional(s.cossim_theta) << ','
        << format_optional(s.inner_product) << ',' << to_string(trace.mode) << '\n';
  }
}

ConflictTrace read_conflict_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  ConflictTrace trace;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (cells.size() != 5) throw DataError("conflict trace: expected 5 columns");
    ConflictSample s;
    s.step = static_cast<std::size_t>(parse_optional(cells[0]).value_or(0.0));
    s.cossim_head = parse_optional(cells[1]);
    s.cossim_theta = parse_optional(cells[2]);
    s.inner_product = parse_optional(cells[3]).value_or(0.0);
    trace.mode = head_mode_from_string(std::string(cells[4]));
    trace.samples.push_back(std::move(s));
  }
  return trace;
}

std::vector<std::optional<double>> smooth_series(const std::vector<std::optional<double>>& values, double factor) {
  std::vector<std::optional<double>> out;
  out.reserve(values.size());
  std::optional<double> state;
  for (const auto& v : values) {
    if (v) state = state ? factor * *state + (1.0 - factor) * *v : *v;
    out.push_back(state);
  }
  return out;
}

double feature_distillation_loss(const std::vector<Vector>& student_features, const std::vector<Vector>& teacher_features,
                                 const Matrix& projection) {
  if (student_features.size() != teacher_features.size() || student_features.empty()) {
    throw InvalidArgument("feature_distillation_loss: batch size mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < student_features.size(); ++i) {
    if (teacher_features[i].size() != projection.rows()) {
      throw InvalidArgument("feature_distillation_loss: projection does not map to teacher dimension");
    }
    const Vector projected = matvec(projection, student_features[i]);
    for (std::size_t j = 0; j < projected.size(); ++j) {
      const double d = projected[j] - teacher_features[i][j];
      total += d * d;
    }
  }
  return total / static_cast<double>(student_features.size());
}

}  // namespace dho
