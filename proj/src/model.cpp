#include "dho/model.hpp"

#include <cmath>
#include <random>

#include "dho/rng.hpp"

namespace dho {

Vector ExtractorGrad::flatten() const {
  Vector out;
  for (const auto& layer : layers) {
    out.insert(out.end(), layer.weight.flat().begin(), layer.weight.flat().end());
    out.insert(out.end(), layer.bias.begin(), layer.bias.end());
  }
  return out;
}

FeatureExtractor::FeatureExtractor(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw InvalidArgument("FeatureExtractor: at least one layer required");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.weight.rows() == 0 || layer.weight.cols() == 0) throw InvalidArgument("FeatureExtractor: empty layer");
    if (layer.bias.size() != layer.weight.rows()) throw InvalidArgument("FeatureExtractor: bias/weight mismatch");
    if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows()) {
      throw InvalidArgument("FeatureExtractor: layer " + std::to_string(l) + " input width mismatch");
    }
  }
}

FeatureExtractor FeatureExtractor::zeros(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) throw InvalidArgument("FeatureExtractor::zeros: need input and output widths");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    layers.push_back({Matrix(dims[l + 1], dims[l]), Vector(dims[l + 1], 0.0)});
  }
  return FeatureExtractor(std::move(layers));
}

std::size_t FeatureExtractor::input_dim() const { return layers_.front().weight.cols(); }
std::size_t FeatureExtractor::output_dim() const { return layers_.back().weight.rows(); }

std::size_t FeatureExtractor::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

Vector FeatureExtractor::forward(std::span<const double> x, Activations* cache) const {
  if (x.size() != input_dim()) {
    throw InvalidArgument("forward_features: input has dimension " + std::to_string(x.size()) + ", expected " +
                          std::to_string(input_dim()));
  }
  if (cache != nullptr) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Vector a(x.begin(), x.end());
  for (const auto& layer : layers_) {
    Vector pre = matvec(layer.weight, a);
    axpy(1.0, layer.bias, pre);
    Vector out(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) out[i] = pre[i] > 0.0 ? pre[i] : 0.0;
    if (cache != nullptr) {
      cache->inputs.push_back(std::move(a));
      cache->pre.push_back(std::move(pre));
    }
    a = std::move(out);
  }
  return a;
}

void FeatureExtractor::backward(std::span<const double> grad_z, const Activations& cache, ExtractorGrad& grad) const {
  if (cache.inputs.size() != layers_.size() || cache.pre.size() != layers_.size()) {
    throw StateError("backprop_extractor: forward activations were not retained");
  }
  if (grad_z.size() != output_dim()) throw InvalidArgument("backprop_extractor: upstream gradient dimension");
  if (grad.layers.size() != layers_.size()) throw InvalidArgument("backprop_extractor: gradient shape");

  Vector delta(grad_z.begin(), grad_z.end());
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& pre = cache.pre[l];
    for (std::size_t i = 0; i < delta.size(); ++i) {
      if (!(pre[i] > 0.0)) delta[i] = 0.0;
    }
    add_outer(delta, cache.inputs[l], 1.0, grad.layers[l].weight);
    axpy(1.0, delta, grad.layers[l].bias);
    if (l > 0) delta = matvec_transposed(layers_[l].weight, delta);
  }
}

ExtractorGrad FeatureExtractor::zero_grad() const {
  ExtractorGrad g;
  for (const auto& layer : layers_) {
    g.layers.push_back({Matrix(layer.weight.rows(), layer.weight.cols()), Vector(layer.bias.size(), 0.0)});
  }
  return g;
}

Vector linear_head_forward(const LinearHead& head, std::span<const double> z) {
  Vector logits = matvec(head.weight, z);
  axpy(1.0, head.bias, logits);
  return logits;
}

Vector cosine_head_forward(const CosineHead& head, std::span<const double> z) {
  if (z.size() != head.weight.cols()) throw InvalidArgument("cosine_head_forward: dimension mismatch");
  Vector logits(head.weight.rows());
  for (std::size_t c = 0; c < logits.size(); ++c) logits[c] = cosine_similarity(z, head.weight.row(c)) / head.scale;
  return logits;
}

Vector head_forward(const Head& head, std::span<const double> z) {
  return std::visit(
      [&](const auto& h) -> Vector {
        if constexpr (std::is_same_v<std::decay_t<decltype(h)>, LinearHead>) {
          return linear_head_forward(h, z);
        } else {
          return cosine_head_forward(h, z);
        }
      },
      head);
}

Vector head_backward(const Head& head, std::span<const double> z, std::span<const double> grad_logits,
                     HeadGrad& grad) {
  if (const auto* lin = std::get_if<LinearHead>(&head)) {
    add_outer(grad_logits, z, 1.0, grad.weight);
    axpy(1.0, grad_logits, grad.bias);
    return matvec_transposed(lin->weight, grad_logits);
  }
  const auto& cos_head = std::get<CosineHead>(head);
  const double z_norm = norm2(z);
  if (z_norm == 0.0) throw UndefinedSimilarity("cosine head: zero feature vector");
  Vector grad_z(z.size(), 0.0);
  for (std::size_t c = 0; c < cos_head.weight.rows(); ++c) {
    const auto w = cos_head.weight.row(c);
    const double w_norm = norm2(w);
    const double cosine = dot(z, w) / (z_norm * w_norm);
    const double g = grad_logits[c] / cos_head.scale;
    if (g == 0.0) continue;
    // ∂cos/∂w = z/(|z||w|) − cos·w/|w|²,  ∂cos/∂z = w/(|z||w|) − cos·z/|z|²
    auto gw = grad.weight.row(c);
    axpy(g / (z_norm * w_norm), z, gw);
    axpy(-g * cosine / (w_norm * w_norm), w, gw);
    axpy(g / (z_norm * w_norm), w, grad_z);
    axpy(-g * cosine / (z_norm * z_norm), z, grad_z);
  }
  return grad_z;
}

HeadGrad zero_grad(const Head& head) {
  const Matrix& w = head_weight(head);
  HeadGrad g{Matrix(w.rows(), w.cols()), {}};
  if (std::holds_alternative<LinearHead>(head)) g.bias.assign(w.rows(), 0.0);
  return g;
}

const Matrix& head_weight(const Head& head) {
  return std::visit([](const auto& h) -> const Matrix& { return h.weight; }, head);
}

std::size_t head_classes(const Head& head) { return head_weight(head).rows(); }
std::size_t head_input_dim(const Head& head) { return head_weight(head).cols(); }

const char* to_string(HeadMode mode) { return mode == HeadMode::kSho ? "sho" : "dho"; }

HeadMode head_mode_from_string(const std::string& s) {
  if (s == "sho" || s == "SHO") return HeadMode::kSho;
  if (s == "dho" || s == "DHO") return HeadMode::kDho;
  throw InvalidArgument("unknown head mode '" + s + "'");
}

namespace {

void check_linear_head(const LinearHead& head, std::size_t feature_dim) {
  if (head.weight.cols() != feature_dim) throw InvalidArgument("head input dimension does not match extractor output");
  if (head.bias.size() != head.weight.rows()) throw InvalidArgument("head bias/weight mismatch");
}

}  // namespace

StudentModel::StudentModel(FeatureExtractor extractor, LinearHead ce_head) : extractor_(std::move(extractor)) {
  check_linear_head(ce_head, extractor_.output_dim());
  heads_.emplace_back(std::move(ce_head));
}

StudentModel::StudentModel(FeatureExtractor extractor, LinearHead ce_head, Head kd_head)
    : extractor_(std::move(extractor)) {
  check_linear_head(ce_head, extractor_.output_dim());
  if (head_input_dim(kd_head) != extractor_.output_dim()) throw InvalidArgument("KD head input dimension mismatch");
  if (head_classes(kd_head) != ce_head.weight.rows()) throw InvalidArgument("KD head class count mismatch");
  if (const auto* lin = std::get_if<LinearHead>(&kd_head)) check_linear_head(*lin, extractor_.output_dim());
  if (const auto* cos_head = std::get_if<CosineHead>(&kd_head); cos_head && !(cos_head->scale > 0.0)) {
    throw InvalidArgument("cosine head scale must be positive");
  }
  heads_.emplace_back(std::move(ce_head));
  heads_.push_back(std::move(kd_head));
}

std::size_t StudentModel::num_classes() const { return head_classes(heads_.front()); }

ModelGrad StudentModel::zero_grad() const {
  ModelGrad g{extractor_.zero_grad(), {}};
  for (const auto& h : heads_) g.heads.push_back(dho::zero_grad(h));
  return g;
}

namespace {

std::string head_prefix(std::size_t slot, std::size_t head_count) {
  if (head_count == 1) return "head";
  return slot == 0 ? "head_ce" : "head_kd";
}

}  // namespace

std::vector<ParamView> StudentModel::parameters() {
  std::vector<ParamView> out;
  for (std::size_t l = 0; l < extractor_.layers().size(); ++l) {
    auto& layer = extractor_.layers()[l];
    out.push_back({"extractor." + std::to_string(l) + ".weight", layer.weight.flat()});
    out.push_back({"extractor." + std::to_string(l) + ".bias", layer.bias});
  }
  for (std::size_t s = 0; s < heads_.size(); ++s) {
    const std::string prefix = head_prefix(s, heads_.size());
    std::visit(
        [&](auto& h) {
          out.push_back({prefix + ".weight", h.weight.flat()});
          if constexpr (std::is_same_v<std::decay_t<decltype(h)>, LinearHead>) {
            out.push_back({prefix + ".bias", h.bias});
          }
        },
        heads_[s]);
  }
  return out;
}

std::vector<ParamView> StudentModel::grad_views(ModelGrad& grad, HeadMode mode) {
  std::vector<ParamView> out;
  for (std::size_t l = 0; l < grad.extractor.layers.size(); ++l) {
    auto& layer = grad.extractor.layers[l];
    out.push_back({"extractor." + std::to_string(l) + ".weight", layer.weight.flat()});
    out.push_back({"extractor." + std::to_string(l) + ".bias", layer.bias});
  }
  const std::size_t count = mode == HeadMode::kSho ? 1 : 2;
  for (std::size_t s = 0; s < count; ++s) {
    const std::string prefix = head_prefix(s, count);
    out.push_back({prefix + ".weight", grad.heads.at(s).weight.flat()});
    if (!grad.heads[s].bias.empty()) out.push_back({prefix + ".bias", grad.heads[s].bias});
  }
  return out;
}

StudentModel make_student(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t feature_dim,
                          std::size_t num_classes, HeadMode mode, bool cosine_kd_head, double cosine_scale) {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(feature_dim);
  FeatureExtractor extractor = FeatureExtractor::zeros(dims);
  LinearHead ce{Matrix(num_classes, feature_dim), Vector(num_classes, 0.0)};
  if (mode == HeadMode::kSho) {
    if (cosine_kd_head) throw InvalidArgument("SHO mode uses one shared linear head");
    return StudentModel(std::move(extractor), std::move(ce));
  }
  Head kd = cosine_kd_head ? Head(CosineHead{Matrix(num_classes, feature_dim, 1.0), cosine_scale})
                           : Head(LinearHead{Matrix(num_classes, feature_dim), Vector(num_classes, 0.0)});
  return StudentModel(std::move(extractor), std::move(ce), std::move(kd));
}

void init_random(StudentModel& model, std::uint64_t seed) {
  Rng rng = named_stream(seed, "init");
  auto fill = [&rng](Matrix& w) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : w.flat()) v = dist(rng);
  };
  for (auto& layer : model.extractor().layers()) {
    fill(layer.weight);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  for (std::size_t s = 0; s < model.heads().size(); ++s) {
    std::visit(
        [&](auto& h) {
          fill(h.weight);
          if constexpr (std::is_same_v<std::decay_t<decltype(h)>, LinearHead>) {
            std::fill(h.bias.begin(), h.bias.end(), 0.0);
          }
        },
        model.head(s));
  }
}

void init_language_aware(Head& head, const Matrix& class_embeddings) {
  const Matrix& w = head_weight(head);
  if (class_embeddings.rows() != w.rows() || class_embeddings.cols() != w.cols()) {
    throw InvalidArgument("init_language_aware: embeddings are " + std::to_string(class_embeddings.rows()) + "x" +
                          std::to_string(class_embeddings.cols()) + ", head expects " + std::to_string(w.rows()) +
                          "x" + std::to_string(w.cols()));
  }
  std::visit(
      [&](auto& h) {
        if constexpr (std::is_same_v<std::decay_t<decltype(h)>, CosineHead>) {
          for (std::size_t c = 0; c < class_embeddings.rows(); ++c) {
            if (norm2(class_embeddings.row(c)) == 0.0) throw InvalidArgument("init_language_aware: zero embedding row");
          }
        }
        h.weight = class_embeddings;
        if constexpr (std::is_same_v<std::decay_t<decltype(h)>, LinearHead>) {
          std::fill(h.bias.begin(), h.bias.end(), 0.0);
        }
      },
      head);
}

void init_language_aware(StudentModel& model, const Matrix& class_embeddings) {
  for (std::size_t s = 0; s < model.heads().size(); ++s) init_language_aware(model.head(s), class_embeddings);
}

}  // namespace dho
