#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dho/numcore.hpp"

namespace dho {

struct DenseLayer {
  Matrix weight;  // out × in
  Vector bias;    // out
};

/// Values retained by a forward pass for backpropagation.
struct Activations {
  std::vector<Vector> inputs;  // input to each layer
  std::vector<Vector> pre;     // pre-activation of each layer
  bool empty() const { return inputs.empty(); }
};

/// Gradient storage shaped like the extractor's layers.
struct ExtractorGrad {
  std::vector<DenseLayer> layers;
  /// Concatenation of all layer gradients (weights then bias, layer by layer).
  Vector flatten() const;
};

/// Multilayer perceptron with ReLU after every layer, output included.
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  explicit FeatureExtractor(std::vector<DenseLayer> layers);
  /// Zero-initialized network with layer widths dims[0] → dims[1] → … → dims.back().
  static FeatureExtractor zeros(const std::vector<std::size_t>& dims);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  Vector forward(std::span<const double> x, Activations* cache = nullptr) const;

  /// Accumulates ∂L/∂θ into `grad` given ∂L/∂z; throws StateError if `cache` is empty.
  void backward(std::span<const double> grad_z, const Activations& cache, ExtractorGrad& grad) const;

  ExtractorGrad zero_grad() const;

 private:
  std::vector<DenseLayer> layers_;
};

struct LinearHead {
  Matrix weight;  // C × d
  Vector bias;    // C
};

/// logits_c = CosSim(z, w_c) / scale.
struct CosineHead {
  Matrix weight;  // C × d, rows non-zero
  double scale = 0.01;
};

using Head = std::variant<LinearHead, CosineHead>;

struct HeadGrad {
  Matrix weight;
  Vector bias;  // empty for cosine heads
};

Vector linear_head_forward(const LinearHead& head, std::span<const double> z);
Vector cosine_head_forward(const CosineHead& head, std::span<const double> z);
Vector head_forward(const Head& head, std::span<const double> z);

/// Accumulates the head's parameter gradient for upstream ∂L/∂logits and returns ∂L/∂z.
Vector head_backward(const Head& head, std::span<const double> z, std::span<const double> grad_logits,
                     HeadGrad& grad);

HeadGrad zero_grad(const Head& head);
std::size_t head_classes(const Head& head);
std::size_t head_input_dim(const Head& head);
const Matrix& head_weight(const Head& head);

class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class HeadMode { kSho, kDho };

const char* to_string(HeadMode mode);
HeadMode head_mode_from_string(const std::string& s);

struct ModelGrad {
  ExtractorGrad extractor;
  std::vector<HeadGrad> heads;
};

/// Named view of one parameter (or gradient) array.
struct ParamView {
  std::string name;
  std::span<double> values;
};

/// Student: shared extractor plus a CE head and a KD head. In SHO mode the two heads are the
/// same object; in DHO mode they are disjoint.
class StudentModel {
 public:
  StudentModel(FeatureExtractor extractor, LinearHead ce_head);           // SHO
  StudentModel(FeatureExtractor extractor, LinearHead ce_head, Head kd_head);  // DHO

  HeadMode mode() const { return heads_.size() == 1 ? HeadMode::kSho : HeadMode::kDho; }
  std::size_t num_classes() const;
  std::size_t feature_dim() const { return extractor_.output_dim(); }

  FeatureExtractor& extractor() { return extractor_; }
  const FeatureExtractor& extractor() const { return extractor_; }

  std::size_t ce_slot() const { return 0; }
  std::size_t kd_slot() const { return heads_.size() - 1; }
  Head& head(std::size_t slot) { return heads_.at(slot); }
  const Head& head(std::size_t slot) const { return heads_.at(slot); }
  const Head& ce_head() const { return heads_.front(); }
  const Head& kd_head() const { return heads_.back(); }
  Head& ce_head() { return heads_.front(); }
  Head& kd_head() { return heads_.back(); }
  const std::vector<Head>& heads() const { return heads_; }

  ModelGrad zero_grad() const;

  /// Canonical ordering shared by parameters() and grad_views().
  std::vector<ParamView> parameters();
  static std::vector<ParamView> grad_views(ModelGrad& grad, HeadMode mode);

 private:
  FeatureExtractor extractor_;
  std::vector<Head> heads_;
};

/// Builds a student with an extractor of widths {input_dim, hidden..., feature_dim}, zeros everywhere.
StudentModel make_student(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t feature_dim,
                          std::size_t num_classes, HeadMode mode, bool cosine_kd_head = false,
                          double cosine_scale = 0.01);

/// Weights uniform in ±1/√fan_in, biases zero; deterministic per seed.
void init_random(StudentModel& model, std::uint64_t seed);

/// Sets W to the class-embedding matrix (C × d) and zeroes the bias.
void init_language_aware(Head& head, const Matrix& class_embeddings);
/// Applies language-aware initialization to every head of the model.
void init_language_aware(StudentModel& model, const Matrix& class_embeddings);

}  // namespace dho
