#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dho {

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a cosine similarity is requested for a zero-norm operand.
class UndefinedSimilarity : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

using Vector = std::vector<double>;

/// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// A categorical distribution: non-negative entries summing to one.
class ProbVector {
 public:
  static constexpr double kSumTolerance = 1e-9;

  ProbVector() = default;
  /// Validates the simplex invariants; throws InvalidArgument on violation.
  explicit ProbVector(std::vector<double> values);
  ProbVector(std::initializer_list<double> values) : ProbVector(std::vector<double>(values)) {}

  /// Skips validation; for producers that construct a distribution by normalization.
  static ProbVector trusted(std::vector<double> values);
  static ProbVector uniform(std::size_t dim);
  static ProbVector one_hot(std::size_t dim, std::size_t index);

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }
  const std::vector<double>& vec() const { return values_; }

  std::size_t argmax() const;

  bool operator==(const ProbVector&) const = default;

 private:
  std::vector<double> values_;
};

/// Floor applied to predicted probabilities before taking logs.
inline constexpr double kProbabilityFloor = 1e-12;

/// Counts log-argument clamps triggered by kProbabilityFloor.
struct ClampTally {
  std::size_t events = 0;
};

// Elementwise helpers over spans.
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
std::size_t argmax(std::span<const double> v);
bool all_finite(std::span<const double> v);

Vector matvec(const Matrix& m, std::span<const double> x);
/// Computes mᵀ·x.
Vector matvec_transposed(const Matrix& m, std::span<const double> x);
/// Accumulates scale · u vᵀ into out.
void add_outer(std::span<const double> u, std::span<const double> v, double scale, Matrix& out);

/// Temperature-scaled softmax with max-subtraction.
ProbVector softmax(std::span<const double> logits, double temperature = 1.0);

/// −log pred[label], floored at kProbabilityFloor.
double cross_entropy(const ProbVector& pred, std::size_t label, ClampTally* tally = nullptr);

/// Σ target·ln(target/pred) with 0·ln(0/q) = 0 and pred floored at kProbabilityFloor.
double kl_divergence(const ProbVector& target, const ProbVector& pred, ClampTally* tally = nullptr);

double cosine_similarity(std::span<const double> a, std::span<const double> b);
double l1_distance(const ProbVector& a, const ProbVector& b);
double entropy(const ProbVector& p);

}  // namespace dho
