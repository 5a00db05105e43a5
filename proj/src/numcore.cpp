#include "dho/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dho {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw InvalidArgument(std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                          std::to_string(b) + ")");
  }
}

double floored_log(double p, ClampTally* tally) {
  if (p < kProbabilityFloor) {
    if (tally != nullptr) ++tally->events;
    return std::log(kProbabilityFloor);
  }
  return std::log(p);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw InvalidArgument("Matrix: expected " + std::to_string(rows * cols) + " values, got " +
                          std::to_string(data_.size()));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

ProbVector::ProbVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw InvalidArgument("ProbVector: empty");
  double sum = 0.0;
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0) throw InvalidArgument("ProbVector: entry outside [0,1]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw InvalidArgument("ProbVector: entries sum to " + std::to_string(sum));
  }
}

ProbVector ProbVector::trusted(std::vector<double> values) {
  ProbVector p;
  p.values_ = std::move(values);
  return p;
}

ProbVector ProbVector::uniform(std::size_t dim) {
  return trusted(std::vector<double>(dim, 1.0 / static_cast<double>(dim)));
}

ProbVector ProbVector::one_hot(std::size_t dim, std::size_t index) {
  std::vector<double> v(dim, 0.0);
  v.at(index) = 1.0;
  return trusted(std::move(v));
}

std::size_t ProbVector::argmax() const { return dho::argmax(values_); }

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_same_size(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

std::size_t argmax(std::span<const double> v) {
  // Ties resolve to the lowest index.
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Vector matvec(const Matrix& m, std::span<const double> x) {
  require_same_size(m.cols(), x.size(), "matvec");
  Vector out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), x);
  return out;
}

Vector matvec_transposed(const Matrix& m, std::span<const double> x) {
  require_same_size(m.rows(), x.size(), "matvec_transposed");
  Vector out(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) axpy(x[r], m.row(r), out);
  return out;
}

void add_outer(std::span<const double> u, std::span<const double> v, double scale, Matrix& out) {
  require_same_size(out.rows(), u.size(), "add_outer rows");
  require_same_size(out.cols(), v.size(), "add_outer cols");
  for (std::size_t r = 0; r < u.size(); ++r) {
    const double s = scale * u[r];
    if (s == 0.0) continue;
    axpy(s, v, out.row(r));
  }
}

ProbVector softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("softmax: temperature must be positive");
  if (logits.empty()) throw InvalidArgument("softmax: empty logits");
  const double inv_t = 1.0 / temperature;
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - peak) * inv_t);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return ProbVector::trusted(std::move(out));
}

double cross_entropy(const ProbVector& pred, std::size_t label, ClampTally* tally) {
  if (label >= pred.size()) throw InvalidArgument("cross_entropy: label out of range");
  return -floored_log(pred[label], tally);
}

double kl_divergence(const ProbVector& target, const ProbVector& pred, ClampTally* tally) {
  require_same_size(target.size(), pred.size(), "kl_divergence");
  double s = 0.0;
  for (std::size_t c = 0; c < target.size(); ++c) {
    const double t = target[c];
    if (t <= 0.0) continue;
    s += t * (std::log(t) - floored_log(pred[c], tally));
  }
  return std::max(s, 0.0);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size(), "cosine_similarity");
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na == 0.0 || nb == 0.0) throw UndefinedSimilarity("cosine_similarity: zero-norm operand");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double l1_distance(const ProbVector& a, const ProbVector& b) {
  require_same_size(a.size(), b.size(), "l1_distance");
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += std::abs(a[c] - b[c]);
  return s;
}

double entropy(const ProbVector& p) {
  double h = 0.0;
  for (double v : p.values()) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

}  // namespace dho
