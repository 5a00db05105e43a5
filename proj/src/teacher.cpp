#include "dho/teacher.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>

#include "dho/rng.hpp"

namespace dho {

TeacherPredictions::TeacherPredictions(std::vector<ProbVector> rows, double temperature)
    : rows_(std::move(rows)), temperature_(temperature) {
  if (!(temperature_ > 0.0)) throw InvalidArgument("teacher temperature must be positive");
  for (const auto& r : rows_) {
    if (r.size() != rows_.front().size()) throw InvalidArgument("teacher rows disagree on class count");
  }
}

ProbVector retemper(const ProbVector& p, double eta) {
  if (!(eta > 0.0)) throw InvalidArgument("retemper: eta must be positive");
  if (eta == 1.0) return p;
  // Work in log space relative to the max entry so tiny probabilities don't underflow early.
  double peak = 0.0;
  for (double v : p.values()) peak = std::max(peak, v);
  const double log_peak = std::log(peak);
  std::vector<double> out(p.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    out[c] = p[c] > 0.0 ? std::exp((std::log(p[c]) - log_peak) / eta) : 0.0;
    sum += out[c];
  }
  for (double& v : out) v /= sum;
  return ProbVector::trusted(std::move(out));
}

TeacherPredictions TeacherPredictions::retempered(double eta) const {
  std::vector<ProbVector> rows;
  rows.reserve(rows_.size());
  for (const auto& r : rows_) rows.push_back(retemper(r, eta));
  return TeacherPredictions(std::move(rows), temperature_ * eta);
}

TeacherPredictions oracle_teacher_predict(const OracleTeacherConfig& config, const Dataset& dataset,
                                          std::uint64_t seed) {
  const Matrix& protos = config.prototypes;
  if (protos.cols() != dataset.feature_dim()) throw InvalidArgument("oracle teacher: prototype dimension mismatch");
  if (protos.rows() != dataset.num_classes()) throw InvalidArgument("oracle teacher: prototype count mismatch");
  if (!(config.temperature > 0.0)) throw InvalidArgument("oracle teacher: temperature must be positive");
  if (config.corruption_rate < 0.0 || config.corruption_rate > 1.0) {
    throw InvalidArgument("oracle teacher: corruption rate must be in [0,1]");
  }
  if (config.logit_noise < 0.0) throw InvalidArgument("oracle teacher: negative noise");

  Rng rng = named_stream(seed, "teacher");
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const std::size_t classes = protos.rows();
  std::uniform_int_distribution<std::size_t> wrong_pick(0, classes - 2);

  std::vector<ProbVector> rows;
  rows.reserve(dataset.size());
  for (const auto& ex : dataset.examples()) {
    Vector logits(classes);
    for (std::size_t c = 0; c < classes; ++c) {
      logits[c] = cosine_similarity(ex.features, protos.row(c)) / config.temperature;
    }
    for (double& l : logits) l += config.logit_noise * noise(rng);
    // Draw both variates unconditionally so one example's outcome never shifts the next one's stream.
    const bool corrupt = coin(rng) < config.corruption_rate;
    std::size_t wrong = wrong_pick(rng);
    if (corrupt) {
      const std::size_t truth = ex.label.value_or(argmax(logits));
      if (wrong >= truth) ++wrong;
      std::fill(logits.begin(), logits.end(), 0.0);
      logits[wrong] = 1.0 / config.temperature;
    }
    rows.push_back(softmax(logits));
  }
  return TeacherPredictions(std::move(rows), config.temperature);
}

TeacherPredictions load_teacher_predictions(const std::filesystem::path& path, const Dataset& dataset,
                                            double temperature) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  const std::size_t classes = dataset.num_classes();

  std::vector<ProbVector> rows;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> values;
    std::size_t start = 0;
    while (start <= line.size()) {
      std::size_t end = line.find(',', start);
      if (end == std::string::npos) end = line.size();
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(line.data() + start, line.data() + end, v);
      if (ec != std::errc() || ptr != line.data() + end || !std::isfinite(v) || v < 0.0) {
        throw ParseError(row, "invalid probability '" + line.substr(start, end - start) + "'");
      }
      values.push_back(v);
      start = end + 1;
    }
    if (values.size() != classes) {
      throw ParseError(row, "expected " + std::to_string(classes) + " probabilities, got " +
                                std::to_string(values.size()));
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    if (std::abs(sum - 1.0) > 1e-4) throw ParseError(row, "probabilities sum to " + std::to_string(sum));
    if (sum != 1.0) {
      for (double& v : values) v /= sum;
    }
    rows.push_back(ProbVector::trusted(std::move(values)));
  }
  if (rows.size() != dataset.size()) {
    throw DataError("teacher file has " + std::to_string(rows.size()) + " rows, dataset has " +
                    std::to_string(dataset.size()));
  }
  return TeacherPredictions(std::move(rows), temperature);
}

void write_teacher_predictions(const std::filesystem::path& path, const TeacherPredictions& preds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t c = 0; c < preds.num_classes(); ++c) out << (c ? "," : "") << 'p' << c;
  out << '\n';
  char buf[32];
  for (const auto& r : preds.rows()) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", r[c]);
      out << (c ? "," : "") << buf;
    }
    out << '\n';
  }
}

double measure_teacher_accuracy(const TeacherPredictions& preds, const Dataset& dataset) {
  if (preds.size() != dataset.size()) throw InvalidArgument("teacher accuracy: size mismatch");
  std::size_t labeled = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& label = dataset[i].label;
    if (!label) continue;
    ++labeled;
    if (preds[i].argmax() == *label) ++correct;
  }
  if (labeled == 0) throw InvalidArgument("teacher accuracy: dataset has no labeled examples");
  return static_cast<double>(correct) / static_cast<double>(labeled);
}

}  // namespace dho
