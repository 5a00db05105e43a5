#include "dho/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace dho::theory {

ProbVector sample_dirichlet(std::size_t dim, Rng& rng) {
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> v(dim);
  double sum = 0.0;
  for (double& x : v) {
    x = expo(rng);
    sum += x;
  }
  for (double& x : v) x /= sum;
  return ProbVector::trusted(std::move(v));
}

ProbVector smooth_toward_uniform(const ProbVector& y, double weight) {
  std::vector<double> v(y.size());
  const double u = 1.0 / static_cast<double>(y.size());
  for (std::size_t c = 0; c < v.size(); ++c) v[c] = (1.0 - weight) * y[c] + weight * u;
  return ProbVector::trusted(std::move(v));
}

ProbVector optimal_mixture(const ProbVector& y, const ProbVector& p, double lambda) {
  if (y.size() != p.size()) throw InvalidArgument("optimal_mixture: dimension mismatch");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("optimal_mixture: lambda must be in [0,1]");
  std::vector<double> v(y.size());
  for (std::size_t c = 0; c < v.size(); ++c) v[c] = lambda * y[c] + (1.0 - lambda) * p[c];
  return ProbVector::trusted(std::move(v));
}

double sho_objective(const ProbVector& p_hat, const ProbVector& y, const ProbVector& p, double lambda) {
  if (p_hat.size() != y.size() || y.size() != p.size()) throw InvalidArgument("sho_objective: dimension mismatch");
  double ce = 0.0;
  double kl = 0.0;
  for (std::size_t c = 0; c < p_hat.size(); ++c) {
    if (p_hat[c] <= 0.0) {
      if ((lambda > 0.0 && y[c] > 0.0) || (lambda < 1.0 && p[c] > 0.0)) return std::numeric_limits<double>::infinity();
      continue;
    }
    const double log_q = std::log(p_hat[c]);
    if (y[c] > 0.0) ce -= y[c] * log_q;
    if (p[c] > 0.0) kl += p[c] * (std::log(p[c]) - log_q);
  }
  return lambda * ce + (1.0 - lambda) * kl;
}

ProbVector candidate_minimizer(const ProbVector& y, const ProbVector& p, double lambda, MixtureRule rule) {
  if (rule == MixtureRule::kWeightedMean) return optimal_mixture(y, p, lambda);
  std::vector<double> v(y.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < v.size(); ++c) {
    v[c] = std::pow(y[c], lambda) * std::pow(p[c], 1.0 - lambda);
    sum += v[c];
  }
  for (double& x : v) x /= sum;
  return ProbVector::trusted(std::move(v));
}

TheoremCheckReport verify_optimum(const ProbVector& y, const ProbVector& p, double lambda, std::size_t n_perturbations,
                                  double perturbation_scale, std::uint64_t seed, MixtureRule rule) {
  TheoremCheckReport report;
  report.id = "optimal_single_head_distribution";
  const ProbVector star = candidate_minimizer(y, p, lambda, rule);
  const double base = sho_objective(star, y, p, lambda);
  Rng rng = named_stream(seed, "optimum-perturbations");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> log_mag(std::log(1e-6), std::log(perturbation_scale));

  const std::size_t dim = star.size();
  std::vector<double> delta(dim), moved(dim);
  double min_increase = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < n_perturbations; ++t) {
    double mean = 0.0;
    for (double& d : delta) {
      d = normal(rng);
      mean += d;
    }
    mean /= static_cast<double>(dim);
    double l1 = 0.0;
    for (double& d : delta) {
      d -= mean;
      l1 += std::abs(d);
    }
    if (l1 == 0.0) continue;
    double magnitude = std::exp(log_mag(rng)) / l1;
    // Shrink until the perturbed point stays inside the simplex interior.
    for (int attempt = 0; attempt < 200; ++attempt) {
      bool interior = true;
      for (std::size_t c = 0; c < dim; ++c) {
        moved[c] = star[c] + magnitude * delta[c];
        if (moved[c] < std::min(kInteriorFloor, 0.5 * star[c])) interior = false;
      }
      if (interior) break;
      magnitude *= 0.5;
    }
    const double value = sho_objective(ProbVector::trusted(moved), y, p, lambda);
    report.max_violation = std::max(report.max_violation, base - value);
    min_increase = std::min(min_increase, value - base);
    ++report.trials;
  }
  report.measurements.emplace_back("objective_at_candidate", base);
  report.measurements.emplace_back("min_increase", min_increase);
  report.finish();
  return report;
}

std::pair<double, double> pinsker_check(const ProbVector& p, const ProbVector& q) {
  return {l1_distance(p, q), std::sqrt(2.0 * kl_divergence(p, q))};
}

TheoremCheckReport verify_pinsker(std::size_t n_trials, std::uint64_t seed, std::size_t min_classes,
                                  std::size_t max_classes) {
  TheoremCheckReport report;
  report.id = "pinsker_inequality";
  Rng rng = named_stream(seed, "pinsker");
  std::uniform_int_distribution<std::size_t> dim_pick(min_classes, max_classes);
  double tightest = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < n_trials; ++t) {
    const std::size_t dim = dim_pick(rng);
    const ProbVector p = sample_dirichlet(dim, rng);
    const ProbVector q = sample_dirichlet(dim, rng);
    const auto [l1, bound] = pinsker_check(p, q);
    report.max_violation = std::max(report.max_violation, l1 - bound);
    tightest = std::min(tightest, bound - l1);
    ++report.trials;
  }
  report.measurements.emplace_back("min_slack", tightest);
  report.finish();
  return report;
}

ProbVector move_toward(const ProbVector& target, const ProbVector& toward, double distance) {
  const double full = l1_distance(target, toward);
  if (full == 0.0 || distance <= 0.0) return target;
  const double t = std::min(1.0, distance / full);
  std::vector<double> v(target.size());
  for (std::size_t c = 0; c < v.size(); ++c) v[c] = target[c] + t * (toward[c] - target[c]);
  return ProbVector::trusted(std::move(v));
}

TheoremCheckReport verify_inference_equivalence(double epsilon, double lambda, std::size_t n_trials, std::size_t classes,
                                                std::uint64_t seed) {
  if (epsilon < 0.0 || epsilon > 2.0) throw InvalidArgument("verify_inference_equivalence: epsilon must be in [0,2]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("verify_inference_equivalence: lambda must be in [0,1]");
  TheoremCheckReport report;
  report.id = "inference_equivalence";
  Rng rng = named_stream(seed, "inference-equivalence");
  std::uniform_int_distribution<std::size_t> label_pick(0, classes - 1);
  std::uniform_real_distribution<double> radius(0.0, 1.0);
  double max_distance = 0.0;
  for (std::size_t t = 0; t < n_trials; ++t) {
    const ProbVector y = ProbVector::one_hot(classes, label_pick(rng));
    const ProbVector p = sample_dirichlet(classes, rng);
    // Rejection step: keep a head only if it lies inside the ε-ball around its target.
    auto head_near = [&](const ProbVector& target) {
      while (true) {
        const ProbVector h = move_toward(target, sample_dirichlet(classes, rng), radius(rng) * epsilon);
        if (l1_distance(h, target) <= epsilon) return h;
      }
    };
    const ProbVector p_ce = head_near(y);
    const ProbVector p_kd = head_near(p);
    std::vector<double> combined(classes);
    for (std::size_t c = 0; c < classes; ++c) combined[c] = lambda * p_ce[c] + (1.0 - lambda) * p_kd[c];
    const double distance = l1_distance(ProbVector::trusted(combined), optimal_mixture(y, p, lambda));
    max_distance = std::max(max_distance, distance);
    report.max_violation = std::max(report.max_violation, distance - epsilon);
    ++report.trials;
  }
  report.measurements.emplace_back("epsilon", epsilon);
  report.measurements.emplace_back("lambda", lambda);
  report.measurements.emplace_back("max_l1_distance", max_distance);
  report.finish();
  return report;
}

TheoremCheckReport verify_temperature_matching(double delta, double tau, std::size_t n_trials, std::size_t classes,
                                               std::uint64_t seed) {
  if (!(delta > 0.0)) throw InvalidArgument("verify_temperature_matching: delta must be positive");
  if (!(tau > 0.0)) throw InvalidArgument("verify_temperature_matching: tau must be positive");
  TheoremCheckReport report;
  report.id = "temperature_matching";
  Rng rng = named_stream(seed, "temperature-matching");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  double gap_min = std::numeric_limits<double>::infinity();
  double gap_max = -std::numeric_limits<double>::infinity();
  double gap_sum = 0.0;
  std::size_t within_sqrt_2delta = 0;
  std::size_t rejections = 0;
  Vector teacher(classes), student(classes);
  for (std::size_t t = 0; t < n_trials; ++t) {
    for (double& v : teacher) v = 2.0 * normal(rng);
    // Student logits: teacher logits plus noise, rejected until KL at temperature 1 is ≤ δ.
    double noise = std::sqrt(2.0 * delta) * 2.0 * unit(rng);
    while (true) {
      for (std::size_t c = 0; c < classes; ++c) student[c] = teacher[c] + noise * normal(rng);
      if (kl_divergence(softmax(teacher), softmax(student)) <= delta) break;
      ++rejections;
      noise *= 0.8;
    }
    const ProbVector p_tau = softmax(teacher, tau);
    const ProbVector q_tau = softmax(student, tau);
    const double kl_tau = kl_divergence(p_tau, q_tau);
    const auto [l1, bound] = pinsker_check(p_tau, q_tau);
    report.max_violation = std::max(report.max_violation, l1 - bound);
    const double gap = kl_tau - delta;
    gap_min = std::min(gap_min, gap);
    gap_max = std::max(gap_max, gap);
    gap_sum += gap;
    if (l1 <= std::sqrt(2.0 * delta)) ++within_sqrt_2delta;
    ++report.trials;
  }
  report.measurements.emplace_back("delta", delta);
  report.measurements.emplace_back("tau", tau);
  report.measurements.emplace_back("kl_gap_min", gap_min);
  report.measurements.emplace_back("kl_gap_mean", gap_sum / static_cast<double>(std::max<std::size_t>(1, n_trials)));
  report.measurements.emplace_back("kl_gap_max", gap_max);
  report.measurements.emplace_back("fraction_l1_within_sqrt_2delta",
                                   static_cast<double>(within_sqrt_2delta) / static_cast<double>(std::max<std::size_t>(1, n_trials)));
  report.measurements.emplace_back("rejections", static_cast<double>(rejections));
  report.finish();
  return report;
}

std::vector<TheoremCheckReport> run_theory_suite(const TheorySuiteConfig& config) {
  std::vector<TheoremCheckReport> reports;

  {
    TheoremCheckReport merged;
    merged.id = "optimal_single_head_distribution";
    merged.tolerance = config.tolerance;
    Rng rng = named_stream(config.seed, "optimum-configs");
    std::uniform_int_distribution<std::size_t> dim_pick(2, 10);
    std::uniform_real_distribution<double> lambda_pick(0.0, 1.0);
    double min_increase = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < config.optimum_configs; ++k) {
      const std::size_t dim = dim_pick(rng);
      std::uniform_int_distribution<std::size_t> label_pick(0, dim - 1);
      const ProbVector y = smooth_toward_uniform(ProbVector::one_hot(dim, label_pick(rng)));
      const ProbVector p = sample_dirichlet(dim, rng);
      const double lambda = lambda_pick(rng);
      const auto r = verify_optimum(y, p, lambda, config.optimum_perturbations, 1e-2, config.seed + k, config.rule);
      merged.trials += r.trials;
      merged.max_violation = std::max(merged.max_violation, r.max_violation);
      min_increase = std::min(min_increase, r.measurements.back().second);
    }
    merged.measurements.emplace_back("configurations", static_cast<double>(config.optimum_configs));
    merged.measurements.emplace_back("min_increase", min_increase);
    merged.finish();
    reports.push_back(std::move(merged));
  }

  {
    auto r = verify_pinsker(config.pinsker_trials, config.seed);
    r.tolerance = config.tolerance;
    r.finish();
    reports.push_back(std::move(r));
  }

  {
    TheoremCheckReport merged;
    merged.id = "inference_equivalence";
    merged.tolerance = config.tolerance;
    std::size_t k = 0;
    for (double eps : config.epsilons) {
      for (double lambda : config.lambdas) {
        const auto r = verify_inference_equivalence(eps, lambda, config.equivalence_trials, 6, config.seed + k++);
        merged.trials += r.trials;
        merged.max_violation = std::max(merged.max_violation, r.max_violation);
      }
    }
    merged.measurements.emplace_back("grid_points", static_cast<double>(k));
    merged.finish();
    reports.push_back(std::move(merged));
  }

  {
    auto r = verify_temperature_matching(config.temperature_delta, config.temperature_tau, config.temperature_trials, 6,
                                         config.seed);
    r.tolerance = config.tolerance;
    r.finish();
    reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace dho::theory
