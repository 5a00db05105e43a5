#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dho/numcore.hpp"
#include "dho/rng.hpp"

namespace dho::theory {

/// Outcome of one randomized numerical check.
struct TheoremCheckReport {
  std::string id;
  std::size_t trials = 0;
  double max_violation = 0.0;
  double tolerance = 1e-9;
  bool pass = true;
  /// Extra measured quantities (name, value) reported alongside the verdict.
  std::vector<std::pair<std::string, double>> measurements;

  void finish() { pass = max_violation <= tolerance; }
};

/// Smallest entry an interior simplex point may have.
inline constexpr double kInteriorFloor = 1e-9;

/// Symmetric Dirichlet(1) sample, i.e. uniform on the simplex.
ProbVector sample_dirichlet(std::size_t dim, Rng& rng);

/// (1 − w)·y + w·uniform.
ProbVector smooth_toward_uniform(const ProbVector& y, double weight = 1e-6);

/// λ·y + (1−λ)·p.
ProbVector optimal_mixture(const ProbVector& y, const ProbVector& p, double lambda);

/// λ·(−Σ y log p̂) + (1−λ)·KL(p‖p̂). +∞ when p̂ has a zero where y or p is positive.
double sho_objective(const ProbVector& p_hat, const ProbVector& y, const ProbVector& p, double lambda);

/// Candidate minimizer tested by verify_optimum. kNormalizedGeometric exists as a negative control.
enum class MixtureRule { kWeightedMean, kNormalizedGeometric };

ProbVector candidate_minimizer(const ProbVector& y, const ProbVector& p, double lambda, MixtureRule rule);

/// Samples simplex-tangent perturbations δ (Σδ = 0) of the candidate minimizer and records the
/// largest amount by which objective(p̂ + δ) undercuts objective(p̂).
TheoremCheckReport verify_optimum(const ProbVector& y, const ProbVector& p, double lambda, std::size_t n_perturbations,
                                  double perturbation_scale, std::uint64_t seed,
                                  MixtureRule rule = MixtureRule::kWeightedMean);

/// (‖p − q‖₁, sqrt(2·KL(p‖q))).
std::pair<double, double> pinsker_check(const ProbVector& p, const ProbVector& q);

/// Random Dirichlet pairs with C drawn from [min_classes, max_classes].
TheoremCheckReport verify_pinsker(std::size_t n_trials, std::uint64_t seed, std::size_t min_classes = 2,
                                  std::size_t max_classes = 10);

/// Point at ℓ1 distance `distance` from `target` along the segment toward `toward` (clipped at `toward`).
ProbVector move_toward(const ProbVector& target, const ProbVector& toward, double distance);

/// Heads within ℓ1 distance ε of (y, p); checks ‖λ·p̂_CE + (1−λ)·p̂_KD − (λy + (1−λ)p)‖₁ ≤ ε.
TheoremCheckReport verify_inference_equivalence(double epsilon, double lambda, std::size_t n_trials, std::size_t classes,
                                                std::uint64_t seed);

/// Samples teacher/student logit pairs with KL(p₁‖σ(h)) ≤ δ, then checks Pinsker at temperature τ
/// and reports (without asserting) how KL at τ compares to δ.
TheoremCheckReport verify_temperature_matching(double delta, double tau, std::size_t n_trials, std::size_t classes,
                                               std::uint64_t seed);

struct TheorySuiteConfig {
  std::size_t optimum_configs = 100;
  std::size_t optimum_perturbations = 10000;
  std::size_t pinsker_trials = 10000;
  std::size_t equivalence_trials = 10000;
  std::vector<double> epsilons{0.01, 0.1, 0.5};
  std::vector<double> lambdas{0.0, 0.3, 0.5, 0.7, 1.0};
  std::size_t temperature_trials = 1000;
  double temperature_delta = 0.01;
  double temperature_tau = 2.0;
  double tolerance = 1e-9;
  std::uint64_t seed = 0;
  MixtureRule rule = MixtureRule::kWeightedMean;
};

/// Runs every check and returns one merged report per result.
std::vector<TheoremCheckReport> run_theory_suite(const TheorySuiteConfig& config);

}  // namespace dho::theory
