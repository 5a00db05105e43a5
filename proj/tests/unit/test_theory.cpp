#include <cmath>
#include <limits>

#include "doctest.h"
#include "dho/theory.hpp"

using namespace dho;
using namespace dho::theory;

namespace {

double measured(const TheoremCheckReport& r, const std::string& name) {
  for (const auto& [k, v] : r.measurements) {
    if (k == name) return v;
  }
  FAIL("missing measurement " << name);
  return 0.0;
}

}  // namespace

TEST_SUITE("theory") {

TEST_CASE("optimal mixture examples") {
  const ProbVector y = ProbVector::one_hot(2, 0), p{0.3, 0.7};
  const ProbVector m = optimal_mixture(y, p, 0.5);
  CHECK(m[0] == doctest::Approx(0.65));
  CHECK(m[1] == doctest::Approx(0.35));
  CHECK(optimal_mixture(y, p, 1.0) == y);
  CHECK(optimal_mixture(y, p, 0.0) == p);
}

TEST_CASE("single-head objective") {
  const ProbVector y = ProbVector::one_hot(2, 0), p{0.3, 0.7};
  // At λ = 1 the objective is plain cross-entropy.
  CHECK(sho_objective(ProbVector{0.5, 0.5}, y, p, 1.0) == doctest::Approx(std::log(2.0)));
  CHECK(sho_objective(p, y, p, 0.0) == doctest::Approx(0.0));
  CHECK(std::isinf(sho_objective(ProbVector{0.0, 1.0}, y, p, 0.5)));
  const ProbVector best = optimal_mixture(y, p, 0.5);
  for (double a : {0.5, 0.6, 0.64, 0.66, 0.7, 0.9}) {
    CHECK(sho_objective(best, y, p, 0.5) <= sho_objective(ProbVector{a, 1.0 - a}, y, p, 0.5));
  }
}

TEST_CASE("optimum verification") {
  SUBCASE("weighted mean passes") {
    Rng rng = named_stream(5, "test-optimum");
    for (int trial = 0; trial < 10; ++trial) {
      const ProbVector y = smooth_toward_uniform(ProbVector::one_hot(4, std::size_t(trial % 4)));
      const ProbVector p = sample_dirichlet(4, rng);
      const auto r = verify_optimum(y, p, 0.1 * trial, 500, 1e-2, std::uint64_t(trial));
      CHECK(r.pass);
      CHECK(measured(r, "min_increase") >= 0.0);
    }
  }
  SUBCASE("normalized geometric mean is caught") {
    const ProbVector y = smooth_toward_uniform(ProbVector::one_hot(3, 0)), p{0.2, 0.5, 0.3};
    const auto r = verify_optimum(y, p, 0.5, 2000, 1e-2, 1, MixtureRule::kNormalizedGeometric);
    CHECK_FALSE(r.pass);
  }
}

TEST_CASE("pinsker") {
  const auto [l1, bound] = pinsker_check(ProbVector::one_hot(2, 0), ProbVector::uniform(2));
  CHECK(l1 == doctest::Approx(1.0));
  CHECK(bound == doctest::Approx(std::sqrt(2.0 * std::log(2.0))));
  const auto [zero, zero_bound] = pinsker_check(ProbVector{0.2, 0.8}, ProbVector{0.2, 0.8});
  CHECK(zero == 0.0);
  CHECK(zero_bound == doctest::Approx(0.0));
  const auto r = verify_pinsker(2000, 3);
  CHECK(r.pass);
  CHECK(measured(r, "min_slack") >= 0.0);
}

TEST_CASE("move toward lands at the requested distance") {
  const ProbVector t{0.5, 0.3, 0.2}, other = ProbVector::one_hot(3, 2);
  const ProbVector m = move_toward(t, other, 0.2);
  CHECK(l1_distance(m, t) == doctest::Approx(0.2));
  CHECK(move_toward(t, other, 5.0) == other);
}

TEST_CASE("inference equivalence") {
  SUBCASE("epsilon zero is exact") {
    const auto r = verify_inference_equivalence(0.0, 0.4, 200, 5, 1);
    CHECK(r.pass);
    CHECK(measured(r, "max_l1_distance") <= 1e-12);
  }
  SUBCASE("bound holds and is approached") {
    for (double lambda : {0.0, 0.25, 0.5, 1.0}) {
      const auto r = verify_inference_equivalence(0.1, lambda, 500, 4, 2);
      CHECK(r.pass);
      CHECK(measured(r, "max_l1_distance") <= 0.1 + 1e-12);
    }
  }
}

TEST_CASE("temperature matching") {
  const auto same = verify_temperature_matching(0.01, 1.0, 200, 4, 3);
  CHECK(same.pass);
  CHECK(measured(same, "kl_gap_max") <= 1e-12);
  const auto warm = verify_temperature_matching(0.01, 2.0, 200, 4, 3);
  CHECK(warm.pass);
  CHECK(measured(warm, "fraction_l1_within_sqrt_2delta") >= 0.0);
}

TEST_CASE("dirichlet samples live on the simplex") {
  Rng rng = named_stream(1, "dirichlet-test");
  for (int i = 0; i < 200; ++i) {
    const ProbVector p = sample_dirichlet(6, rng);
    double s = 0.0;
    for (double v : p.values()) {
      REQUIRE(v >= 0.0);
      s += v;
    }
    REQUIRE(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("quick suite passes; fault rule fails") {
  TheorySuiteConfig c;
  c.optimum_configs = 10;
  c.optimum_perturbations = 200;
  c.pinsker_trials = 500;
  c.equivalence_trials = 200;
  c.temperature_trials = 100;
  const auto reports = run_theory_suite(c);
  CHECK(reports.size() == 4);
  for (const auto& r : reports) CHECK_MESSAGE(r.pass, r.id);
  c.rule = MixtureRule::kNormalizedGeometric;
  CHECK_FALSE(run_theory_suite(c).front().pass);
}

}  // TEST_SUITE
