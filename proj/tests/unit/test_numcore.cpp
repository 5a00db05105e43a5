#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "dho/numcore.hpp"

using namespace dho;

TEST_SUITE("numcore") {

TEST_CASE("softmax examples") {
  const Vector zeros{0.0, 0.0, 0.0};
  const ProbVector u = softmax(zeros, 1.0);
  for (double v : u.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const Vector two{std::log(2.0), 0.0};
  const ProbVector p = softmax(two, 1.0);
  CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  // 50-digit reference evaluation, frozen.
  const Vector logits{3.1, -0.7, 1.2};
  const ProbVector q = softmax(logits, 2.0);
  CHECK(std::abs(q[0] - 0.6509104494439181115009379) < 1e-15);
  CHECK(std::abs(q[1] - 0.09735577716091163206281484) < 1e-15);
  CHECK(std::abs(q[2] - 0.2517337733951702564362472) < 1e-15);
}

TEST_CASE("softmax rejects non-positive temperature") {
  const Vector logits{1.0, 2.0};
  CHECK_THROWS_AS(softmax(logits, 0.0), InvalidArgument);
  CHECK_THROWS_AS(softmax(logits, -1.0), InvalidArgument);
}

TEST_CASE("softmax survives huge logits") {
  const Vector logits{1000.0, -1000.0, 999.0};
  const ProbVector p = softmax(logits, 1e-3);
  CHECK(all_finite(p.values()));
  CHECK(p[0] == 1.0);
}

TEST_CASE("property: softmax is a distribution and shift invariant") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 20.0);
  std::uniform_real_distribution<double> t_pick(1e-3, 1e3);
  std::uniform_int_distribution<std::size_t> dim(1, 12);
  for (int trial = 0; trial < 2000; ++trial) {
    Vector logits(dim(rng));
    for (double& v : logits) v = g(rng);
    const double t = t_pick(rng);
    const ProbVector p = softmax(logits, t);
    double sum = 0.0;
    for (double v : p.values()) {
      REQUIRE(v >= 0.0);
      sum += v;
    }
    REQUIRE(std::abs(sum - 1.0) <= 1e-9);
    const double shift = g(rng) * 10.0;
    Vector shifted = logits;
    for (double& v : shifted) v += shift;
    const ProbVector s = softmax(shifted, t);
    for (std::size_t i = 0; i < p.size(); ++i) REQUIRE(std::abs(p[i] - s[i]) <= 1e-9);
  }
}

TEST_CASE("cross entropy examples") {
  CHECK(cross_entropy(ProbVector{1.0, 0.0, 0.0}, 0) == 0.0);
  CHECK(cross_entropy(ProbVector{0.5, 0.5}, 1) == doctest::Approx(std::log(2.0)));
  CHECK(cross_entropy(ProbVector{0.2, 0.3, 0.5}, 2) == doctest::Approx(-std::log(0.5)));
}

TEST_CASE("cross entropy clamps a zero probability and counts it") {
  ClampTally tally;
  const double ce = cross_entropy(ProbVector{1.0, 0.0}, 1, &tally);
  CHECK(ce == doctest::Approx(-std::log(kProbabilityFloor)));
  CHECK(tally.events == 1);
  CHECK_THROWS_AS(cross_entropy(ProbVector{1.0, 0.0}, 2), InvalidArgument);
}

TEST_CASE("kl divergence examples") {
  CHECK(kl_divergence(ProbVector{0.4, 0.6}, ProbVector{0.4, 0.6}) == 0.0);
  CHECK(kl_divergence(ProbVector{1.0, 0.0}, ProbVector{0.5, 0.5}) == doctest::Approx(std::log(2.0)));
  // 50-digit reference evaluation, frozen.
  CHECK(std::abs(kl_divergence(ProbVector{0.3, 0.7}, ProbVector{0.6, 0.4}) - 0.1837868973868122875644523) < 1e-15);
  CHECK_THROWS_AS(kl_divergence(ProbVector{0.5, 0.5}, ProbVector{0.2, 0.3, 0.5}), InvalidArgument);
}

TEST_CASE("kl divergence floors zero predictions") {
  ClampTally tally;
  const double v = kl_divergence(ProbVector{0.5, 0.5}, ProbVector{1.0, 0.0}, &tally);
  CHECK(std::isfinite(v));
  CHECK(tally.events == 1);
}

TEST_CASE("property: kl non-negative, zero only on equality, Pinsker holds") {
  std::mt19937_64 rng(5);
  std::exponential_distribution<double> e(1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t dim = 2 + trial % 9;
    auto draw = [&] {
      Vector v(dim);
      double s = 0.0;
      for (double& x : v) s += (x = e(rng));
      for (double& x : v) x /= s;
      return ProbVector::trusted(v);
    };
    const ProbVector p = draw(), q = draw();
    const double d = kl_divergence(p, q);
    REQUIRE(d >= 0.0);
    REQUIRE(kl_divergence(p, p) == doctest::Approx(0.0).epsilon(1e-15));
    if (l1_distance(p, q) > 1e-6) REQUIRE(d > 0.0);
    REQUIRE(l1_distance(p, q) <= std::sqrt(2.0 * d) + 1e-9);
  }
}

TEST_CASE("cosine similarity examples") {
  const Vector a{1, 2, 3};
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
  CHECK(cosine_similarity(Vector{1, 0}, Vector{0, 1}) == 0.0);
  CHECK(cosine_similarity(Vector{1, 1}, Vector{-1, -1}) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(cosine_similarity(Vector{0, 0}, Vector{1, 0}), UndefinedSimilarity);
  CHECK_THROWS_AS(cosine_similarity(Vector{1, 0}, Vector{1, 0, 0}), InvalidArgument);
}

TEST_CASE("property: cosine similarity is scale invariant and bounded") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> s(1e-3, 1e3);
  for (int trial = 0; trial < 1000; ++trial) {
    Vector a(6), b(6);
    for (double& v : a) v = g(rng);
    for (double& v : b) v = g(rng);
    const double base = cosine_similarity(a, b);
    REQUIRE(base >= -1.0);
    REQUIRE(base <= 1.0);
    const double la = s(rng), mb = s(rng);
    Vector sa = a, sb = b;
    for (double& v : sa) v *= la;
    for (double& v : sb) v *= mb;
    REQUIRE(cosine_similarity(sa, sb) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("l1 distance examples") {
  CHECK(l1_distance(ProbVector{0.2, 0.8}, ProbVector{0.2, 0.8}) == 0.0);
  CHECK(l1_distance(ProbVector{1, 0}, ProbVector{0, 1}) == 2.0);
  CHECK(l1_distance(ProbVector{0.6, 0.4}, ProbVector{0.5, 0.5}) == doctest::Approx(0.2));
  CHECK_THROWS_AS(l1_distance(ProbVector{1, 0}, ProbVector{1, 0, 0}), InvalidArgument);
}

TEST_CASE("entropy examples") {
  CHECK(entropy(ProbVector{1, 0}) == 0.0);
  CHECK(entropy(ProbVector{0.5, 0.5}) == doctest::Approx(std::log(2.0)));
  CHECK(entropy(ProbVector{0.25, 0.25, 0.25, 0.25}) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("ProbVector validates the simplex") {
  CHECK_THROWS_AS(ProbVector({0.5, 0.6}), InvalidArgument);
  CHECK_THROWS_AS(ProbVector({1.2, -0.2}), InvalidArgument);
  CHECK_NOTHROW(ProbVector({0.5, 0.5 + 5e-10}));
  CHECK(ProbVector::one_hot(3, 1).argmax() == 1);
  CHECK(ProbVector::uniform(4)[2] == 0.25);
  // Lowest index wins ties.
  CHECK(ProbVector{0.4, 0.4, 0.2}.argmax() == 0);
}

TEST_CASE("matrix helpers") {
  Matrix m(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
  const Vector x{1, 0, -1};
  const Vector y = matvec(m, x);
  CHECK(y == Vector{-2, -2});
  const Vector t = matvec_transposed(m, Vector{1, 1});
  CHECK(t == Vector{5, 7, 9});
  Matrix acc(2, 3);
  add_outer(Vector{1, 2}, x, 2.0, acc);
  CHECK(acc(1, 0) == 4.0);
  CHECK(acc(1, 2) == -4.0);
  CHECK(Matrix::identity(3)(1, 1) == 1.0);
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), InvalidArgument);
}

}  // TEST_SUITE
