#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "dho/losses.hpp"
#include "oracle.hpp"

using namespace dho;

namespace {

LossInputs inputs(const oracle::Fixture& f) {
  return {f.data, f.teacher, f.labeled, f.unlabeled, f.lambda, f.eta};
}

std::vector<double> flat(ModelGrad g, HeadMode mode) {
  std::vector<double> out;
  for (const auto& v : StudentModel::grad_views(g, mode)) out.insert(out.end(), v.values.begin(), v.values.end());
  return out;
}

std::vector<double> flat(const std::vector<Vector>& parts) {
  std::vector<double> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

bool all_zero(std::span<const double> v) {
  for (double x : v) {
    if (x != 0.0) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("losses agree with the long double oracle") {
  std::uint64_t seed = 1;
  for (int trial = 0; trial < 30; ++trial) {
    const HeadMode mode = trial % 2 ? HeadMode::kDho : HeadMode::kSho;
    auto f = oracle::usable_fixture(seed, mode, mode == HeadMode::kDho && trial % 3 == 0);
    const auto ref = oracle::losses(f.model, f.data, f.teacher, f.labeled, f.unlabeled, f.eta);
    const auto got = dho_losses(f.model, inputs(f));
    CHECK(got.ce == doctest::Approx(double(ref.ce)).epsilon(1e-10));
    CHECK(got.kd == doctest::Approx(double(ref.kd)).epsilon(1e-10));
    CHECK(got.combined == doctest::Approx(f.lambda * double(ref.ce) + (1 - f.lambda) * double(ref.kd)).epsilon(1e-10));
    const auto bundle = compute_gradients(f.model, inputs(f));
    CHECK(bundle.losses.ce == doctest::Approx(got.ce).epsilon(1e-12));
    CHECK(bundle.losses.kd == doctest::Approx(got.kd).epsilon(1e-12));
  }
}

TEST_CASE("lambda of one reduces to cross-entropy") {
  auto f = oracle::random_fixture(5, HeadMode::kDho, false);
  f.lambda = 1.0;
  const auto l = dho_losses(f.model, inputs(f));
  CHECK(l.combined == l.ce);
}

TEST_CASE("perfect predictions give near-zero loss") {
  // Identity extractor, huge logits on the true class, teacher equal to the student at η.
  StudentModel m = make_student(2, {}, 2, 2, HeadMode::kDho);
  m.extractor().layers()[0] = DenseLayer{Matrix::identity(2), Vector(2, 0.0)};
  std::get<LinearHead>(m.ce_head()).weight = Matrix(2, 2, std::vector<double>{60, 0, 0, 60});
  std::get<LinearHead>(m.kd_head()).weight = Matrix(2, 2, std::vector<double>{60, 0, 0, 60});
  const Dataset d({{{1, 0}, 0}, {{0, 1}, 1}}, 2, 2);
  const double eta = 2.0;
  const TeacherPredictions t({softmax(Vector{60, 0}, eta), softmax(Vector{0, 60}, eta)}, eta);
  const std::vector<std::size_t> lab{0, 1}, unl{};
  const auto l = dho_losses(m, {d, t, lab, unl, 0.5, eta});
  CHECK(l.ce < 1e-12);
  CHECK(std::abs(l.kd) < 1e-12);
}

TEST_CASE("SHO losses equal DHO losses on aliased heads") {
  for (std::uint64_t seed = 2; seed <= 20; seed += 2) {
    auto f = oracle::random_fixture(seed, HeadMode::kSho, false);
    const auto a = sho_losses(f.model, inputs(f)), b = dho_losses(f.model, inputs(f));
    CHECK(a.ce == b.ce);
    CHECK(a.kd == b.kd);
  }
  auto f = oracle::random_fixture(3, HeadMode::kDho, false);
  CHECK_THROWS_AS(sho_losses(f.model, inputs(f)), InvalidArgument);
}

TEST_CASE("lambda of zero leaves the CE head without gradient") {
  auto f = oracle::random_fixture(7, HeadMode::kDho, false);
  f.lambda = 0.0;
  const auto bundle = compute_gradients(f.model, inputs(f));
  const ModelGrad g = bundle.combined(0.0);
  CHECK(all_zero(g.heads[0].weight.flat()));
  CHECK(all_zero(g.heads[0].bias));
  CHECK_FALSE(all_zero(g.heads[1].weight.flat()));
}

TEST_CASE("input validation") {
  auto f = oracle::random_fixture(9, HeadMode::kDho, false);
  const std::vector<std::size_t> none, unlabeled_idx{5};
  CHECK_THROWS_AS(dho_losses(f.model, {f.data, f.teacher, f.labeled, f.unlabeled, 1.5, 2.0}), InvalidArgument);
  CHECK_THROWS_AS(dho_losses(f.model, {f.data, f.teacher, f.labeled, f.unlabeled, 0.5, 0.0}), InvalidArgument);
  CHECK_THROWS_AS(dho_losses(f.model, {f.data, f.teacher, none, f.unlabeled, 0.5, 2.0}), InvalidArgument);
  CHECK_THROWS_AS(compute_gradients(f.model, {f.data, f.teacher, unlabeled_idx, f.unlabeled, 0.5, 2.0}),
                  InvalidArgument);
}

TEST_CASE("head gradient examples") {
  const ProbVector p{0.7, 0.2, 0.1};
  const auto g = head_gradients(p, ProbVector::one_hot(3, 0), Vector{1.0, 2.0});
  const double expected_w[] = {-0.3, -0.6, 0.2, 0.4, 0.1, 0.2};
  for (std::size_t i = 0; i < 6; ++i) CHECK(g.weight.flat()[i] == doctest::Approx(expected_w[i]));
  CHECK(g.bias[0] == doctest::Approx(-0.3));

  const auto same = head_gradients(p, p, Vector{3.0, -1.0});
  CHECK(all_zero(same.weight.flat()));

  const auto warm = head_gradients(p, ProbVector::one_hot(3, 0), Vector{1.0, 2.0}, 2.0);
  for (std::size_t i = 0; i < 6; ++i) CHECK(warm.weight.flat()[i] == doctest::Approx(expected_w[i] / 2.0));
  CHECK_THROWS_AS(head_gradients(p, ProbVector{0.5, 0.5}, Vector{1.0}), InvalidArgument);
}

TEST_CASE("head gradients match finite differences of the per-example losses") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t classes = 3, d = 4;
    LinearHead h{Matrix(classes, d), oracle::gaussian_vector(classes, rng)};
    for (double& v : h.weight.flat()) v = std::normal_distribution<double>(0.0, 1.0)(rng);
    const Vector z = oracle::gaussian_vector(d, rng);
    const ProbVector target = softmax(oracle::gaussian_vector(classes, rng));
    const double eta = 0.5 + trial * 0.1;
    auto loss = [&](const LinearHead& head) {
      return double(oracle::kl(target, oracle::softmax(oracle::head(head, oracle::widen(z)), eta)));
    };
    const auto g = head_gradients(softmax(linear_head_forward(h, z), eta), target, z, eta);
    std::vector<double> fd;
    for (std::size_t i = 0; i < h.weight.flat().size(); ++i) {
      LinearHead up = h, down = h;
      up.weight.flat()[i] += 1e-6;
      down.weight.flat()[i] -= 1e-6;
      fd.push_back((loss(up) - loss(down)) / 2e-6);
    }
    CHECK(oracle::relative_error(g.weight.flat(), fd) < 1e-6);
  }
}

TEST_CASE("backprop through the extractor") {
  StudentModel m = make_student(3, {4}, 2, 2, HeadMode::kSho);
  init_random(m, 2);
  Activations cache;
  m.extractor().forward(Vector{0.2, -0.4, 1.0}, &cache);
  const auto [ce, kd] = backprop_extractor(m.extractor(), Vector{0, 0}, Vector{1, -1}, cache);
  CHECK(all_zero(ce.flatten()));
  CHECK(ce.flatten().size() == kd.flatten().size());
  CHECK_THROWS_AS(backprop_extractor(m.extractor(), Vector{0, 0}, Vector{0, 0}, Activations{}), StateError);
}

TEST_CASE("full gradients match finite differences") {
  std::uint64_t seed = 100;
  for (int trial = 0; trial < 12; ++trial) {
    const HeadMode mode = trial % 2 ? HeadMode::kSho : HeadMode::kDho;
    auto f = oracle::usable_fixture(seed, mode, mode == HeadMode::kDho && trial % 4 == 0, 1e-3);
    const auto bundle = compute_gradients(f.model, inputs(f));
    const auto fd_ce = oracle::finite_differences(f.model, [&](const StudentModel& m) {
      return double(oracle::losses(m, f.data, f.teacher, f.labeled, f.unlabeled, f.eta).ce);
    });
    const auto fd_kd = oracle::finite_differences(f.model, [&](const StudentModel& m) {
      return double(oracle::losses(m, f.data, f.teacher, f.labeled, f.unlabeled, f.eta).kd);
    });
    CHECK(oracle::relative_error(flat(bundle.ce, mode), flat(fd_ce)) < 1e-5);
    CHECK(oracle::relative_error(flat(bundle.kd, mode), flat(fd_kd)) < 1e-5);
  }
}

TEST_CASE("combined gradient is linear in lambda") {
  auto f = oracle::random_fixture(13, HeadMode::kDho, false);
  const auto bundle = compute_gradients(f.model, inputs(f));
  const auto ce = flat(bundle.ce, HeadMode::kDho), kd = flat(bundle.kd, HeadMode::kDho);
  for (double lambda : {0.0, 0.25, 0.5, 0.9, 1.0}) {
    const auto g = flat(bundle.combined(lambda), HeadMode::kDho);
    for (std::size_t i = 0; i < g.size(); ++i) {
      REQUIRE(g[i] == doctest::Approx(lambda * ce[i] + (1 - lambda) * kd[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("property: DHO heads receive only their own loss") {
  std::uint64_t seed = 1;
  for (int trial = 0; trial < 40; ++trial) {
    auto f = oracle::usable_fixture(seed, HeadMode::kDho, trial % 2 == 0);
    const auto b = compute_gradients(f.model, inputs(f));
    REQUIRE(all_zero(b.ce.heads[1].weight.flat()));
    REQUIRE(all_zero(b.kd.heads[0].weight.flat()));
    REQUIRE(all_zero(b.kd.heads[0].bias));
  }
}

TEST_CASE("conflict metrics") {
  // Single labeled example, teacher equal to the one-hot label, SHO: CE and KD pull the same way.
  StudentModel m = make_student(2, {}, 3, 3, HeadMode::kSho);
  m.extractor().layers()[0] = DenseLayer{Matrix(3, 2, std::vector<double>{1, 0, 0, 1, 1, 1}), Vector(3, 0.0)};
  const Dataset d({{{0.7, 0.4}, 1}}, 3, 2);
  const TeacherPredictions onehot({ProbVector::one_hot(3, 1)}, 1.0);
  const std::vector<std::size_t> lab{0}, unl{};
  const auto same = conflict_metrics(compute_gradients(m, {d, onehot, lab, unl, 0.5, 1.0}));
  REQUIRE(same.cossim_head);
  CHECK(*same.cossim_head == doctest::Approx(1.0));

  SUBCASE("orthogonal residuals give zero head cosine") {
    // p̂ = uniform on 2 classes; y = e0 gives (−½, ½); teacher (½, ½) at η=1 gives a zero KD residual.
    StudentModel zero = make_student(1, {1}, 1, 2, HeadMode::kSho);
    zero.extractor().layers()[0] = DenseLayer{Matrix(1, 1, std::vector<double>{1}), Vector{0}};
    const Dataset one({{{1.0}, 0}}, 2, 1);
    const TeacherPredictions half({ProbVector{0.5, 0.5}}, 1.0);
    const auto s = conflict_metrics(compute_gradients(zero, {one, half, lab, unl, 0.5, 1.0}));
    CHECK_FALSE(s.cossim_head.has_value());
    CHECK(s.inner_product == doctest::Approx(0.0));
  }
}

TEST_CASE("property: single-example SHO head cosine has the sign of the inner product") {
  std::mt19937_64 rng(17);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    StudentModel m = make_student(3, {5}, 4, 3, HeadMode::kSho);
    for (auto& p : m.parameters()) {
      for (double& v : p.values) v = std::normal_distribution<double>(0.0, 1.0)(rng);
    }
    const Dataset d({{oracle::gaussian_vector(3, rng), std::size_t(trial % 3)}}, 3, 3);
    const TeacherPredictions t({softmax(oracle::gaussian_vector(3, rng, 2.0))}, 1.0);
    const std::vector<std::size_t> lab{0}, unl{};
    const auto b = compute_gradients(m, {d, t, lab, unl, 0.5, 1.5});
    const auto s = conflict_metrics(b);
    if (!s.cossim_head || std::abs(s.inner_product) < 1e-12) continue;
    ++checked;
    REQUIRE((*s.cossim_head > 0) == (s.inner_product > 0));
  }
  CHECK(checked > 250);
}

TEST_CASE("trace csv round-trip and smoothing") {
  ConflictTrace trace{HeadMode::kSho, {{0, 0.25, std::nullopt, -0.125, {}}, {1, -1.0 / 3.0, 0.5, 1e-300, {}}}};
  const auto path = std::filesystem::temp_directory_path() / "dho_trace_test.csv";
  write_conflict_trace(path, trace);
  const auto back = read_conflict_trace(path);
  CHECK(back.mode == HeadMode::kSho);
  REQUIRE(back.samples.size() == 2);
  CHECK(back.samples[1].cossim_head == trace.samples[1].cossim_head);
  CHECK_FALSE(back.samples[0].cossim_theta.has_value());
  CHECK(back.samples[1].inner_product == 1e-300);

  const auto s = smooth_series({std::nullopt, 1.0, 0.0, std::nullopt}, 0.5);
  CHECK_FALSE(s[0].has_value());
  CHECK(*s[1] == 1.0);
  CHECK(*s[2] == 0.5);
  CHECK(*s[3] == 0.5);
}

TEST_CASE("feature distillation loss") {
  const Matrix id = Matrix::identity(2);
  CHECK(feature_distillation_loss({{1, 2}}, {{1, 2}}, id) == 0.0);
  CHECK(feature_distillation_loss({{1, 2}, {0, 0}}, {{0, 2}, {0, 3}}, id) == doctest::Approx(5.0));
  CHECK_THROWS_AS(feature_distillation_loss({{1, 2}}, {{1, 2, 3}}, id), InvalidArgument);
}

}  // TEST_SUITE
