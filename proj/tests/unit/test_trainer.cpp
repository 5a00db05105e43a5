#include <cmath>
#include <limits>

#include "doctest.h"
#include "dho/inference.hpp"
#include "dho/trainer.hpp"
#include "oracle.hpp"

using namespace dho;

namespace {

struct Problem {
  Dataset train;
  Dataset test;
  LabeledSplit split;
  TeacherPredictions teacher;
};

Problem separated(std::uint64_t seed, std::size_t shots = 4, double corruption = 0.0) {
  auto mix = generate_gaussian_mixture({4, 16, 40, 10.0, 0.1}, seed);
  Dataset test = sample_mixture(mix.means, 50, 0.1, seed, SplitTag::kTest);
  auto split = kshot_split(mix.data, shots, seed);
  auto teacher = oracle_teacher_predict({mix.means, 0.0, 0.01, corruption}, mix.data, seed);
  return {std::move(mix.data), std::move(test), std::move(split), std::move(teacher)};
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_labeled = 16;
  c.batch_unlabeled = 32;
  c.learning_rate = 5e-3;
  c.seed = 3;
  return c;
}

StudentModel student(HeadMode mode, std::uint64_t seed = 1) {
  StudentModel m = make_student(16, {32}, 16, 4, mode);
  init_random(m, seed);
  return m;
}

std::vector<double> snapshot(StudentModel& m) {
  std::vector<double> out;
  for (const auto& p : m.parameters()) out.insert(out.end(), p.values.begin(), p.values.end());
  return out;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("zero gradient and zero decay leave parameters unchanged") {
  for (OptimizerKind kind : {OptimizerKind::kAdamW, OptimizerKind::kSgd}) {
    Vector p{1.0, -2.0}, g{0.0, 0.0};
    TrainConfig c;
    c.optimizer = kind;
    c.weight_decay = 0.0;
    OptimizerState s;
    optimizer_step({{"p", p}}, {{"p", g}}, s, c);
    CHECK(p == Vector{1.0, -2.0});
  }
}

TEST_CASE("SGD step is minus learning rate times gradient") {
  Vector p{1.0, -2.0, 0.5}, g{0.3, -0.7, 2.0};
  TrainConfig c;
  c.optimizer = OptimizerKind::kSgd;
  c.learning_rate = 0.1;
  c.weight_decay = 0.0;
  OptimizerState s;
  optimizer_step({{"p", p}}, {{"p", g}}, s, c);
  CHECK(p[0] == doctest::Approx(1.0 - 0.03));
  CHECK(p[1] == doctest::Approx(-2.0 + 0.07));
  CHECK(p[2] == doctest::Approx(0.5 - 0.2));
}

TEST_CASE("AdamW matches a hand-computed three-step trace") {
  using LD = long double;
  const double grads[3] = {0.5, -0.2, 0.3};
  TrainConfig c;
  c.learning_rate = 0.1;
  c.weight_decay = 0.05;
  Vector p{0.8}, g{0.0};
  OptimizerState s;
  LD ref = 0.8L, m = 0, v = 0;
  for (int t = 1; t <= 3; ++t) {
    g[0] = grads[t - 1];
    optimizer_step({{"p", p}}, {{"p", g}}, s, c);
    m = 0.9L * m + 0.1L * grads[t - 1];
    v = 0.999L * v + 0.001L * LD(grads[t - 1]) * grads[t - 1];
    const LD mhat = m / (1 - std::pow(0.9L, LD(t))), vhat = v / (1 - std::pow(0.999L, LD(t)));
    ref = ref * (1 - 0.1L * 0.05L) - 0.1L * mhat / (std::sqrt(vhat) + 1e-8L);
    CHECK(p[0] == doctest::Approx(double(ref)).epsilon(1e-12));
  }
  CHECK(s.step == 3);
}

TEST_CASE("non-finite gradients raise a divergence error") {
  Vector p{1.0}, g{std::numeric_limits<double>::quiet_NaN()};
  OptimizerState s;
  CHECK_THROWS_AS(optimizer_step({{"p", p}}, {{"p", g}}, s, TrainConfig{}), DivergenceError);
}

TEST_CASE("training with an absurd learning rate diverges") {
  auto prob = separated(2);
  StudentModel m = student(HeadMode::kSho);
  TrainConfig c = quick(50);
  c.optimizer = OptimizerKind::kSgd;
  c.learning_rate = 1e150;
  c.cosine_decay = false;
  CHECK_THROWS_AS(train(m, prob.train, prob.split, prob.teacher, c), DivergenceError);
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_schedule(0, 100, 0) == doctest::Approx(1.0));
  CHECK(cosine_schedule(100, 100, 0) == doctest::Approx(0.0));
  CHECK(cosine_schedule(50, 100, 0) == doctest::Approx(0.5));
  CHECK(cosine_schedule(5, 100, 10) == doctest::Approx(0.5));
  CHECK(cosine_schedule(10, 110, 10) == doctest::Approx(1.0));
}

TEST_CASE("steps per epoch round up over the whole pool") {
  LabeledSplit split;
  split.labeled = {0, 1, 2};
  split.unlabeled = {3, 4, 5, 6, 7, 8, 9};
  TrainConfig c;
  c.batch_unlabeled = 4;
  CHECK(steps_per_epoch(split, c) == 3);
  c.batch_unlabeled = 64;
  CHECK(steps_per_epoch(split, c) == 1);
}

TEST_CASE("zero epochs leave the model untouched") {
  auto prob = separated(1);
  StudentModel m = student(HeadMode::kDho);
  const auto before = snapshot(m);
  const auto report = train(m, prob.train, prob.split, prob.teacher, quick(0));
  CHECK(snapshot(m) == before);
  CHECK(report.trace.samples.empty());
  CHECK(report.steps == 0);
}

TEST_CASE("lambda of one never moves the KD head") {
  auto prob = separated(1);
  StudentModel m = student(HeadMode::kDho);
  const auto kd_before = std::get<LinearHead>(m.kd_head());
  TrainConfig c = quick(5);
  c.lambda = 1.0;
  train(m, prob.train, prob.split, prob.teacher, c);
  CHECK(std::get<LinearHead>(m.kd_head()).weight == kd_before.weight);
  CHECK(std::get<LinearHead>(m.kd_head()).bias == kd_before.bias);
}

TEST_CASE("lambda of one: DHO backbone and CE head follow SHO exactly") {
  auto prob = separated(4);
  StudentModel sho = student(HeadMode::kSho, 9);
  StudentModel dho(sho.extractor(), std::get<LinearHead>(sho.ce_head()), student(HeadMode::kDho, 10).kd_head());
  TrainConfig c = quick(4);
  c.lambda = 1.0;
  train(sho, prob.train, prob.split, prob.teacher, c);
  train(dho, prob.train, prob.split, prob.teacher, c);
  CHECK(std::get<LinearHead>(sho.ce_head()).weight == std::get<LinearHead>(dho.ce_head()).weight);
  for (std::size_t l = 0; l < sho.extractor().layers().size(); ++l) {
    CHECK(sho.extractor().layers()[l].weight == dho.extractor().layers()[l].weight);
  }
}

TEST_CASE("training is deterministic per seed") {
  auto prob = separated(5);
  StudentModel a = student(HeadMode::kDho), b = student(HeadMode::kDho), c = student(HeadMode::kDho);
  TrainConfig cfg = quick(3);
  train(a, prob.train, prob.split, prob.teacher, cfg);
  train(b, prob.train, prob.split, prob.teacher, cfg);
  cfg.seed = 4;
  train(c, prob.train, prob.split, prob.teacher, cfg);
  CHECK(snapshot(a) == snapshot(b));
  CHECK(snapshot(a) != snapshot(c));
}

TEST_CASE("labels outside the labeled split are never read") {
  auto prob = separated(6);
  std::vector<Example> scrambled = prob.train.examples();
  for (std::size_t i : prob.split.unlabeled) scrambled[i].label = (*scrambled[i].label + 1) % 4;
  const Dataset other(std::move(scrambled), 4, 16);
  StudentModel a = student(HeadMode::kDho), b = student(HeadMode::kDho);
  train(a, prob.train, prob.split, prob.teacher, quick(3));
  train(b, other, prob.split, prob.teacher, quick(3));
  CHECK(snapshot(a) == snapshot(b));
}

TEST_CASE("DHO learns a well separated four-class problem") {
  auto prob = separated(7);
  StudentModel m = student(HeadMode::kDho);
  const auto report = train(m, prob.train, prob.split, prob.teacher, quick(40));
  CHECK(report.epochs.back().combined < report.epochs.front().combined);
  CHECK(report.trace.samples.size() == report.steps);
  CHECK_FALSE(report.labeled_with_replacement);
  const double acc = evaluate(m, prob.test, heuristic_setting(1.0)).combined_accuracy;
  MESSAGE("test accuracy " << acc);
  CHECK(acc >= 0.95);
}

TEST_CASE("optimizer state can be carried across calls") {
  auto prob = separated(8);
  StudentModel m = student(HeadMode::kSho);
  OptimizerState state;
  train(m, prob.train, prob.split, prob.teacher, quick(2), &state);
  CHECK(state.step == 2 * steps_per_epoch(prob.split, quick(2)));
  CHECK_FALSE(state.first_moment.empty());
}

TEST_CASE("linear probe") {
  SUBCASE("one-hot features are perfectly separable") {
    std::vector<Vector> feats;
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < 60; ++i) {
      Vector f(3, 0.0);
      f[i % 3] = 1.0;
      feats.push_back(f);
      labels.push_back(i % 3);
    }
    const auto r = linear_probe_features(feats, labels, feats, labels, 3, {200, 16, 0.1, 0.0, 1});
    CHECK(r.train_accuracy == 1.0);
    CHECK(r.test_accuracy == 1.0);
  }
  SUBCASE("a random extractor beats chance on a separable mixture") {
    auto mix = generate_gaussian_mixture({4, 16, 50, 5.0, 1.0}, 3);
    const Dataset test = sample_mixture(mix.means, 50, 1.0, 3, SplitTag::kTest);
    StudentModel m = student(HeadMode::kSho, 2);
    const auto r = linear_probe(m.extractor(), mix.data, test, {100, 64, 1e-2, 0.0, 3});
    CHECK(r.test_accuracy > 0.25 + 0.05);
  }
  SUBCASE("unlabeled training data is rejected") {
    auto prob = separated(1);
    const Dataset stripped = strip_labels(prob.train, prob.split);
    StudentModel m = student(HeadMode::kSho);
    CHECK_THROWS_AS(linear_probe(m.extractor(), stripped, prob.test, {}), InvalidArgument);
  }
}

TEST_CASE("config validation") {
  TrainConfig c;
  c.lambda = -0.1;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = TrainConfig{};
  c.batch_labeled = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = TrainConfig{};
  c.beta2 = 1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  CHECK(optimizer_from_string("sgd") == OptimizerKind::kSgd);
  CHECK_THROWS_AS(optimizer_from_string("lion"), InvalidArgument);
}

}  // TEST_SUITE
