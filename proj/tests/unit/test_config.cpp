#include "doctest.h"
#include "dho/config.hpp"

using namespace dho;

TEST_SUITE("config") {

TEST_CASE("parsing sections, comments and whitespace") {
  const auto m = parse_config_text(
      "# leading comment\n"
      "[train]\n"
      "lambda = 0.25 \n"
      "; other comment style\n"
      "epochs=3\n"
      "[model]\n"
      "hidden = 8, 8\n");
  CHECK(m.at("train.lambda") == "0.25");
  CHECK(m.at("train.epochs") == "3");
  const RunConfig c = resolve_config(m);
  CHECK(c.train.lambda == 0.25);
  CHECK(c.train.epochs == 3);
  CHECK(c.model.hidden == std::vector<std::size_t>{8, 8});
  CHECK(c.train.teacher_temperature == c.teacher.temperature);
}

TEST_CASE("defaults") {
  const RunConfig c = resolve_config({});
  CHECK(c.model.mode == HeadMode::kDho);
  CHECK(c.train.epochs == 200);
  CHECK(c.train.learning_rate == 1e-3);
  CHECK(c.train.weight_decay == 1e-2);
  CHECK(c.train.batch_labeled == 64);
  CHECK(c.train.batch_unlabeled == 64);
  CHECK(c.train.optimizer == OptimizerKind::kAdamW);
  CHECK(c.teacher.temperature == 0.01);
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(parse_config_text("lambda = 1\n"), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"train.lamda", "0.5"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"train.lambda", "half"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"train.lambda", "2"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"model.mode", "triple"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"train.epochs", "-1"}}), ConfigError);
  CHECK_THROWS_AS(load_config_file("/nonexistent/dir/run.ini"), ConfigError);
}

TEST_CASE("overrides") {
  ConfigMap m = parse_config_text("[train]\nlambda = 0.5\n");
  apply_overrides(m, {"train.lambda=0.75", "model.kd_head=cosine"});
  const RunConfig c = resolve_config(m);
  CHECK(c.train.lambda == 0.75);
  CHECK(c.model.cosine_kd_head);
  CHECK_THROWS_AS(apply_overrides(m, {"train.lambda"}), ConfigError);
  CHECK_THROWS_AS(apply_overrides(m, {"lambda=0.5"}), ConfigError);
}

TEST_CASE("label fraction replaces the default shot count") {
  const RunConfig c = resolve_config({{"data.label_fraction", "0.1"}});
  CHECK_FALSE(c.data.shots.has_value());
  CHECK(c.data.label_fraction == 0.1);
}

TEST_CASE("hash is stable and canonical") {
  const RunConfig defaults = resolve_config({});
  const RunConfig spelled = resolve_config({{"train.lambda", "0.5"}, {"train.eta", "2.0"}});
  CHECK(config_hash(to_map(defaults)) == config_hash(to_map(spelled)));
  CHECK(config_hash(to_map(defaults)).size() == 16);
  const RunConfig other = resolve_config({{"train.lambda", "0.4"}});
  CHECK(config_hash(to_map(defaults)) != config_hash(to_map(other)));

  SUBCASE("resolved config round-trips through its own map") {
    const RunConfig c = resolve_config({{"model.hidden", "5,7"}, {"inference.alpha", "0.3"}, {"data.csv_num_classes", "3"}});
    CHECK(canonical_text(to_map(resolve_config(to_map(c)))) == canonical_text(to_map(c)));
  }
}

}  // TEST_SUITE
