#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "dho/checkpoint.hpp"
#include "dho/config.hpp"
#include "dho/experiment.hpp"
#include "dho/inference.hpp"
#include "dho/losses.hpp"
#include "dho/theory.hpp"
#include "dho/trainer.hpp"

namespace dho::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
  std::uint64_t seed = 1;
  std::string out = "runs";
  std::vector<std::string> overrides;
};

struct RunManifest {
  std::string subcommand;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string dataset;
  std::string teacher;
  std::string output_dir;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

std::string hex_digest(const std::string& text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Console output only; files keep full precision.
std::string show(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string cell(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

fs::path make_run_dir(const CommonOptions& common, RunManifest& manifest) {
  manifest.seed = common.seed;
  manifest.output_dir = manifest.subcommand + "-" + manifest.config_hash + "-" + std::to_string(common.seed);
  const fs::path dir = fs::path(common.out) / manifest.output_dir;
  fs::create_directories(dir);
  write_json(dir / "manifest.json", {{"subcommand", manifest.subcommand},
                                     {"config_hash", manifest.config_hash},
                                     {"seed", manifest.seed},
                                     {"dataset", manifest.dataset},
                                     {"teacher", manifest.teacher},
                                     {"output_dir", manifest.output_dir}});
  return dir;
}

void add_common(CLI::App& sub, CommonOptions& common) {
  sub.add_option("--seed", common.seed, "Seed for every named random stream");
  sub.add_option("--out", common.out, "Root directory for run outputs");
  sub.add_option("--override", common.overrides, "section.key=value, repeatable")->take_all();
}

json setting_json(const InterpolationSetting& s) {
  json j = {{"alpha", s.alpha}, {"beta", s.beta}};
  if (s.validation_accuracy) j["validation_accuracy"] = *s.validation_accuracy;
  return j;
}

json eval_json(const EvalResult& r) {
  return {{"ce_head_accuracy", r.ce_head_accuracy},
          {"kd_head_accuracy", r.kd_head_accuracy},
          {"combined_accuracy", r.combined_accuracy}};
}

void write_predictions(const fs::path& path, const Dataset& data, const EvalResult& r) {
  std::ofstream out(path, std::ios::binary);
  out << "index,label,prediction,alpha\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << i << ',' << (data[i].label ? std::to_string(*data[i].label) : "") << ',' << r.predictions[i] << ','
        << fmt(r.alphas[i]) << '\n';
  }
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
};

int cmd_train(const TrainArgs& args, const CommonOptions& common, std::ostream& out, std::ostream& err) {
  ConfigMap map;
  if (!args.config.empty()) map = load_config_file(args.config);
  apply_overrides(map, common.overrides);
  RunConfig config = resolve_config(map);
  config.train.seed = common.seed;

  RunData data = prepare_data(config, common.seed);
  StudentModel model = build_student(config, data, common.seed);

  RunManifest manifest{"train", config_hash(to_map(config)), 0, data.dataset_descriptor, data.teacher_descriptor, ""};
  const fs::path dir = make_run_dir(common, manifest);
  write_file(dir / "config.ini", canonical_text(to_map(config)));

  OptimizerState state;
  TrainReport report;
  try {
    report = train(model, data.train, data.split, data.teacher, config.train, &state);
  } catch (const DivergenceError& e) {
    err << "training diverged: " << e.what() << "\n";
    return kDiverged;
  }

  InterpolationSetting setting = emulate_sho(1.0);
  std::string source = "single-head";
  if (model.mode() == HeadMode::kDho) {
    if (data.validation) {
      setting = grid_search(model, *data.validation, default_alpha_grid(), default_beta_grid()).best;
      source = "grid-search";
    } else {
      setting = heuristic_setting(data.teacher_accuracy);
      source = "heuristic";
    }
    if (config.inference.alpha || config.inference.beta) source = "config";
    if (config.inference.alpha) setting.alpha = *config.inference.alpha;
    if (config.inference.beta) setting.beta = *config.inference.beta;
    setting.validate();
  }

  save_checkpoint(dir / "checkpoint.json", Checkpoint{model, setting, state});
  write_conflict_trace(dir / "conflict_trace.csv", report.trace);
  write_teacher_predictions(dir / "teacher.csv", data.teacher);
  write_csv_dataset(dir / "train.csv", strip_labels(data.train, data.split));
  if (data.validation) write_csv_dataset(dir / "val.csv", *data.validation);
  if (data.test) write_csv_dataset(dir / "test.csv", *data.test);

  json epochs = json::array();
  for (const auto& e : report.epochs) epochs.push_back({{"ce", e.ce}, {"kd", e.kd}, {"combined", e.combined}});
  json j = {{"mode", to_string(model.mode())},
            {"epochs", epochs},
            {"steps", report.steps},
            {"clamp_events", report.clamp_events},
            {"labeled_with_replacement", report.labeled_with_replacement},
            {"labeled_count", data.split.labeled.size()},
            {"unlabeled_count", data.split.unlabeled.size()},
            {"teacher_accuracy", data.teacher_accuracy},
            {"inference", setting_json(setting)},
            {"inference_source", source},
            {"checkpoint", "checkpoint.json"},
            {"conflict_trace", "conflict_trace.csv"}};
  if (data.test) {
    const EvalResult test = evaluate(model, *data.test, setting);
    j["test"] = eval_json(test);
    out << "test accuracy " << show(test.combined_accuracy) << " (ce head " << show(test.ce_head_accuracy)
        << ", kd head " << show(test.kd_head_accuracy) << ")\n";
  }
  write_json(dir / "report.json", j);
  write_json(dir / "timing.json", {{"wall_seconds", report.wall_seconds}});
  out << "run directory " << dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- eval / gridsearch

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::optional<double> alpha;
  std::optional<double> beta;
  bool adaptive = false;
  std::vector<double> alphas;
  std::vector<double> betas;
};

Dataset load_for(const StudentModel& model, const std::string& path, SplitTag tag) {
  return load_csv_dataset(path, CsvSchema{model.extractor().input_dim(), model.num_classes(), "label"}, tag);
}

int cmd_eval(const EvalArgs& args, const CommonOptions& common, std::ostream& out) {
  const std::string checkpoint_text = read_file(args.checkpoint);
  Checkpoint cp = parse_checkpoint(checkpoint_text);
  const Dataset data = load_for(cp.model, args.data, SplitTag::kTest);

  InterpolationSetting setting = cp.inference;
  if (args.alpha) setting.alpha = *args.alpha;
  if (args.beta) setting.beta = *args.beta;
  setting.validation_accuracy.reset();
  setting.validate();

  const ConfigMap key{{"checkpoint", hex_digest(checkpoint_text)},
                      {"data", hex_digest(read_file(args.data))},
                      {"alpha", fmt(setting.alpha)},
                      {"beta", fmt(setting.beta)},
                      {"adaptive", args.adaptive ? "true" : "false"}};
  RunManifest manifest{"eval", config_hash(key), 0, "csv " + args.data, "none", ""};
  const fs::path dir = make_run_dir(common, manifest);

  const EvalResult r = args.adaptive ? evaluate_adaptive(cp.model, data, setting.beta) : evaluate(cp.model, data, setting);
  write_predictions(dir / "predictions.csv", data, r);
  json j = eval_json(r);
  j["examples"] = data.size();
  j["labeled"] = data.labeled_count();
  j["weighting"] = args.adaptive ? "entropy-adaptive" : "fixed";
  j["inference"] = setting_json(setting);
  write_json(dir / "report.json", j);

  out << "accuracy " << show(r.combined_accuracy) << "\n"
      << "ce_head_accuracy " << show(r.ce_head_accuracy) << "\n"
      << "kd_head_accuracy " << show(r.kd_head_accuracy) << "\n"
      << "run directory " << dir.string() << "\n";
  return kOk;
}

int cmd_gridsearch(const EvalArgs& args, const CommonOptions& common, std::ostream& out) {
  const std::string checkpoint_text = read_file(args.checkpoint);
  Checkpoint cp = parse_checkpoint(checkpoint_text);
  const Dataset data = load_for(cp.model, args.data, SplitTag::kVal);
  const auto alphas = args.alphas.empty() ? default_alpha_grid() : args.alphas;
  const auto betas = args.betas.empty() ? default_beta_grid() : args.betas;

  std::string grid_key;
  for (double a : alphas) grid_key += fmt(a) + ",";
  grid_key += ";";
  for (double b : betas) grid_key += fmt(b) + ",";
  const ConfigMap key{{"checkpoint", hex_digest(checkpoint_text)},
                      {"data", hex_digest(read_file(args.data))},
                      {"grid", grid_key}};
  RunManifest manifest{"gridsearch", config_hash(key), 0, "csv " + args.data, "none", ""};
  const fs::path dir = make_run_dir(common, manifest);

  const GridSearchResult result = grid_search(cp.model, data, alphas, betas);
  write_grid_csv(dir / "grid.csv", result);
  write_json(dir / "summary.json", {{"best", setting_json(result.best)},
                                    {"alphas", result.alphas},
                                    {"betas", result.betas},
                                    {"grid", "grid.csv"}});
  out << "best alpha " << show(result.best.alpha) << " beta " << show(result.best.beta) << " accuracy "
      << show(result.best.validation_accuracy.value_or(0.0)) << "\n"
      << "run directory " << dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- conflict-report

struct ReportArgs {
  std::string sho;
  std::string dho;
};

int cmd_conflict_report(const ReportArgs& args, const CommonOptions& common, std::ostream& out, std::ostream& err) {
  const fs::path sho_path = fs::path(args.sho) / "conflict_trace.csv";
  const fs::path dho_path = fs::path(args.dho) / "conflict_trace.csv";
  const ConflictTrace sho = read_conflict_trace(sho_path);
  const ConflictTrace dho = read_conflict_trace(dho_path);
  if (sho.mode != HeadMode::kSho) throw ConfigError(args.sho + " does not hold an SHO trace");
  if (dho.mode != HeadMode::kDho) throw ConfigError(args.dho + " does not hold a DHO trace");

  const std::size_t n = std::min(sho.samples.size(), dho.samples.size());
  if (sho.samples.size() != dho.samples.size()) {
    err << "warning: trace lengths differ (" << sho.samples.size() << " vs " << dho.samples.size()
        << "); aligning on the first " << n << " steps\n";
  }
  auto column = [n](const ConflictTrace& t, auto field) {
    std::vector<std::optional<double>> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(field(t.samples[i]));
    return smooth_series(v);
  };
  const auto head = [](const ConflictSample& s) { return s.cossim_head; };
  const auto theta = [](const ConflictSample& s) { return s.cossim_theta; };
  const auto inner = [](const ConflictSample& s) { return std::optional<double>(s.inner_product); };
  const auto sho_head = column(sho, head);
  const auto sho_theta = column(sho, theta);
  const auto dho_theta = column(dho, theta);
  const auto sho_inner = column(sho, inner);
  const auto dho_inner = column(dho, inner);

  const ConfigMap key{{"sho", hex_digest(read_file(sho_path))}, {"dho", hex_digest(read_file(dho_path))}};
  RunManifest manifest{"conflict-report", config_hash(key), 0, args.sho + " | " + args.dho, "none", ""};
  const fs::path dir = make_run_dir(common, manifest);

  std::ofstream csv(dir / "comparison.csv", std::ios::binary);
  csv << "step,sho_cossim_head,sho_cossim_theta,dho_cossim_theta,sho_inner,dho_inner\n";
  std::optional<double> min_head;
  std::size_t compared = 0, dho_above = 0;
  for (std::size_t i = 0; i < n; ++i) {
    csv << sho.samples[i].step << ',' << cell(sho_head[i]) << ',' << cell(sho_theta[i]) << ',' << cell(dho_theta[i])
        << ',' << cell(sho_inner[i]) << ',' << cell(dho_inner[i]) << '\n';
    if (sho_head[i]) min_head = std::min(min_head.value_or(*sho_head[i]), *sho_head[i]);
    if (sho_theta[i] && dho_theta[i]) {
      ++compared;
      if (*dho_theta[i] > *sho_theta[i]) ++dho_above;
    }
  }
  json summary = {{"steps", n},
                  {"dho_theta_above_sho_fraction",
                   compared ? static_cast<double>(dho_above) / static_cast<double>(compared) : 0.0}};
  if (min_head) summary["min_sho_cossim_head"] = *min_head;
  write_json(dir / "summary.json", summary);
  out << "steps " << n << "\n";
  if (min_head) out << "min smoothed sho_cossim_head " << show(*min_head) << "\n";
  out << "run directory " << dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- verify-theory

struct TheoryArgs {
  double tolerance = 1e-9;
  bool quick = false;
  bool fault_injection = false;
};

int cmd_verify_theory(const TheoryArgs& args, const CommonOptions& common, std::ostream& out, std::ostream& err) {
  theory::TheorySuiteConfig config;
  config.tolerance = args.tolerance;
  config.seed = common.seed;
  if (args.quick) {
    config.optimum_configs = 20;
    config.optimum_perturbations = 1000;
    config.pinsker_trials = 1000;
    config.equivalence_trials = 1000;
    config.temperature_trials = 200;
  }
  if (args.fault_injection) config.rule = theory::MixtureRule::kNormalizedGeometric;

  const ConfigMap key{{"tolerance", fmt(args.tolerance)},
                      {"quick", args.quick ? "true" : "false"},
                      {"fault_injection", args.fault_injection ? "true" : "false"}};
  RunManifest manifest{"verify-theory", config_hash(key), 0, "random simplex draws", "none", ""};
  const fs::path dir = make_run_dir(common, manifest);

  const auto reports = theory::run_theory_suite(config);
  bool all_pass = true;
  json summary = json::array();
  for (const auto& r : reports) {
    json m = json::object();
    for (const auto& [name, value] : r.measurements) m[name] = value;
    const json j = {{"id", r.id},
                    {"trials", r.trials},
                    {"max_violation", r.max_violation},
                    {"tolerance", r.tolerance},
                    {"pass", r.pass},
                    {"measurements", m}};
    write_json(dir / (r.id + ".json"), j);
    summary.push_back({{"id", r.id}, {"pass", r.pass}});
    out << (r.pass ? "PASS " : "FAIL ") << r.id << " trials=" << r.trials << " max_violation=" << show(r.max_violation)
        << "\n";
    if (!r.pass) {
      all_pass = false;
      err << "violation: " << r.id << " exceeded tolerance " << show(r.tolerance) << " by "
          << show(r.max_violation - r.tolerance) << "\n";
    }
  }
  write_json(dir / "summary.json", summary);
  out << "run directory " << dir.string() << "\n";
  return all_pass ? kOk : kCheckFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-head knowledge distillation laboratory", "dholab"};
  app.require_subcommand(1);

  CommonOptions common;
  TrainArgs train_args;
  EvalArgs eval_args;
  EvalArgs grid_args;
  ReportArgs report_args;
  TheoryArgs theory_args;

  auto* train_cmd = app.add_subcommand("train", "Train a student and write checkpoint, report and conflict trace");
  train_cmd->add_option("--config", train_args.config, "INI config file");
  add_common(*train_cmd, common);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint with dual-head interpolation");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required();
  eval_cmd->add_option("--data", eval_args.data, "CSV dataset")->required();
  eval_cmd->add_option("--alpha", eval_args.alpha);
  eval_cmd->add_option("--beta", eval_args.beta);
  eval_cmd->add_flag("--adaptive", eval_args.adaptive, "Entropy-adaptive per-example alpha");
  add_common(*eval_cmd, common);

  auto* grid_cmd = app.add_subcommand("gridsearch", "Search (alpha, beta) on a validation set");
  grid_cmd->add_option("--checkpoint", grid_args.checkpoint)->required();
  grid_cmd->add_option("--data", grid_args.data, "CSV validation set")->required();
  grid_cmd->add_option("--alphas", grid_args.alphas)->delimiter(',');
  grid_cmd->add_option("--betas", grid_args.betas)->delimiter(',');
  add_common(*grid_cmd, common);

  auto* report_cmd = app.add_subcommand("conflict-report", "Merge SHO and DHO conflict traces for plotting");
  report_cmd->add_option("--sho", report_args.sho, "SHO run directory")->required();
  report_cmd->add_option("--dho", report_args.dho, "DHO run directory")->required();
  add_common(*report_cmd, common);

  auto* theory_cmd = app.add_subcommand("verify-theory", "Run the numerical theorem checks");
  theory_cmd->add_option("--tolerance", theory_args.tolerance);
  theory_cmd->add_flag("--quick", theory_args.quick, "Reduced trial counts");
  theory_cmd->add_flag("--fault-injection", theory_args.fault_injection,
                       "Test the normalized geometric mixture instead of the weighted mean");
  add_common(*theory_cmd, common);

  // CLI11 consumes arguments from the back, without the program name.
  std::vector<std::string> reversed;
  for (std::size_t i = args.size(); i > 1; --i) reversed.push_back(args[i - 1]);
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, common, out, err);
    if (*eval_cmd) return cmd_eval(eval_args, common, out);
    if (*grid_cmd) return cmd_gridsearch(grid_args, common, out);
    if (*report_cmd) return cmd_conflict_report(report_args, common, out, err);
    return cmd_verify_theory(theory_args, common, out, err);
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  }
}

}  // namespace dho::cli
