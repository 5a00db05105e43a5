#include "dho/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/algorithm/string/trim.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "dho/rng.hpp"

namespace dho {

ConfigMap parse_config_text(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  ConfigMap map;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config key '" + section + "' must live inside a [section]");
    for (const auto& [key, value] : body) map[section + "." + key] = value.get_value<std::string>();
  }
  return map;
}

ConfigMap load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void apply_overrides(ConfigMap& map, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0 || o.find('.') > eq) {
      throw ConfigError("override '" + o + "' must look like section.key=value");
    }
    map[o.substr(0, eq)] = o.substr(eq + 1);
  }
}

namespace {

class Reader {
 public:
  explicit Reader(const ConfigMap& map) : map_(map) {}

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    const auto it = map_.find(key);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

  void real(const std::string& key, double& out) {
    if (auto v = raw(key)) out = parse_real(key, *v);
  }
  void opt_real(const std::string& key, std::optional<double>& out) {
    if (auto v = raw(key)) out = v->empty() ? std::nullopt : std::optional<double>(parse_real(key, *v));
  }
  void count(const std::string& key, std::size_t& out) {
    if (auto v = raw(key)) out = parse_count(key, *v);
  }
  void opt_count(const std::string& key, std::optional<std::size_t>& out) {
    if (auto v = raw(key)) out = v->empty() ? std::nullopt : std::optional<std::size_t>(parse_count(key, *v));
  }
  void text(const std::string& key, std::string& out) {
    if (auto v = raw(key)) out = *v;
  }
  void flag(const std::string& key, bool& out) {
    if (auto v = raw(key)) {
      if (*v == "true" || *v == "1" || *v == "yes") {
        out = true;
      } else if (*v == "false" || *v == "0" || *v == "no") {
        out = false;
      } else {
        throw ConfigError(key + ": expected a boolean, got '" + *v + "'");
      }
    }
  }
  void count_list(const std::string& key, std::vector<std::size_t>& out) {
    if (auto v = raw(key)) {
      out.clear();
      std::stringstream ss(*v);
      std::string item;
      while (std::getline(ss, item, ',')) {
        boost::algorithm::trim(item);
        if (!item.empty()) out.push_back(parse_count(key, item));
      }
    }
  }

  void reject_unknown() const {
    for (const auto& [key, value] : map_) {
      if (!used_.count(key)) throw ConfigError("unknown config key '" + key + "'");
    }
  }

 private:
  static double parse_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return out;
  }
  static std::size_t parse_count(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
      throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
    return out;
  }

  const ConfigMap& map_;
  std::set<std::string> used_;
};

std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

RunConfig resolve_config(const ConfigMap& map) {
  RunConfig c;
  Reader r(map);

  if (auto v = r.raw("data.source")) {
    if (*v == "mixture") {
      c.data.source = DataSource::kMixture;
    } else if (*v == "csv") {
      c.data.source = DataSource::kCsv;
    } else {
      throw ConfigError("data.source must be 'mixture' or 'csv'");
    }
  }
  r.count("data.classes", c.data.mixture.num_classes);
  r.count("data.feature_dim", c.data.mixture.feature_dim);
  r.count("data.train_per_class", c.data.mixture.per_class);
  r.count("data.val_per_class", c.data.val_per_class);
  r.count("data.test_per_class", c.data.test_per_class);
  r.real("data.separation", c.data.mixture.separation);
  r.real("data.noise", c.data.mixture.noise);
  r.text("data.train_csv", c.data.train_csv);
  r.text("data.val_csv", c.data.val_csv);
  r.text("data.test_csv", c.data.test_csv);
  r.count("data.csv_feature_dim", c.data.csv_feature_dim);
  r.opt_count("data.csv_num_classes", c.data.csv_num_classes);
  r.opt_count("data.shots", c.data.shots);
  r.opt_real("data.label_fraction", c.data.label_fraction);
  if (c.data.label_fraction && !map.count("data.shots")) c.data.shots.reset();
  r.flag("data.carve_validation", c.data.carve_validation);
  r.flag("data.normalize", c.data.normalize);

  if (auto v = r.raw("teacher.source")) {
    if (*v == "oracle") {
      c.teacher.source = TeacherSource::kOracle;
    } else if (*v == "file") {
      c.teacher.source = TeacherSource::kFile;
    } else {
      throw ConfigError("teacher.source must be 'oracle' or 'file'");
    }
  }
  r.real("teacher.temperature", c.teacher.temperature);
  r.real("teacher.logit_noise", c.teacher.logit_noise);
  r.real("teacher.corruption", c.teacher.corruption);
  r.text("teacher.file", c.teacher.file);

  if (auto v = r.raw("model.mode")) {
    try {
      c.model.mode = head_mode_from_string(*v);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("model.mode: ") + e.what());
    }
  }
  r.count_list("model.hidden", c.model.hidden);
  r.count("model.feature_dim", c.model.feature_dim);
  if (auto v = r.raw("model.kd_head")) {
    if (*v != "linear" && *v != "cosine") throw ConfigError("model.kd_head must be 'linear' or 'cosine'");
    c.model.cosine_kd_head = *v == "cosine";
  }
  if (auto v = r.raw("model.init")) {
    if (*v != "random" && *v != "language") throw ConfigError("model.init must be 'random' or 'language'");
    c.model.init = *v == "language" ? InitScheme::kLanguage : InitScheme::kRandom;
  }
  r.text("model.embeddings", c.model.embeddings);

  auto& t = c.train;
  r.real("train.lambda", t.lambda);
  r.real("train.eta", t.eta);
  r.count("train.epochs", t.epochs);
  r.count("train.batch_labeled", t.batch_labeled);
  r.count("train.batch_unlabeled", t.batch_unlabeled);
  r.real("train.learning_rate", t.learning_rate);
  r.real("train.weight_decay", t.weight_decay);
  r.flag("train.cosine_decay", t.cosine_decay);
  r.count("train.warmup_steps", t.warmup_steps);
  if (auto v = r.raw("train.optimizer")) {
    try {
      t.optimizer = optimizer_from_string(*v);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("train.optimizer: ") + e.what());
    }
  }
  r.real("train.beta1", t.beta1);
  r.real("train.beta2", t.beta2);
  r.real("train.feature_jitter", t.feature_jitter);
  t.teacher_temperature = c.teacher.temperature;

  r.opt_real("inference.alpha", c.inference.alpha);
  r.opt_real("inference.beta", c.inference.beta);
  r.reject_unknown();

  try {
    t.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  if (c.teacher.corruption < 0.0 || c.teacher.corruption > 1.0) throw ConfigError("teacher.corruption must be in [0,1]");
  if (!(c.teacher.temperature > 0.0)) throw ConfigError("teacher.temperature must be positive");
  if (!c.data.shots && !c.data.label_fraction) throw ConfigError("set data.shots or data.label_fraction");
  if (c.data.source == DataSource::kCsv && c.data.train_csv.empty()) throw ConfigError("data.train_csv is required");
  if (c.teacher.source == TeacherSource::kFile && c.teacher.file.empty()) throw ConfigError("teacher.file is required");
  if (c.model.init == InitScheme::kLanguage && c.model.embeddings.empty()) {
    throw ConfigError("model.embeddings is required for language-aware init");
  }
  if (c.model.mode == HeadMode::kSho && c.model.cosine_kd_head) throw ConfigError("SHO mode needs a linear head");
  return c;
}

ConfigMap to_map(const RunConfig& c) {
  ConfigMap m;
  m["data.source"] = c.data.source == DataSource::kMixture ? "mixture" : "csv";
  m["data.classes"] = std::to_string(c.data.mixture.num_classes);
  m["data.feature_dim"] = std::to_string(c.data.mixture.feature_dim);
  m["data.train_per_class"] = std::to_string(c.data.mixture.per_class);
  m["data.val_per_class"] = std::to_string(c.data.val_per_class);
  m["data.test_per_class"] = std::to_string(c.data.test_per_class);
  m["data.separation"] = fmt_real(c.data.mixture.separation);
  m["data.noise"] = fmt_real(c.data.mixture.noise);
  m["data.train_csv"] = c.data.train_csv;
  m["data.val_csv"] = c.data.val_csv;
  m["data.test_csv"] = c.data.test_csv;
  m["data.csv_feature_dim"] = std::to_string(c.data.csv_feature_dim);
  m["data.csv_num_classes"] = c.data.csv_num_classes ? std::to_string(*c.data.csv_num_classes) : "";
  m["data.shots"] = c.data.shots ? std::to_string(*c.data.shots) : "";
  m["data.label_fraction"] = c.data.label_fraction ? fmt_real(*c.data.label_fraction) : "";
  m["data.carve_validation"] = c.data.carve_validation ? "true" : "false";
  m["data.normalize"] = c.data.normalize ? "true" : "false";
  m["teacher.source"] = c.teacher.source == TeacherSource::kOracle ? "oracle" : "file";
  m["teacher.temperature"] = fmt_real(c.teacher.temperature);
  m["teacher.logit_noise"] = fmt_real(c.teacher.logit_noise);
  m["teacher.corruption"] = fmt_real(c.teacher.corruption);
  m["teacher.file"] = c.teacher.file;
  m["model.mode"] = to_string(c.model.mode);
  std::string hidden;
  for (std::size_t i = 0; i < c.model.hidden.size(); ++i) hidden += (i ? "," : "") + std::to_string(c.model.hidden[i]);
  m["model.hidden"] = hidden;
  m["model.feature_dim"] = std::to_string(c.model.feature_dim);
  m["model.kd_head"] = c.model.cosine_kd_head ? "cosine" : "linear";
  m["model.init"] = c.model.init == InitScheme::kLanguage ? "language" : "random";
  m["model.embeddings"] = c.model.embeddings;
  const auto& t = c.train;
  m["train.lambda"] = fmt_real(t.lambda);
  m["train.eta"] = fmt_real(t.eta);
  m["train.epochs"] = std::to_string(t.epochs);
  m["train.batch_labeled"] = std::to_string(t.batch_labeled);
  m["train.batch_unlabeled"] = std::to_string(t.batch_unlabeled);
  m["train.learning_rate"] = fmt_real(t.learning_rate);
  m["train.weight_decay"] = fmt_real(t.weight_decay);
  m["train.cosine_decay"] = t.cosine_decay ? "true" : "false";
  m["train.warmup_steps"] = std::to_string(t.warmup_steps);
  m["train.optimizer"] = to_string(t.optimizer);
  m["train.beta1"] = fmt_real(t.beta1);
  m["train.beta2"] = fmt_real(t.beta2);
  m["train.feature_jitter"] = fmt_real(t.feature_jitter);
  m["inference.alpha"] = c.inference.alpha ? fmt_real(*c.inference.alpha) : "";
  m["inference.beta"] = c.inference.beta ? fmt_real(*c.inference.beta) : "";
  return m;
}

std::string canonical_text(const ConfigMap& map) {
  std::string out;
  std::string section;
  for (const auto& [key, value] : map) {
    const auto dot = key.find('.');
    const std::string s = key.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out += '\n';
      out += "[" + s + "]\n";
      section = s;
    }
    out += key.substr(dot + 1) + " = " + value + "\n";
  }
  return out;
}

std::string config_hash(const ConfigMap& map) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_text(map))));
  return buf;
}

}  // namespace dho
