#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dho/data.hpp"
#include "dho/model.hpp"
#include "dho/trainer.hpp"

namespace dho {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DataSource { kMixture, kCsv };
enum class TeacherSource { kOracle, kFile };
enum class InitScheme { kRandom, kLanguage };

struct DataConfig {
  DataSource source = DataSource::kMixture;
  MixtureParams mixture{4, 16, 100, 5.0, 1.0};
  std::size_t val_per_class = 50;
  std::size_t test_per_class = 200;
  std::string train_csv, val_csv, test_csv;
  std::size_t csv_feature_dim = 0;
  std::optional<std::size_t> csv_num_classes;
  /// K-shot split when set, otherwise label_fraction.
  std::optional<std::size_t> shots{2};
  std::optional<double> label_fraction;
  /// Carve a validation set from the labeled split when none is supplied.
  bool carve_validation = false;
  bool normalize = false;
};

struct TeacherConfig {
  TeacherSource source = TeacherSource::kOracle;
  double temperature = 0.01;
  double logit_noise = 0.0;
  double corruption = 0.3;
  std::string file;
};

struct ModelConfig {
  HeadMode mode = HeadMode::kDho;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t feature_dim = 32;
  bool cosine_kd_head = false;
  InitScheme init = InitScheme::kRandom;
  /// C × d matrix CSV for language-aware init; "prototypes" derives it from the teacher prototypes.
  std::string embeddings;
};

struct InferenceConfig {
  std::optional<double> alpha;
  std::optional<double> beta;
};

/// Fully resolved configuration of a training run.
struct RunConfig {
  DataConfig data;
  TeacherConfig teacher;
  ModelConfig model;
  TrainConfig train;
  InferenceConfig inference;
};

/// Flat "section.key" → value view used for files, overrides and hashing.
using ConfigMap = std::map<std::string, std::string>;

/// Parses INI-style text ("[section]" headers, "key = value" lines, '#' or ';' comments).
ConfigMap parse_config_text(const std::string& text);
ConfigMap load_config_file(const std::filesystem::path& path);

/// Applies "section.key=value" overrides; an override with no '=' is a ConfigError.
void apply_overrides(ConfigMap& map, const std::vector<std::string>& overrides);

/// Interprets a map on top of defaults. Unknown keys and malformed values raise ConfigError.
RunConfig resolve_config(const ConfigMap& map);

/// Every field of a resolved config as a map, so equal configs yield equal canonical text.
ConfigMap to_map(const RunConfig& config);
/// Sorted INI text of `map`.
std::string canonical_text(const ConfigMap& map);
/// 16 hex digits of FNV-1a over canonical_text.
std::string config_hash(const ConfigMap& map);

}  // namespace dho
