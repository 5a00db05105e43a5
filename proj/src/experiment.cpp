#include "dho/experiment.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace dho {

namespace {

Dataset scaled(const std::optional<FeatureScaler>& scaler, Dataset ds) {
  return scaler ? scaler->apply(ds) : ds;
}

std::string describe_mixture(const MixtureParams& m) {
  std::ostringstream out;
  out << "gaussian-mixture classes=" << m.num_classes << " dim=" << m.feature_dim << " per_class=" << m.per_class
      << " separation=" << m.separation << " noise=" << m.noise;
  return out.str();
}

}  // namespace

RunData prepare_data(const RunConfig& config, std::uint64_t seed) {
  const DataConfig& dc = config.data;
  std::optional<Dataset> train, validation, test;
  std::optional<Matrix> prototypes;
  std::string descriptor;

  if (dc.source == DataSource::kMixture) {
    GaussianMixture mix = generate_gaussian_mixture(dc.mixture, seed);
    train = std::move(mix.data);
    if (dc.val_per_class > 0) {
      validation = sample_mixture(mix.means, dc.val_per_class, dc.mixture.noise, seed, SplitTag::kVal);
    }
    if (dc.test_per_class > 0) {
      test = sample_mixture(mix.means, dc.test_per_class, dc.mixture.noise, seed, SplitTag::kTest);
    }
    prototypes = std::move(mix.means);
    descriptor = describe_mixture(dc.mixture);
  } else {
    CsvSchema schema{dc.csv_feature_dim, dc.csv_num_classes, "label"};
    train = load_csv_dataset(dc.train_csv, schema, SplitTag::kTrain);
    schema.feature_dim = train->feature_dim();
    schema.num_classes = train->num_classes();
    if (!dc.val_csv.empty()) validation = load_csv_dataset(dc.val_csv, schema, SplitTag::kVal);
    if (!dc.test_csv.empty()) test = load_csv_dataset(dc.test_csv, schema, SplitTag::kTest);
    descriptor = "csv " + dc.train_csv;
  }

  LabeledSplit split = dc.shots ? kshot_split(*train, *dc.shots, seed) : fraction_split(*train, *dc.label_fraction, seed);
  if (!validation && dc.carve_validation) {
    auto [reduced, carved] = carve_validation(*train, split, 0.2, seed);
    if (!carved.empty()) validation = subset(*train, carved, SplitTag::kVal);
    split = std::move(reduced);
  }

  // The teacher sees raw features; normalization only concerns the student.
  const TeacherConfig& tc = config.teacher;
  std::optional<TeacherPredictions> teacher;
  std::string teacher_descriptor;
  if (tc.source == TeacherSource::kOracle) {
    if (!prototypes) throw ConfigError("oracle teacher needs mixture data (class prototypes)");
    teacher = oracle_teacher_predict({*prototypes, tc.logit_noise, tc.temperature, tc.corruption}, *train, seed);
    std::ostringstream out;
    out << "oracle temperature=" << tc.temperature << " noise=" << tc.logit_noise << " corruption=" << tc.corruption;
    teacher_descriptor = out.str();
  } else {
    teacher = load_teacher_predictions(tc.file, *train, tc.temperature);
    teacher_descriptor = "file " + tc.file;
  }
  const double teacher_accuracy = measure_teacher_accuracy(*teacher, strip_labels(*train, split));

  std::optional<FeatureScaler> scaler;
  if (dc.normalize) {
    scaler = FeatureScaler::fit(*train);
    if (prototypes) {
      for (std::size_t c = 0; c < prototypes->rows(); ++c) {
        auto row = prototypes->row(c);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - scaler->mean()[j]) / scaler->scale()[j];
      }
    }
  }

  RunData data{scaled(scaler, std::move(*train)),
               std::move(split),
               std::nullopt,
               std::nullopt,
               std::move(*teacher),
               teacher_accuracy,
               std::move(prototypes),
               std::move(descriptor),
               std::move(teacher_descriptor)};
  if (validation) data.validation = scaled(scaler, std::move(*validation));
  if (test) data.test = scaled(scaler, std::move(*test));
  return data;
}

Matrix load_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<double> values;
  std::size_t rows = 0, cols = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (rows == 0 && values.empty()) continue;  // header
      throw ParseError(line_no, "non-numeric matrix entry");
    }
    if (cols == 0) cols = row.size();
    if (row.size() != cols) throw ParseError(line_no, "ragged matrix row");
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0) throw DataError(path + ": empty matrix");
  return Matrix(rows, cols, std::move(values));
}

Matrix class_embeddings(const RunConfig& config, const RunData& data, const FeatureExtractor& extractor) {
  if (config.model.embeddings != "prototypes") return load_matrix_csv(config.model.embeddings);
  if (!data.prototypes) throw ConfigError("model.embeddings = prototypes needs mixture data");
  const Matrix& protos = *data.prototypes;
  Matrix emb(protos.rows(), extractor.output_dim());
  for (std::size_t c = 0; c < protos.rows(); ++c) {
    const Vector z = extractor.forward(protos.row(c));
    std::copy(z.begin(), z.end(), emb.row(c).begin());
  }
  return emb;
}

StudentModel build_student(const RunConfig& config, const RunData& data, std::uint64_t seed) {
  const ModelConfig& mc = config.model;
  StudentModel model = make_student(data.train.feature_dim(), mc.hidden, mc.feature_dim, data.train.num_classes(),
                                    mc.mode, mc.cosine_kd_head, data.teacher.temperature());
  init_random(model, seed);
  if (mc.init == InitScheme::kLanguage) {
    const Matrix emb = class_embeddings(config, data, model.extractor());
    if (emb.rows() != model.num_classes() || emb.cols() != model.feature_dim()) {
      throw ConfigError("class embeddings must be " + std::to_string(model.num_classes()) + " x " +
                        std::to_string(model.feature_dim()));
    }
    init_language_aware(model, emb);
  }
  return model;
}

}  // namespace dho
