#include "dho/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace dho {

using nlohmann::json;

namespace {

json matrix_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", std::vector<double>(m.flat().begin(), m.flat().end())}};
}

Matrix matrix_from(const json& j) {
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("values").get<std::vector<double>>());
}

json head_json(const Head& head) {
  if (const auto* lin = std::get_if<LinearHead>(&head)) {
    return {{"kind", "linear"}, {"weight", matrix_json(lin->weight)}, {"bias", lin->bias}};
  }
  const auto& cos_head = std::get<CosineHead>(head);
  return {{"kind", "cosine"}, {"weight", matrix_json(cos_head.weight)}, {"scale", cos_head.scale}};
}

Head head_from(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "linear") return LinearHead{matrix_from(j.at("weight")), j.at("bias").get<Vector>()};
  if (kind == "cosine") return CosineHead{matrix_from(j.at("weight")), j.at("scale").get<double>()};
  throw CheckpointError("unknown head kind '" + kind + "'");
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  const StudentModel& model = checkpoint.model;
  json layers = json::array();
  for (const auto& layer : model.extractor().layers()) {
    layers.push_back({{"weight", matrix_json(layer.weight)}, {"bias", layer.bias}});
  }
  json heads = json::array();
  for (const auto& h : model.heads()) heads.push_back(head_json(h));

  json j;
  j["format"] = kCheckpointFormat;
  j["mode"] = to_string(model.mode());
  j["extractor"] = std::move(layers);
  j["heads"] = std::move(heads);
  j["inference"] = {{"alpha", checkpoint.inference.alpha}, {"beta", checkpoint.inference.beta}};
  if (checkpoint.optimizer) {
    j["optimizer"] = {{"step", checkpoint.optimizer->step},
                      {"first_moment", checkpoint.optimizer->first_moment},
                      {"second_moment", checkpoint.optimizer->second_moment}};
  }
  return j.dump(1) + "\n";
}

Checkpoint parse_checkpoint(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != kCheckpointFormat) {
      throw CheckpointError("unsupported checkpoint format '" + j.at("format").get<std::string>() + "'");
    }
    std::vector<DenseLayer> layers;
    for (const auto& l : j.at("extractor")) layers.push_back({matrix_from(l.at("weight")), l.at("bias").get<Vector>()});
    FeatureExtractor extractor(std::move(layers));

    const HeadMode mode = head_mode_from_string(j.at("mode").get<std::string>());
    const auto& heads = j.at("heads");
    const std::size_t expected = mode == HeadMode::kSho ? 1 : 2;
    if (heads.size() != expected) throw CheckpointError("head count does not match mode");
    Head ce = head_from(heads.at(0));
    if (!std::holds_alternative<LinearHead>(ce)) throw CheckpointError("CE head must be linear");

    std::optional<StudentModel> model;
    if (mode == HeadMode::kSho) {
      model.emplace(std::move(extractor), std::get<LinearHead>(std::move(ce)));
    } else {
      model.emplace(std::move(extractor), std::get<LinearHead>(std::move(ce)), head_from(heads.at(1)));
    }

    InterpolationSetting setting{j.at("inference").at("alpha").get<double>(), j.at("inference").at("beta").get<double>(),
                                 {}};
    setting.validate();
    Checkpoint cp{std::move(*model), setting, std::nullopt};
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      cp.optimizer = OptimizerState{o.at("step").get<std::size_t>(), o.at("first_moment").get<std::vector<Vector>>(),
                                    o.at("second_moment").get<std::vector<Vector>>()};
    }
    return cp;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw CheckpointError(std::string("inconsistent checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out << serialize_checkpoint(checkpoint);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace dho
