#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "dho/inference.hpp"
#include "dho/model.hpp"
#include "dho/trainer.hpp"

namespace dho {

inline constexpr const char* kCheckpointFormat = "dho-checkpoint/1";

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  StudentModel model;
  InterpolationSetting inference;
  std::optional<OptimizerState> optimizer;
};

/// JSON text: layer shapes, row-major parameter arrays, head mode, inference (α, β) and
/// optionally the optimizer moments. Output is a pure function of the inputs.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dho
