#pragma once

#include <filesystem>

#include "symspot/model.hpp"
#include "symspot/training.hpp"

namespace symspot {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model;
  Ablation ablation;
  TrainState state;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Throws VersionMismatch for an unknown version and ParseError for missing
/// or misshapen tensors.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// As load_checkpoint, but throws ConfigError unless the stored model and
/// ablation equal the expected ones.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected_model,
                           const Ablation& expected_ablation);

}  // namespace symspot
