#pragma once

// Single-file checkpoint: 8-byte magic, u32 version, u64 header length, a JSON
// header (configs, vocabularies, tensor directory, optimizer and rng state,
// metric history), then the tensors as little-endian doubles.

#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>

#include "openrel/model/model.hpp"
#include "openrel/train/trainer.hpp"

namespace openrel::train {

inline constexpr char kCheckpointMagic[8] = {'O', 'R', 'E', 'L', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct LoadedCheckpoint {
  std::unique_ptr<Model> model;
  TrainConfig train_config;
  TrainState state;
  nlohmann::json header;
};

void save_checkpoint(const std::filesystem::path& path, const Model& model, const TrainConfig& config,
                     const TrainState& state);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const EpochStats& s);

}  // namespace openrel::train
