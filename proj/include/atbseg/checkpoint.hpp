#pragma once

#include <array>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "atbseg/model.hpp"

namespace atbseg {

inline constexpr int kCheckpointSchemaVersion = 1;

struct CheckpointMeta {
  int epoch = 0;
  double val_loss = 0.0;
  std::array<double, 3> val_dice{};
  nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json model_config_to_json(const ModelConfig& config);
/// Missing fields take ModelConfig defaults; throws ConfigError on bad values.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// 16 hex digits of FNV-1a over the canonical JSON form of the config.
std::string config_hash(const ModelConfig& config);
std::string fnv1a_hex(std::string_view bytes);

/// Writes `<stem>.bin` (weights) and `<stem>.json` (sidecar) atomically.
/// Returns the sidecar path.
std::filesystem::path save_checkpoint(const SegModel& model, const CheckpointMeta& meta,
                                      const std::filesystem::path& stem);

struct LoadedCheckpoint {
  SegModel model;
  CheckpointMeta meta;
};

/// Reads a sidecar and its weights; rejects a config hash that does not match
/// the recorded config or a weights blob of the wrong size.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& sidecar);

}  // namespace atbseg
