#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string_view>

#include "hstf/net/model.hpp"

namespace hstf::net {

inline constexpr std::string_view kCheckpointSchema = "hstf-ckpt/v1";

struct CheckpointMeta {
  int epochs = 0;
  int best_epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_f1 = 0.0;
  uint64_t seed = 0;

  nlohmann::json to_json() const;
  static CheckpointMeta from_json(const nlohmann::json& j);
};

struct Checkpoint {
  Model<float> model;
  CheckpointMeta meta;
};

/// JSON document with every parameter inline.
nlohmann::json checkpoint_to_json(const Model<float>& model, const CheckpointMeta& meta);
Checkpoint checkpoint_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

/// Writes the checkpoint to `path`. With `sidecar` the parameter values go
/// to `<path>.bin` (little-endian f32) and the JSON keeps offsets only.
void save_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                     const CheckpointMeta& meta, bool sidecar = false);

/// Throws Error(kCheckpoint) on unreadable files, schema violations, or
/// parameter names/shapes that disagree with the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hstf::net
