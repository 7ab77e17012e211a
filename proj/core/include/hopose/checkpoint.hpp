#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "hopose/params.hpp"

namespace hopose {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointHeader {
  int format_version = kCheckpointVersion;
  /// "backbone", "interaction" or "baseline".
  std::string kind;
  std::string config_hash;
  std::string model_hash;
  int epoch = 0;
  std::uint64_t seed = 0;
  /// SHA-256 of the frozen backbone checkpoint file (interaction checkpoints only).
  std::string backbone_hash;
  /// Canonical config text of the producing run.
  std::string config_text;
};

struct Checkpoint {
  CheckpointHeader header;
  ParamSet params;
};

/// "HOCK", uint32 version, uint64 header length, JSON header (including the
/// tensor names and shapes), then every tensor as little-endian float32 in
/// header order.
void write_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header, const ParamSet& params);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Rounds every value through float32, matching what a checkpoint stores.
void round_to_float32(ParamSet& params);

}  // namespace hopose
