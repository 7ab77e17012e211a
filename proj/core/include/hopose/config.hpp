#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hopose/interaction.hpp"
#include "hopose/network.hpp"
#include "hopose/synth.hpp"

namespace hopose {

struct OptimConfig {
  double lr = 1e-4;
  int epochs = 200;
  std::vector<int> drop_epochs = {80, 160};
  double lr_factor = 0.1;
  int batch_size = 16;
  double momentum = 0.0;
  double clip_norm = 0.0;
};

struct AugmentConfig {
  /// Exposure/saturation/hue jitter amplitude (0.5 = 50%).
  double photometric = 0.5;
  /// Maximum translation as a fraction of the image size.
  double translation = 0.1;
};

struct Stage2Config {
  double lr = 0.05;
  int epochs = 60;
  std::vector<int> drop_epochs = {40};
  double lr_factor = 0.1;
  int batch_size = 16;
  double momentum = 0.9;
  double clip_norm = 5.0;
  /// Also train the plain recurrent baseline on the same inputs.
  bool train_baseline = true;
  /// Per-frame inputs: "predicted" (frozen backbone output) or "ground_truth".
  std::string inputs = "predicted";
  /// Extra training copies of each sequence, shifted as a whole by up to
  /// augment.translation of the image and re-predicted by the frozen backbone.
  int augment_copies = 0;
};

struct DataConfig {
  std::filesystem::path dir = "data";
  int train_frames = 500;
  int test_frames = 100;
  int train_sequences = 200;
  int test_sequences = 96;
};

/// Everything a run needs. Relative paths resolve against `base_dir`, the
/// directory of the config file.
struct RunConfig {
  std::string preset = "paper";
  std::uint64_t seed = 0;
  GridSpec grid;
  CameraIntrinsics camera{600.0, 600.0, 208.0, 208.0};
  LabelSpec labels;
  int image_channels = 3;
  BackboneConfig backbone;
  LossWeights loss;
  bool online_confidence = true;
  OptimConfig optim;
  AugmentConfig augment;
  SynthConfig synth;
  InteractionConfig interaction;
  Stage2Config stage2;
  DataConfig data;
  std::filesystem::path output_dir = "run";
  std::filesystem::path base_dir = ".";

  void validate() const;

  std::filesystem::path data_path() const;
  std::filesystem::path output_path() const;

  /// Derived module configs with the shared grid, camera and labels filled in.
  SynthConfig synth_config() const;
  NetworkConfig network_config() const;
  InteractionConfig interaction_config() const;
};

RunConfig preset_config(const std::string& name);

/// Flat `key = value` text, `#` comments. Unknown keys and malformed values
/// raise ConfigError. A `preset` key (if present) selects the defaults that
/// the remaining keys override.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& path);

/// Every key in sorted order with canonical number formatting.
std::map<std::string, std::string> config_entries(const RunConfig& cfg);
std::string canonical_config(const RunConfig& cfg);
void save_config(const std::filesystem::path& path, const RunConfig& cfg);

/// SHA-256 of the canonical text.
std::string config_hash(const RunConfig& cfg);
/// SHA-256 over the keys that fix the single-image network's shape and
/// geometry (grid, camera, labels, image, backbone).
std::string model_hash(const RunConfig& cfg);

std::string sha256_hex(const std::string& data);
std::string file_sha256(const std::filesystem::path& path);

}  // namespace hopose
