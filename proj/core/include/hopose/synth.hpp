#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "hopose/codec.hpp"
#include "hopose/raster.hpp"
#include "hopose/scene.hpp"

namespace hopose {

/// Synthetic verbs; action ids map onto these families modulo 4.
enum class Verb { Approach = 0, Retract = 1, Rotate = 2, Shake = 3 };

struct SynthConfig {
  GridSpec grid;
  CameraIntrinsics camera;
  LabelSpec labels;
  int image_channels = 3;
  /// Root joints and object centroids are drawn with depth uniform in [depth_lo, depth_hi].
  double depth_lo = 0.4;
  double depth_hi = 0.7;
  /// Minimum distance (pixels) between a root/centroid projection and the image border.
  double pixel_margin = 8.0;
  double hand_rotation_deg = 30.0;
  double object_rotation_deg = 180.0;
  double joint_jitter_deg = 8.0;
  double joint_sigma_px = 1.5;
  double line_sigma_px = 0.8;
  int sequence_length = 8;
  /// Per object class cuboid half-extents (meters); cycled if shorter than N_o.
  std::vector<Vec3> object_extents = {Vec3(0.05, 0.02, 0.02), Vec3(0.035, 0.035, 0.035), Vec3(0.06, 0.04, 0.012)};
  double extent_jitter = 0.1;

  void validate() const;
};

/// Parametric 21-joint hand: wrist, then per finger (thumb, index, middle,
/// ring, pinky) MCP, PIP, DIP, TIP.
struct HandPose {
  Vec3 root = Vec3(0, 0, 0.5);
  Mat3 rotation = Mat3::Identity();
  /// Base flexion (radians) applied to every finger segment.
  double curl = 0.3;
  /// Per finger, per segment flexion jitter and per finger abduction jitter (radians).
  std::array<std::array<double, 3>, 5> flex_jitter{};
  std::array<double, 5> spread_jitter{};
};

ControlPointSet hand_joints(const HandPose& pose);
/// Bones as (parent, child) joint pairs.
const std::array<std::pair<int, int>, 20>& hand_bones();

/// Flexion associated with an action id; hand posture carries the verb in single frames.
double action_curl(int action, int num_actions);

SceneFrame sample_scene(std::uint64_t seed, const SynthConfig& cfg);

struct RenderInput {
  std::vector<Vec3> joints;
  std::vector<std::pair<int, int>> bones;
  std::vector<std::array<Vec3, 2>> edges;
  /// Orientation markers (the first box corner), which break the box's symmetry.
  std::vector<Vec3> markers;
};

RenderInput render_input(const SceneFrame& scene);

/// Gaussian blobs at projected joints and thin lines along bones in the hand
/// channel, cuboid edges and a corner marker in the object channel. Intensity falls off linearly
/// with depth across the grid's depth range (depth cueing); the third channel
/// holds the unshaded union. Grayscale rasters merge everything.
Raster render(const RenderInput& input, const CameraIntrinsics& k, const SynthConfig& cfg);
Raster render(const SceneFrame& scene, const SynthConfig& cfg);

FrameSequence sample_sequence(std::uint64_t seed, int action, int object_class, const SynthConfig& cfg);

/// Shifts the raster by whole pixels and moves every labelled point so its
/// projection shifts by the same amount at unchanged depth. The object pose is
/// refit to the shifted box points. Returns false (and leaves `out` untouched)
/// if the root or centroid would leave the grid volume.
bool translate_frame(const SceneFrame& in, int du, int dv, const SynthConfig& cfg, SceneFrame& out);

/// Random exposure/saturation scaling in [1/(1+a), 1+a] and hue rotation of up to a/5 turn.
void photometric_jitter(Raster& raster, double amount, std::mt19937_64& rng);

/// One record per line: frame id, sequence id, action, object, 63 hand values,
/// 9 rotation + 3 translation values, 3 half-extents, raster path (relative to the file).
void write_frames(const std::filesystem::path& file, std::span<const SceneFrame> frames);
std::vector<SceneFrame> read_frames(const std::filesystem::path& file, bool load_rasters = true);

/// Groups frames by sequence id (file order within a sequence).
std::vector<FrameSequence> group_sequences(std::span<const SceneFrame> frames, const LabelSpec& labels);

}  // namespace hopose
