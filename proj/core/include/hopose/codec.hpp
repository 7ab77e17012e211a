#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hopose/geometry.hpp"
#include "hopose/scene.hpp"

namespace hopose {

struct LabelSpec {
  int num_control_points = static_cast<int>(kNumControlPoints);
  int num_actions = 10;
  int num_objects = 4;
  int num_interactions = 40;

  void validate() const;

  std::size_t pose_size() const { return 3 * static_cast<std::size_t>(num_control_points); }
  /// 3 * N_c + N_a + 1
  std::size_t hand_slot_size() const { return pose_size() + num_actions + 1; }
  /// 3 * N_c + N_o + 1
  std::size_t object_slot_size() const { return pose_size() + num_objects + 1; }
  std::size_t cell_size() const { return hand_slot_size() + object_slot_size(); }

  /// (verb, noun) pair index: action * N_o + object.
  int interaction_index(int action, int object_class) const;
};

/// Channel layout of one slot inside a cell vector.
struct SlotLayout {
  std::size_t offset = 0;      // first channel of the slot within the cell
  std::size_t num_probs = 0;   // N_a for the hand slot, N_o for the object slot
  std::size_t root_point = 0;  // control point decoded through a sigmoid

  std::size_t pose(std::size_t point, std::size_t axis) const { return offset + 3 * point + axis; }
  std::size_t prob(std::size_t cls) const { return offset + 3 * kNumControlPoints + cls; }
  std::size_t confidence() const { return offset + 3 * kNumControlPoints + num_probs; }
};

SlotLayout hand_layout(const LabelSpec& labels);
SlotLayout object_layout(const LabelSpec& labels);

struct CellIndex {
  int u = 0;
  int v = 0;
  int z = 0;

  /// Row-major with u outermost: (u * H + v) * D + z.
  std::size_t linear(const GridSpec& grid) const;
  static CellIndex from_linear(std::size_t index, const GridSpec& grid);
  bool operator==(const CellIndex&) const = default;
};

/// H x W x D grid of cell vectors stored flat in (u, v, z, slot, channel) order.
/// Used both for network outputs (raw, pre-activation) and for targets.
class GridTensor {
 public:
  GridTensor() = default;
  GridTensor(const GridSpec& grid, const LabelSpec& labels);

  const GridSpec& grid() const { return grid_; }
  const LabelSpec& labels() const { return labels_; }

  std::span<double> cell(const CellIndex& c);
  std::span<const double> cell(const CellIndex& c) const;
  std::span<double> cell(std::size_t linear);
  std::span<const double> cell(std::size_t linear) const;

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

 private:
  GridSpec grid_;
  LabelSpec labels_;
  std::vector<double> values_;
};

using RawGridOutput = GridTensor;

/// Target grid: pose offsets relative to the responsible cell's corner (grid
/// units), one-hot class vectors and confidence targets.
struct TargetTensor : GridTensor {
  using GridTensor::GridTensor;

  std::optional<CellIndex> hand_cell;
  std::optional<CellIndex> object_cell;

  bool hand_responsible(const CellIndex& c) const { return hand_cell && *hand_cell == c; }
  bool object_responsible(const CellIndex& c) const { return object_cell && *object_cell == c; }
};

struct DecodedSlot {
  ControlPointSet points;
  std::array<GridCoordinate, kNumControlPoints> grid_points{};
  std::vector<double> probs;
  double confidence = 0.0;

  int argmax_class() const;
};

struct DecodedCell {
  CellIndex cell;
  DecodedSlot hand;
  DecodedSlot object;
};

struct FramePrediction {
  CellIndex hand_cell;
  CellIndex object_cell;
  DecodedSlot hand;
  DecodedSlot object;

  int action() const { return hand.argmax_class(); }
  int object_class() const { return object.argmax_class(); }
  int interaction(const LabelSpec& labels) const { return labels.interaction_index(action(), object_class()); }
};

TargetTensor encode_labels(const ControlPointSet& hand, const ControlPointSet& object, int action, int object_class,
                           const GridSpec& grid, const LabelSpec& labels, const CameraIntrinsics& k);
TargetTensor encode_frame(const SceneFrame& scene, const GridSpec& grid, const LabelSpec& labels,
                          const CameraIntrinsics& k);

/// Applies the output activations (sigmoid root offsets, identity elsewhere,
/// softmax class logits, sigmoid confidence) and back-projects every point.
DecodedCell decode_cell(std::span<const double> raw, const CellIndex& cell, const GridSpec& grid,
                        const LabelSpec& labels, const CameraIntrinsics& k);
std::vector<DecodedCell> decode_grid(const RawGridOutput& raw, const CameraIntrinsics& k);

/// Reads target values directly (no activations).
DecodedCell decode_target_cell(std::span<const double> target, const CellIndex& cell, const GridSpec& grid,
                               const LabelSpec& labels, const CameraIntrinsics& k);

/// Ground truth as a prediction: responsible cells of a target, decoded.
FramePrediction prediction_from_target(const TargetTensor& target, const CameraIntrinsics& k);

/// Inverse of the output activations, mapping target values to raw logits.
/// Logits are clamped to +-60 so one-hot zeros stay finite.
RawGridOutput target_to_raw(const TargetTensor& target);

/// Highest confidence hand and object slots; ties go to the lowest linear index.
FramePrediction prune(std::span<const DecodedCell> decoded);

/// (exp(alpha (1 - d / d_th)) - 1) / (exp(alpha) - 1) for d < d_th, else 0.
double confidence_component(double distance, double threshold, double alpha);

/// 0.5 * c_uv(mean pixel distance) + 0.5 * c_z(mean metric depth distance).
double confidence_target(const ControlPointSet& pred, const ControlPointSet& gt, const GridSpec& grid,
                         const CameraIntrinsics& k);
/// Same law evaluated on grid coordinates; defined for any predicted depth.
double confidence_target_grid(std::span<const GridCoordinate> pred, std::span<const GridCoordinate> gt,
                              const GridSpec& grid);

enum class TensorKind { Target, Raw };

/// Little-endian float32 blob plus a JSON sidecar at `path` + ".json".
void write_grid_tensor(const std::filesystem::path& path, const GridTensor& tensor, TensorKind kind,
                       const CameraIntrinsics& k, const TargetTensor* responsibility = nullptr);

struct LoadedGridTensor {
  TargetTensor tensor;
  TensorKind kind = TensorKind::Target;
  CameraIntrinsics camera;
};

LoadedGridTensor read_grid_tensor(const std::filesystem::path& path, const std::filesystem::path& sidecar);

}  // namespace hopose
