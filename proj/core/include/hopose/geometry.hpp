#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>

#include <Eigen/Core>

namespace hopose {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Number of control points per entity (hand joints or cuboid keypoints).
inline constexpr std::size_t kNumControlPoints = 21;
/// Hand root joint (wrist) index and cuboid centroid index.
inline constexpr std::size_t kHandRootIndex = 0;
inline constexpr std::size_t kObjectCentroidIndex = 20;

/// Pinhole camera without distortion.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  void validate() const;
  Mat3 matrix() const;
};

/// Grid discretization of the camera frustum. Cells are `cell_u` x `cell_v`
/// pixels in the image plane and `cell_z` meters in depth, starting at `z_min`.
struct GridSpec {
  int H = 13;  // rows (v axis)
  int W = 13;  // columns (u axis)
  int D = 5;   // depth bins
  double cell_u = 32.0;
  double cell_v = 32.0;
  double cell_z = 0.15;
  double z_min = 0.0;
  double alpha = 2.0;
  double dth_px = 75.0;
  double dth_m = 0.075;

  void validate() const;

  int image_width() const { return static_cast<int>(W * cell_u); }
  int image_height() const { return static_cast<int>(H * cell_v); }
  double z_max() const { return z_min + D * cell_z; }
  std::size_t num_cells() const { return static_cast<std::size_t>(H) * W * D; }
};

struct Pixel2 {
  double u = 0.0;
  double v = 0.0;
};

/// Continuous position in grid units (cells); integer part is the cell index.
struct GridCoordinate {
  double wu = 0.0;
  double wv = 0.0;
  double wz = 0.0;
};

/// Axis-aligned box centered at the origin of the object reference frame.
struct Cuboid {
  Vec3 half_extents = Vec3::Constant(0.5);

  void validate() const;
};

enum class PointRole { Hand, Object };

struct ControlPointSet {
  PointRole role = PointRole::Hand;
  std::array<Vec3, kNumControlPoints> points{};

  Vec3& operator[](std::size_t i) { return points[i]; }
  const Vec3& operator[](std::size_t i) const { return points[i]; }
  std::span<const Vec3> view() const { return points; }
};

Pixel2 project(const Vec3& p, const CameraIntrinsics& k);

/// Pixel position and metric depth expressed in grid units.
GridCoordinate to_grid(const Vec3& p, const CameraIntrinsics& k, const GridSpec& grid);

/// Camera-frame point from a grid coordinate:
/// z = wz * cell_z + z_min, then K^-1 [wu * cell_u, wv * cell_v, 1]^T scaled by z.
Vec3 backproject_grid(const GridCoordinate& g, const CameraIntrinsics& k, const GridSpec& grid);

/// The 12 cuboid edges as corner index pairs, in lexicographic order.
const std::array<std::pair<int, int>, 12>& cuboid_edges();

/// Corners in binary sign order: bit 2 -> x, bit 1 -> y, bit 0 -> z, 0 = negative.
std::array<Vec3, 8> cuboid_corners(const Cuboid& c);

/// 8 corners, then the 12 edge midpoints in `cuboid_edges()` order, then the centroid.
ControlPointSet control_points_from_corners(const std::array<Vec3, 8>& corners);
ControlPointSet cuboid_control_points(const Cuboid& c);

/// Metric cell diagonal at the middle of the depth range.
double cell_diagonal_m(const GridSpec& grid, const CameraIntrinsics& k);

}  // namespace hopose
