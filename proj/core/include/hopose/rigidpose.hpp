#pragma once

#include <span>

#include "hopose/geometry.hpp"

namespace hopose {

/// Rigid transform from an object reference frame into the camera frame.
struct Pose6D {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return R * p + t; }
  Pose6D inverse() const { return {R.transpose(), -R.transpose() * t}; }
  /// (*this) after `rhs`.
  Pose6D compose(const Pose6D& rhs) const { return {R * rhs.R, R * rhs.t + t}; }
};

struct AlignOptions {
  /// Use only the first 8 points (cuboid corners) instead of all of them.
  bool corners_only = false;
};

/// Least-squares rigid alignment: argmin over (R, t) of sum |R src_i + t - dst_i|^2.
/// Kabsch solution with reflection correction; det(R) is always +1.
Pose6D procrustes_align(std::span<const Vec3> src, std::span<const Vec3> dst, const AlignOptions& opts = {});
Pose6D procrustes_align(const ControlPointSet& src, const ControlPointSet& dst, const AlignOptions& opts = {});

/// Sum of squared residuals of `pose` mapping src onto dst.
double alignment_residual(const Pose6D& pose, std::span<const Vec3> src, std::span<const Vec3> dst);

/// Direct linear transform pose from >= 6 pixel/model correspondences,
/// rotation block orthonormalized. Baseline for 2D-to-3D correspondence pose.
Pose6D pnp_dlt(std::span<const Pixel2> pixels, std::span<const Vec3> src, const CameraIntrinsics& k);

ControlPointSet transform_points(const Pose6D& pose, const ControlPointSet& pts);

/// Geodesic angle (radians) between two rotations.
double rotation_angle_between(const Mat3& a, const Mat3& b);

Mat3 rotation_from_axis_angle(const Vec3& axis, double angle);

}  // namespace hopose
