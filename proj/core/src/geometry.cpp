#include "hopose/geometry.hpp"

#include <cmath>
#include <string>

#include "hopose/error.hpp"

namespace hopose {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::OutOfVolume: return "OutOfVolume";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::RoleMismatch: return "RoleMismatch";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::WidthMismatch: return "WidthMismatch";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::EmptyModel: return "EmptyModel";
    case ErrorCode::ConfigOutOfRange: return "ConfigOutOfRange";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::HashMismatch: return "HashMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
  }
  return "Unknown";
}

bool Error::is_config_error() const noexcept {
  switch (code_) {
    case ErrorCode::ConfigOutOfRange:
    case ErrorCode::ConfigError:
    case ErrorCode::HashMismatch:
    case ErrorCode::IoError:
    case ErrorCode::MissingArtifact:
    case ErrorCode::ShapeMismatch:
      return true;
    default:
      return false;
  }
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(cx) || !std::isfinite(cy)) {
    throw Error(ErrorCode::ConfigOutOfRange, "camera intrinsics need fx > 0, fy > 0 and finite principal point");
  }
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 m;
  m << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return m;
}

void GridSpec::validate() const {
  if (H < 1 || W < 1 || D < 1) {
    throw Error(ErrorCode::ConfigOutOfRange, "grid cell counts must be >= 1");
  }
  if (!(cell_u > 0.0) || !(cell_v > 0.0) || !(cell_z > 0.0)) {
    throw Error(ErrorCode::ConfigOutOfRange, "grid cell sizes must be > 0");
  }
  if (!(dth_px > 0.0) || !(dth_m > 0.0) || !(alpha > 0.0)) {
    throw Error(ErrorCode::ConfigOutOfRange, "confidence parameters alpha, dth_px, dth_m must be > 0");
  }
  if (!std::isfinite(z_min)) {
    throw Error(ErrorCode::ConfigOutOfRange, "z_min must be finite");
  }
}

void Cuboid::validate() const {
  if (!(half_extents.array() > 0.0).all()) {
    throw Error(ErrorCode::ConfigOutOfRange, "cuboid half-extents must be > 0");
  }
}

Pixel2 project(const Vec3& p, const CameraIntrinsics& k) {
  if (!(p.z() > 0.0)) {
    throw Error(ErrorCode::NonPositiveDepth, "cannot project point with z = " + std::to_string(p.z()));
  }
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

GridCoordinate to_grid(const Vec3& p, const CameraIntrinsics& k, const GridSpec& grid) {
  const Pixel2 px = project(p, k);
  return {px.u / grid.cell_u, px.v / grid.cell_v, (p.z() - grid.z_min) / grid.cell_z};
}

Vec3 backproject_grid(const GridCoordinate& g, const CameraIntrinsics& k, const GridSpec& grid) {
  const double z = g.wz * grid.cell_z + grid.z_min;
  if (!(z > 0.0)) {
    throw Error(ErrorCode::NonPositiveDepth, "grid depth maps to z = " + std::to_string(z));
  }
  const double u = g.wu * grid.cell_u;
  const double v = g.wv * grid.cell_v;
  return {z * (u - k.cx) / k.fx, z * (v - k.cy) / k.fy, z};
}

const std::array<std::pair<int, int>, 12>& cuboid_edges() {
  static const std::array<std::pair<int, int>, 12> edges = [] {
    std::array<std::pair<int, int>, 12> out{};
    std::size_t n = 0;
    for (int a = 0; a < 8; ++a) {
      for (int b = a + 1; b < 8; ++b) {
        const int diff = a ^ b;
        if (diff == 1 || diff == 2 || diff == 4) out[n++] = {a, b};
      }
    }
    return out;
  }();
  return edges;
}

std::array<Vec3, 8> cuboid_corners(const Cuboid& c) {
  c.validate();
  std::array<Vec3, 8> corners;
  for (int i = 0; i < 8; ++i) {
    const double sx = (i & 4) ? 1.0 : -1.0;
    const double sy = (i & 2) ? 1.0 : -1.0;
    const double sz = (i & 1) ? 1.0 : -1.0;
    corners[i] = Vec3(sx * c.half_extents.x(), sy * c.half_extents.y(), sz * c.half_extents.z());
  }
  return corners;
}

ControlPointSet control_points_from_corners(const std::array<Vec3, 8>& corners) {
  ControlPointSet out;
  out.role = PointRole::Object;
  Vec3 sum = Vec3::Zero();
  for (std::size_t i = 0; i < 8; ++i) {
    out[i] = corners[i];
    sum += corners[i];
  }
  std::size_t n = 8;
  for (const auto& [a, b] : cuboid_edges()) {
    out[n++] = (corners[a] + corners[b]) / 2.0;
  }
  out[kObjectCentroidIndex] = sum / 8.0;
  return out;
}

ControlPointSet cuboid_control_points(const Cuboid& c) { return control_points_from_corners(cuboid_corners(c)); }

double cell_diagonal_m(const GridSpec& grid, const CameraIntrinsics& k) {
  const double z_mid = grid.z_min + 0.5 * grid.D * grid.cell_z;
  const double du = grid.cell_u * z_mid / k.fx;
  const double dv = grid.cell_v * z_mid / k.fy;
  return std::sqrt(du * du + dv * dv + grid.cell_z * grid.cell_z);
}

}  // namespace hopose
