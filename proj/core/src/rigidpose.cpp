#include "hopose/rigidpose.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "hopose/error.hpp"

namespace hopose {

Pose6D procrustes_align(std::span<const Vec3> src, std::span<const Vec3> dst, const AlignOptions& opts) {
  if (src.size() != dst.size()) {
    throw Error(ErrorCode::LengthMismatch, "procrustes needs equally sized point sets");
  }
  std::size_t n = src.size();
  if (opts.corners_only) n = std::min<std::size_t>(n, 8);
  if (n < 3) {
    throw Error(ErrorCode::DegenerateConfiguration, "procrustes needs at least 3 points");
  }

  Vec3 src_mean = Vec3::Zero();
  Vec3 dst_mean = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    src_mean += src[i];
    dst_mean += dst[i];
  }
  src_mean /= static_cast<double>(n);
  dst_mean /= static_cast<double>(n);

  Mat3 cross = Mat3::Zero();
  Mat3 src_cov = Mat3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 a = src[i] - src_mean;
    const Vec3 b = dst[i] - dst_mean;
    cross += b * a.transpose();
    src_cov += a * a.transpose();
  }

  // Rank < 2 means all source points are collinear and the rotation about
  // that line is unobservable.
  const Eigen::JacobiSVD<Mat3> cov_svd(src_cov);
  const Vec3 s = cov_svd.singularValues();
  if (!(s(0) > 0.0) || s(1) <= 1e-12 * s(0)) {
    throw Error(ErrorCode::DegenerateConfiguration, "source points are collinear or coincident");
  }

  const Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& U = svd.matrixU();
  const Mat3& V = svd.matrixV();
  Mat3 fix = Mat3::Identity();
  if ((U * V.transpose()).determinant() < 0.0) fix(2, 2) = -1.0;

  Pose6D pose;
  pose.R = U * fix * V.transpose();
  pose.t = dst_mean - pose.R * src_mean;
  return pose;
}

Pose6D procrustes_align(const ControlPointSet& src, const ControlPointSet& dst, const AlignOptions& opts) {
  return procrustes_align(src.view(), dst.view(), opts);
}

double alignment_residual(const Pose6D& pose, std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size()) {
    throw Error(ErrorCode::LengthMismatch, "residual needs equally sized point sets");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) sum += (pose.apply(src[i]) - dst[i]).squaredNorm();
  return sum;
}

Pose6D pnp_dlt(std::span<const Pixel2> pixels, std::span<const Vec3> src, const CameraIntrinsics& k) {
  if (pixels.size() != src.size()) {
    throw Error(ErrorCode::LengthMismatch, "pnp needs one pixel per model point");
  }
  const std::size_t n = src.size();
  if (n < 6) {
    throw Error(ErrorCode::RankDeficient, "pnp_dlt needs at least 6 correspondences, got " + std::to_string(n));
  }
  k.validate();

  // Normalize the model points (centroid at origin, mean distance sqrt(3))
  // so the design matrix is well conditioned.
  Vec3 mean = Vec3::Zero();
  for (const auto& p : src) mean += p;
  mean /= static_cast<double>(n);
  double spread = 0.0;
  for (const auto& p : src) spread += (p - mean).norm();
  spread /= static_cast<double>(n);
  if (!(spread > 0.0)) {
    throw Error(ErrorCode::DegenerateConfiguration, "model points coincide");
  }
  const double scale = std::sqrt(3.0) / spread;

  Eigen::MatrixXd A(2 * n, 12);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 X = (src[i] - mean) * scale;
    const double x = (pixels[i].u - k.cx) / k.fx;
    const double y = (pixels[i].v - k.cy) / k.fy;
    const Eigen::RowVector4d Xh(X.x(), X.y(), X.z(), 1.0);
    auto r0 = A.row(2 * i);
    auto r1 = A.row(2 * i + 1);
    r0 << Xh, Eigen::RowVector4d::Zero(), -x * Xh;
    r1 << Eigen::RowVector4d::Zero(), Xh, -y * Xh;
  }

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  // A second (near) null vector means coplanar or otherwise degenerate model points.
  if (!(sv(0) > 0.0) || sv(10) <= 1e-10 * sv(0)) {
    throw Error(ErrorCode::DegenerateConfiguration, "pnp design matrix has a multi-dimensional null space");
  }
  const Eigen::VectorXd p = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> P;
  P << p.segment<4>(0).transpose(), p.segment<4>(4).transpose(), p.segment<4>(8).transpose();

  Mat3 M = P.leftCols<3>();
  Vec3 m4 = P.col(3);
  // Fix the projective sign so the model centroid lies in front of the camera.
  if (m4.z() < 0.0) {
    M = -M;
    m4 = -m4;
  }
  const Eigen::JacobiSVD<Mat3> msvd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double lambda = msvd.singularValues().mean();
  if (!(lambda > 0.0)) {
    throw Error(ErrorCode::DegenerateConfiguration, "pnp rotation block vanished");
  }
  Mat3 R = msvd.matrixU() * msvd.matrixV().transpose();
  if (R.determinant() < 0.0) {
    Mat3 fix = Mat3::Identity();
    fix(2, 2) = -1.0;
    R = msvd.matrixU() * fix * msvd.matrixV().transpose();
  }

  // Undo the model normalization: X_norm = scale (X - mean).
  Pose6D pose;
  pose.R = R;
  const Vec3 t_norm = m4 / lambda;
  pose.t = t_norm - R * mean * scale;
  pose.t /= scale;
  return pose;
}

ControlPointSet transform_points(const Pose6D& pose, const ControlPointSet& pts) {
  ControlPointSet out;
  out.role = pts.role;
  for (std::size_t i = 0; i < kNumControlPoints; ++i) out[i] = pose.apply(pts[i]);
  return out;
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
  const Mat3 rel = a.transpose() * b;
  // atan2 form stays accurate near zero where acos((tr - 1) / 2) loses precision.
  const Vec3 axis(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
  const double sin_term = 0.5 * axis.norm();
  const double cos_term = 0.5 * (rel.trace() - 1.0);
  return std::atan2(sin_term, cos_term);
}

Mat3 rotation_from_axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

}  // namespace hopose
