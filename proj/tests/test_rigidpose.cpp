#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Geometry>

#include "doctest.h"
#include "hopose/error.hpp"
#include "hopose/rigidpose.hpp"

using namespace hopose;

namespace {

template <class F>
ErrorCode error_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected hopose::Error");
  return ErrorCode::IoError;
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  // uniform via normalized quaternion
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

Vec3 random_vec(std::mt19937_64& rng, double s) {
  std::normal_distribution<double> n(0.0, s);
  return Vec3(n(rng), n(rng), n(rng));
}

std::vector<Vec3> to_vec(const ControlPointSet& s) { return {s.points.begin(), s.points.end()}; }

}  // namespace

TEST_CASE("procrustes: identity and a quarter turn about z") {
  const ControlPointSet src = cuboid_control_points(Cuboid{Vec3(0.05, 0.03, 0.02)});
  const Pose6D id = procrustes_align(src, src);
  CHECK((id.R - Mat3::Identity()).norm() < 1e-12);
  CHECK(id.t.norm() < 1e-12);

  const Mat3 rz = rotation_from_axis_angle(Vec3::UnitZ(), std::numbers::pi / 2);
  Mat3 expect;
  expect << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((rz - expect).norm() < 1e-15);
  const Pose6D P{rz, Vec3(0, 0, 1)};
  const Pose6D got = procrustes_align(src, transform_points(P, src));
  CHECK((got.R - expect).norm() < 1e-12);
  CHECK((got.t - Vec3(0, 0, 1)).norm() < 1e-12);
}

TEST_CASE("procrustes: exact recovery of random rigid transforms") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Vec3> src(21);
    for (auto& p : src) p = random_vec(rng, 0.1);
    const Pose6D P{random_rotation(rng), random_vec(rng, 1.0)};
    std::vector<Vec3> dst;
    for (const auto& p : src) dst.push_back(P.apply(p));
    const Pose6D got = procrustes_align(src, dst);
    CHECK(rotation_angle_between(got.R, P.R) < 1e-9);
    CHECK((got.t - P.t).norm() < 1e-9);
    CHECK(got.R.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("procrustes: optimal against the generating transform under noise") {
  std::mt19937_64 rng(12);
  const auto src = to_vec(cuboid_control_points(Cuboid{Vec3(0.05, 0.03, 0.02)}));
  for (int trial = 0; trial < 100; ++trial) {
    const Pose6D P{random_rotation(rng), random_vec(rng, 0.5)};
    std::vector<Vec3> dst;
    for (const auto& p : src) dst.push_back(P.apply(p) + random_vec(rng, 1e-3));
    const Pose6D got = procrustes_align(src, dst);
    CHECK(alignment_residual(got, src, dst) <= alignment_residual(P, src, dst) + 1e-15);
    // small perturbations of the optimum never do better
    for (int k = 0; k < 5; ++k) {
      const Pose6D nudged{rotation_from_axis_angle(random_vec(rng, 1.0), 1e-4) * got.R, got.t + random_vec(rng, 1e-5)};
      CHECK(alignment_residual(got, src, dst) <= alignment_residual(nudged, src, dst));
    }
  }
}

TEST_CASE("procrustes: mirrored targets still give a proper rotation") {
  std::mt19937_64 rng(13);
  const auto src = to_vec(cuboid_control_points(Cuboid{Vec3(0.05, 0.03, 0.02)}));
  for (int trial = 0; trial < 200; ++trial) {
    const Mat3 R = random_rotation(rng);
    Mat3 mirror = Mat3::Identity();
    mirror(trial % 3, trial % 3) = -1.0;
    std::vector<Vec3> dst;
    for (const auto& p : src) dst.push_back(R * mirror * p + Vec3(0, 0, 0.5));
    const Pose6D got = procrustes_align(src, dst);
    CHECK(got.R.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK((got.R.transpose() * got.R - Mat3::Identity()).norm() < 1e-9);
  }
}

TEST_CASE("procrustes: residual invariant under a common rigid motion") {
  std::mt19937_64 rng(14);
  std::vector<Vec3> src(21), dst(21);
  for (int i = 0; i < 21; ++i) {
    src[i] = random_vec(rng, 0.1);
    dst[i] = random_vec(rng, 0.1);
  }
  const double base = alignment_residual(procrustes_align(src, dst), src, dst);
  for (int trial = 0; trial < 20; ++trial) {
    const Pose6D G{random_rotation(rng), random_vec(rng, 1.0)};
    std::vector<Vec3> s2, d2;
    for (int i = 0; i < 21; ++i) {
      s2.push_back(G.apply(src[i]));
      d2.push_back(G.apply(dst[i]));
    }
    CHECK(alignment_residual(procrustes_align(s2, d2), s2, d2) == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("procrustes: degenerate sources and corner-only option") {
  std::vector<Vec3> line(21);
  for (int i = 0; i < 21; ++i) line[i] = Vec3(0.01 * i, 0, 0);
  CHECK(error_code([&] { procrustes_align(line, line); }) == ErrorCode::DegenerateConfiguration);
  std::vector<Vec3> few(5, Vec3::Zero());
  CHECK(error_code([&] { procrustes_align(std::span(few), std::span(line).first(4)); }) == ErrorCode::LengthMismatch);

  std::mt19937_64 rng(15);
  const ControlPointSet src = cuboid_control_points(Cuboid{Vec3(0.05, 0.03, 0.02)});
  const Pose6D P{random_rotation(rng), Vec3(0.1, 0, 0.5)};
  ControlPointSet dst = transform_points(P, src);
  for (std::size_t i = 8; i < 21; ++i) dst[i] += Vec3(0.3, -0.2, 0.1);  // corrupt all but corners
  const Pose6D corners = procrustes_align(src, dst, AlignOptions{true});
  CHECK(rotation_angle_between(corners.R, P.R) < 1e-9);
  CHECK((corners.t - P.t).norm() < 1e-9);
}

TEST_CASE("pnp_dlt: noiseless identity and random poses") {
  const CameraIntrinsics k{600, 600, 208, 208};
  const auto src = to_vec(cuboid_control_points(Cuboid{Vec3(0.05, 0.03, 0.02)}));
  auto pixels_of = [&](const Pose6D& P) {
    std::vector<Pixel2> px;
    for (const auto& p : src) px.push_back(project(P.apply(p), k));
    return px;
  };
  const Pose6D id{Mat3::Identity(), Vec3(0, 0, 1)};
  const Pose6D got = pnp_dlt(pixels_of(id), src, k);
  CHECK(rotation_angle_between(got.R, id.R) < 1e-6);
  CHECK((got.t - id.t).norm() < 1e-6);

  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> depth(0.3, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Pose6D P{random_rotation(rng), Vec3(0.05 * random_vec(rng, 1.0).x(), 0.05 * random_vec(rng, 1.0).y(),
                                              depth(rng))};
    const Pose6D r = pnp_dlt(pixels_of(P), src, k);
    CHECK(rotation_angle_between(r.R, P.R) < 1e-6);
    CHECK((r.t - P.t).norm() < 1e-6);
    CHECK(r.R.determinant() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("pnp_dlt: too few or coplanar correspondences") {
  const CameraIntrinsics k{600, 600, 208, 208};
  const auto src = to_vec(cuboid_control_points(Cuboid{Vec3(0.05, 0.03, 0.02)}));
  std::vector<Pixel2> px;
  for (const auto& p : src) px.push_back(project(p + Vec3(0, 0, 0.5), k));
  CHECK(error_code([&] { pnp_dlt(std::span(px).first(5), std::span(src).first(5), k); }) == ErrorCode::RankDeficient);
  std::vector<Vec3> plane;
  std::vector<Pixel2> plane_px;
  for (int i = 0; i < 9; ++i) {
    plane.emplace_back(0.01 * (i % 3), 0.01 * (i / 3), 0.0);
    plane_px.push_back(project(plane.back() + Vec3(0, 0, 0.5), k));
  }
  const ErrorCode c = error_code([&] { pnp_dlt(plane_px, plane, k); });
  CHECK((c == ErrorCode::DegenerateConfiguration || c == ErrorCode::RankDeficient));
}

TEST_CASE("transform_points: identity, translation and inverse") {
  const ControlPointSet src = cuboid_control_points(Cuboid{Vec3(0.05, 0.03, 0.02)});
  const ControlPointSet same = transform_points(Pose6D{}, src);
  for (std::size_t i = 0; i < 21; ++i) CHECK(same[i] == src[i]);
  ControlPointSet origin{PointRole::Object, {}};
  const ControlPointSet moved = transform_points(Pose6D{Mat3::Identity(), Vec3(0, 0, 1)}, origin);
  CHECK(moved[0] == Vec3(0, 0, 1));
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const Pose6D P{random_rotation(rng), random_vec(rng, 1.0)};
    const Pose6D inv{P.R.transpose(), -P.R.transpose() * P.t};
    const ControlPointSet back = transform_points(inv, transform_points(P, src));
    for (std::size_t i = 0; i < 21; ++i) CHECK((back[i] - src[i]).norm() < 1e-12);
    CHECK(back.role == PointRole::Object);
  }
}

TEST_CASE("rotation helpers") {
  const Mat3 r = rotation_from_axis_angle(Vec3(1, 1, 0), 0.7);
  CHECK(rotation_angle_between(Mat3::Identity(), r) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(rotation_angle_between(r, r) < 1e-7);
  CHECK(r.determinant() == doctest::Approx(1.0));
}
