#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hopose/geometry.hpp"
#include "hopose/rigidpose.hpp"

namespace hopose {

struct PckCurve {
  std::vector<double> thresholds;
  std::vector<double> fractions;

  /// Trapezoid area under the curve divided by the threshold span.
  double normalized_auc() const;
};

/// Mean 21-joint distance of one frame.
double mean_point_distance(const ControlPointSet& pred, const ControlPointSet& gt);

/// Fraction of frames whose mean joint distance is below each threshold.
PckCurve pck3d(std::span<const ControlPointSet> pred, std::span<const ControlPointSet> gt,
               std::span<const double> thresholds);

/// Mean distance between model points under the two poses.
double add_metric(const Pose6D& pred, const Pose6D& gt, std::span<const Vec3> model_points);

/// Mean pixel distance between model point projections under the two poses.
double proj2d_error(const Pose6D& pred, const Pose6D& gt, std::span<const Vec3> model_points,
                    const CameraIntrinsics& k);

double classification_accuracy(std::span<const int> pred, std::span<const int> gt);

/// Grand mean of joint distances over frames and joints, in millimeters.
double mean_joint_error_mm(std::span<const ControlPointSet> pred, std::span<const ControlPointSet> gt);

/// Fraction of `errors` strictly below each threshold.
PckCurve fraction_below(std::span<const double> errors, std::span<const double> thresholds);

/// `count` evenly spaced values from lo to hi inclusive.
std::vector<double> linspace(double lo, double hi, int count);

/// "threshold,value" rows with a header line.
void write_curve_csv(const std::filesystem::path& path, const PckCurve& curve, const std::string& value_name);
/// Arbitrary numeric table with a header row.
void write_table_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& rows);

}  // namespace hopose
