#include "hopose/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "hopose/error.hpp"

namespace hopose {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::LengthMismatch,
                std::string(what) + ": " + std::to_string(a) + " predictions vs " + std::to_string(b) + " references");
  }
}

void check_thresholds(std::span<const double> thresholds) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw Error(ErrorCode::ConfigOutOfRange, "thresholds must be ascending");
  }
}

std::ofstream open_report(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

}  // namespace

double PckCurve::normalized_auc() const {
  if (thresholds.size() < 2) return fractions.empty() ? 0.0 : fractions.front();
  double area = 0.0;
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    area += 0.5 * (fractions[i] + fractions[i - 1]) * (thresholds[i] - thresholds[i - 1]);
  }
  const double span = thresholds.back() - thresholds.front();
  return span > 0.0 ? area / span : fractions.front();
}

double mean_point_distance(const ControlPointSet& pred, const ControlPointSet& gt) {
  double sum = 0.0;
  for (std::size_t j = 0; j < kNumControlPoints; ++j) sum += (pred[j] - gt[j]).norm();
  return sum / kNumControlPoints;
}

PckCurve fraction_below(std::span<const double> errors, std::span<const double> thresholds) {
  check_thresholds(thresholds);
  PckCurve curve;
  curve.thresholds.assign(thresholds.begin(), thresholds.end());
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  for (const double t : thresholds) {
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
    curve.fractions.push_back(sorted.empty() ? 0.0 : static_cast<double>(below) / sorted.size());
  }
  return curve;
}

PckCurve pck3d(std::span<const ControlPointSet> pred, std::span<const ControlPointSet> gt,
               std::span<const double> thresholds) {
  check_lengths(pred.size(), gt.size(), "pck3d");
  std::vector<double> errors;
  errors.reserve(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) errors.push_back(mean_point_distance(pred[i], gt[i]));
  return fraction_below(errors, thresholds);
}

double add_metric(const Pose6D& pred, const Pose6D& gt, std::span<const Vec3> model_points) {
  if (model_points.empty()) throw Error(ErrorCode::EmptyModel, "ADD needs at least one model point");
  double sum = 0.0;
  for (const auto& x : model_points) sum += (pred.apply(x) - gt.apply(x)).norm();
  return sum / static_cast<double>(model_points.size());
}

double proj2d_error(const Pose6D& pred, const Pose6D& gt, std::span<const Vec3> model_points,
                    const CameraIntrinsics& k) {
  if (model_points.empty()) throw Error(ErrorCode::EmptyModel, "projection error needs at least one model point");
  double sum = 0.0;
  for (const auto& x : model_points) {
    const Pixel2 a = project(pred.apply(x), k);
    const Pixel2 b = project(gt.apply(x), k);
    sum += std::hypot(a.u - b.u, a.v - b.v);
  }
  return sum / static_cast<double>(model_points.size());
}

double classification_accuracy(std::span<const int> pred, std::span<const int> gt) {
  check_lengths(pred.size(), gt.size(), "classification_accuracy");
  if (pred.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == gt[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double mean_joint_error_mm(std::span<const ControlPointSet> pred, std::span<const ControlPointSet> gt) {
  check_lengths(pred.size(), gt.size(), "mean_joint_error_mm");
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += mean_point_distance(pred[i], gt[i]);
  return 1000.0 * sum / static_cast<double>(pred.size());
}

std::vector<double> linspace(double lo, double hi, int count) {
  std::vector<double> out;
  if (count <= 0) return out;
  if (count == 1) return {lo};
  for (int i = 0; i < count; ++i) out.push_back(lo + (hi - lo) * i / (count - 1));
  return out;
}

void write_curve_csv(const std::filesystem::path& path, const PckCurve& curve, const std::string& value_name) {
  auto out = open_report(path);
  out << "threshold," << value_name << '\n';
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
    out << curve.thresholds[i] << ',' << curve.fractions[i] << '\n';
  }
}

void write_table_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& rows) {
  auto out = open_report(path);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
}

}  // namespace hopose
