#include "hopose/codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include "hopose/error.hpp"
#include "json.hpp"

namespace hopose {

namespace {

constexpr double kLogitClamp = 60.0;
const char* kAxisNames[3] = {"u", "v", "z"};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) {
  if (p <= 0.0) return -kLogitClamp;
  if (p >= 1.0) return kLogitClamp;
  return std::clamp(std::log(p / (1.0 - p)), -kLogitClamp, kLogitClamp);
}

// Back-projection without the depth check; decoded network outputs may land
// behind the camera early in training.
Vec3 backproject_unchecked(const GridCoordinate& g, const CameraIntrinsics& k, const GridSpec& grid) {
  const double z = g.wz * grid.cell_z + grid.z_min;
  return {z * (g.wu * grid.cell_u - k.cx) / k.fx, z * (g.wv * grid.cell_v - k.cy) / k.fy, z};
}

void softmax_into(std::span<const double> logits, std::vector<double>& out) {
  out.resize(logits.size());
  if (logits.empty()) return;
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
}

CellIndex responsible_cell(const GridCoordinate& g, const GridSpec& grid, const char* entity) {
  const double w[3] = {g.wu, g.wv, g.wz};
  const int extent[3] = {grid.W, grid.H, grid.D};
  int idx[3];
  for (int a = 0; a < 3; ++a) {
    // Cells are lower-inclusive intervals [i, i + 1): a point on a boundary
    // gets offset 0 in the cell whose corner it sits on.
    const double f = std::floor(w[a]);
    if (!(f >= 0.0) || f >= extent[a]) {
      throw Error(ErrorCode::OutOfVolume, std::string(entity) + " lies outside the grid volume along " +
                                              kAxisNames[a] + " (grid coordinate " + std::to_string(w[a]) + ")");
    }
    idx[a] = static_cast<int>(f);
  }
  return {idx[0], idx[1], idx[2]};
}

void encode_slot(std::span<double> cell, const SlotLayout& layout, const ControlPointSet& pts, const CellIndex& c,
                 int cls, const CameraIntrinsics& k, const GridSpec& grid) {
  for (std::size_t i = 0; i < kNumControlPoints; ++i) {
    const GridCoordinate g = to_grid(pts[i], k, grid);
    cell[layout.pose(i, 0)] = g.wu - c.u;
    cell[layout.pose(i, 1)] = g.wv - c.v;
    cell[layout.pose(i, 2)] = g.wz - c.z;
  }
  cell[layout.prob(static_cast<std::size_t>(cls))] = 1.0;
  cell[layout.confidence()] = 1.0;
}

DecodedSlot decode_slot(std::span<const double> cell, const SlotLayout& layout, const CellIndex& c, bool activations,
                        PointRole role, const GridSpec& grid, const CameraIntrinsics& k) {
  DecodedSlot slot;
  slot.points.role = role;
  const double base[3] = {static_cast<double>(c.u), static_cast<double>(c.v), static_cast<double>(c.z)};
  for (std::size_t i = 0; i < kNumControlPoints; ++i) {
    double w[3];
    for (std::size_t a = 0; a < 3; ++a) {
      const double raw = cell[layout.pose(i, a)];
      const double offset = (activations && i == layout.root_point) ? sigmoid(raw) : raw;
      w[a] = offset + base[a];
    }
    slot.grid_points[i] = {w[0], w[1], w[2]};
    slot.points[i] = backproject_unchecked(slot.grid_points[i], k, grid);
  }
  const auto probs = cell.subspan(layout.prob(0), layout.num_probs);
  if (activations) {
    softmax_into(probs, slot.probs);
    slot.confidence = sigmoid(cell[layout.confidence()]);
  } else {
    slot.probs.assign(probs.begin(), probs.end());
    slot.confidence = cell[layout.confidence()];
  }
  return slot;
}

}  // namespace

void LabelSpec::validate() const {
  if (num_control_points != static_cast<int>(kNumControlPoints)) {
    throw Error(ErrorCode::ConfigOutOfRange, "only 21 control points per entity are supported");
  }
  if (num_actions < 1 || num_objects < 1 || num_interactions < 1) {
    throw Error(ErrorCode::ConfigOutOfRange, "label counts must be >= 1");
  }
  if (num_interactions > num_actions * num_objects) {
    throw Error(ErrorCode::ConfigOutOfRange, "num_interactions must not exceed num_actions * num_objects");
  }
}

int LabelSpec::interaction_index(int action, int object_class) const {
  if (action < 0 || action >= num_actions || object_class < 0 || object_class >= num_objects) {
    throw Error(ErrorCode::ConfigOutOfRange, "action/object id out of range");
  }
  const int idx = action * num_objects + object_class;
  if (idx >= num_interactions) {
    throw Error(ErrorCode::ConfigOutOfRange, "(action, object) pair has no interaction label");
  }
  return idx;
}

SlotLayout hand_layout(const LabelSpec& labels) {
  return {0, static_cast<std::size_t>(labels.num_actions), kHandRootIndex};
}

SlotLayout object_layout(const LabelSpec& labels) {
  return {labels.hand_slot_size(), static_cast<std::size_t>(labels.num_objects), kObjectCentroidIndex};
}

std::size_t CellIndex::linear(const GridSpec& grid) const {
  return (static_cast<std::size_t>(u) * grid.H + v) * grid.D + z;
}

CellIndex CellIndex::from_linear(std::size_t index, const GridSpec& grid) {
  CellIndex c;
  c.z = static_cast<int>(index % grid.D);
  index /= grid.D;
  c.v = static_cast<int>(index % grid.H);
  c.u = static_cast<int>(index / grid.H);
  return c;
}

GridTensor::GridTensor(const GridSpec& grid, const LabelSpec& labels)
    : grid_(grid), labels_(labels), values_(grid.num_cells() * labels.cell_size(), 0.0) {}

std::span<double> GridTensor::cell(std::size_t linear) {
  const std::size_t n = labels_.cell_size();
  return std::span<double>(values_).subspan(linear * n, n);
}

std::span<const double> GridTensor::cell(std::size_t linear) const {
  const std::size_t n = labels_.cell_size();
  return std::span<const double>(values_).subspan(linear * n, n);
}

std::span<double> GridTensor::cell(const CellIndex& c) { return cell(c.linear(grid_)); }
std::span<const double> GridTensor::cell(const CellIndex& c) const { return cell(c.linear(grid_)); }

int DecodedSlot::argmax_class() const {
  if (probs.empty()) return -1;
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

TargetTensor encode_labels(const ControlPointSet& hand, const ControlPointSet& object, int action, int object_class,
                           const GridSpec& grid, const LabelSpec& labels, const CameraIntrinsics& k) {
  grid.validate();
  labels.validate();
  if (hand.role != PointRole::Hand || object.role != PointRole::Object) {
    throw Error(ErrorCode::RoleMismatch, "encode expects a hand set and an object set");
  }
  if (action < 0 || action >= labels.num_actions || object_class < 0 || object_class >= labels.num_objects) {
    throw Error(ErrorCode::ConfigOutOfRange, "class label out of range");
  }
  TargetTensor target(grid, labels);
  const CellIndex hc = responsible_cell(to_grid(hand[kHandRootIndex], k, grid), grid, "hand root");
  const CellIndex oc = responsible_cell(to_grid(object[kObjectCentroidIndex], k, grid), grid, "object centroid");
  encode_slot(target.cell(hc), hand_layout(labels), hand, hc, action, k, grid);
  encode_slot(target.cell(oc), object_layout(labels), object, oc, object_class, k, grid);
  target.hand_cell = hc;
  target.object_cell = oc;
  return target;
}

TargetTensor encode_frame(const SceneFrame& scene, const GridSpec& grid, const LabelSpec& labels,
                          const CameraIntrinsics& k) {
  return encode_labels(scene.hand, scene.object, scene.action, scene.object_class, grid, labels, k);
}

DecodedCell decode_cell(std::span<const double> raw, const CellIndex& cell, const GridSpec& grid,
                        const LabelSpec& labels, const CameraIntrinsics& k) {
  if (raw.size() != labels.cell_size()) {
    throw Error(ErrorCode::LengthMismatch, "cell vector has " + std::to_string(raw.size()) + " values, expected " +
                                               std::to_string(labels.cell_size()));
  }
  return {cell, decode_slot(raw, hand_layout(labels), cell, true, PointRole::Hand, grid, k),
          decode_slot(raw, object_layout(labels), cell, true, PointRole::Object, grid, k)};
}

std::vector<DecodedCell> decode_grid(const RawGridOutput& raw, const CameraIntrinsics& k) {
  const GridSpec& grid = raw.grid();
  std::vector<DecodedCell> out;
  out.reserve(grid.num_cells());
  for (std::size_t i = 0; i < grid.num_cells(); ++i) {
    out.push_back(decode_cell(raw.cell(i), CellIndex::from_linear(i, grid), grid, raw.labels(), k));
  }
  return out;
}

DecodedCell decode_target_cell(std::span<const double> target, const CellIndex& cell, const GridSpec& grid,
                               const LabelSpec& labels, const CameraIntrinsics& k) {
  if (target.size() != labels.cell_size()) {
    throw Error(ErrorCode::LengthMismatch, "target cell has wrong length");
  }
  return {cell, decode_slot(target, hand_layout(labels), cell, false, PointRole::Hand, grid, k),
          decode_slot(target, object_layout(labels), cell, false, PointRole::Object, grid, k)};
}

FramePrediction prediction_from_target(const TargetTensor& target, const CameraIntrinsics& k) {
  if (!target.hand_cell || !target.object_cell) {
    throw Error(ErrorCode::ShapeMismatch, "target has no responsible cells");
  }
  const auto& g = target.grid();
  const auto& l = target.labels();
  FramePrediction p;
  p.hand_cell = *target.hand_cell;
  p.object_cell = *target.object_cell;
  p.hand = decode_target_cell(target.cell(p.hand_cell), p.hand_cell, g, l, k).hand;
  p.object = decode_target_cell(target.cell(p.object_cell), p.object_cell, g, l, k).object;
  return p;
}

RawGridOutput target_to_raw(const TargetTensor& target) {
  RawGridOutput raw(target.grid(), target.labels());
  const auto& labels = target.labels();
  for (const SlotLayout layout : {hand_layout(labels), object_layout(labels)}) {
    for (std::size_t c = 0; c < target.grid().num_cells(); ++c) {
      const auto src = target.cell(c);
      auto dst = raw.cell(c);
      for (std::size_t i = 0; i < kNumControlPoints; ++i) {
        for (std::size_t a = 0; a < 3; ++a) {
          const double t = src[layout.pose(i, a)];
          dst[layout.pose(i, a)] = i == layout.root_point ? logit(t) : t;
        }
      }
      for (std::size_t j = 0; j < layout.num_probs; ++j) {
        const double p = src[layout.prob(j)];
        dst[layout.prob(j)] = p > 0.0 ? std::max(std::log(p), -kLogitClamp) : -kLogitClamp;
      }
      dst[layout.confidence()] = logit(src[layout.confidence()]);
    }
  }
  return raw;
}

FramePrediction prune(std::span<const DecodedCell> decoded) {
  if (decoded.empty()) {
    throw Error(ErrorCode::ShapeMismatch, "cannot prune an empty grid");
  }
  std::size_t best_hand = 0;
  std::size_t best_object = 0;
  // Strict comparison keeps the first (lowest linear index) maximum; callers
  // pass cells in linear order.
  for (std::size_t i = 1; i < decoded.size(); ++i) {
    if (decoded[i].hand.confidence > decoded[best_hand].hand.confidence) best_hand = i;
    if (decoded[i].object.confidence > decoded[best_object].object.confidence) best_object = i;
  }
  FramePrediction p;
  p.hand_cell = decoded[best_hand].cell;
  p.object_cell = decoded[best_object].cell;
  p.hand = decoded[best_hand].hand;
  p.object = decoded[best_object].object;
  return p;
}

double confidence_component(double distance, double threshold, double alpha) {
  if (!(distance < threshold)) return 0.0;
  return std::expm1(alpha * (1.0 - distance / threshold)) / std::expm1(alpha);
}

double confidence_target(const ControlPointSet& pred, const ControlPointSet& gt, const GridSpec& grid,
                         const CameraIntrinsics& k) {
  if (pred.role != gt.role) {
    throw Error(ErrorCode::RoleMismatch, "confidence compares sets of different roles");
  }
  double pixel_dist = 0.0;
  double depth_dist = 0.0;
  for (std::size_t i = 0; i < kNumControlPoints; ++i) {
    const Pixel2 a = project(pred[i], k);
    const Pixel2 b = project(gt[i], k);
    pixel_dist += std::hypot(a.u - b.u, a.v - b.v);
    depth_dist += std::abs(pred[i].z() - gt[i].z());
  }
  pixel_dist /= kNumControlPoints;
  depth_dist /= kNumControlPoints;
  return 0.5 * confidence_component(pixel_dist, grid.dth_px, grid.alpha) +
         0.5 * confidence_component(depth_dist, grid.dth_m, grid.alpha);
}

double confidence_target_grid(std::span<const GridCoordinate> pred, std::span<const GridCoordinate> gt,
                              const GridSpec& grid) {
  if (pred.size() != gt.size() || pred.empty()) {
    throw Error(ErrorCode::LengthMismatch, "confidence needs equally sized, nonempty point sets");
  }
  double pixel_dist = 0.0;
  double depth_dist = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pixel_dist += std::hypot((pred[i].wu - gt[i].wu) * grid.cell_u, (pred[i].wv - gt[i].wv) * grid.cell_v);
    depth_dist += std::abs(pred[i].wz - gt[i].wz) * grid.cell_z;
  }
  const double n = static_cast<double>(pred.size());
  return 0.5 * confidence_component(pixel_dist / n, grid.dth_px, grid.alpha) +
         0.5 * confidence_component(depth_dist / n, grid.dth_m, grid.alpha);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json grid_json(const GridSpec& g) {
  return {{"H", g.H},           {"W", g.W},         {"D", g.D},         {"cell_u", g.cell_u},
          {"cell_v", g.cell_v}, {"cell_z", g.cell_z}, {"z_min", g.z_min}, {"alpha", g.alpha},
          {"dth_px", g.dth_px}, {"dth_m", g.dth_m}};
}

GridSpec grid_from_json(const nlohmann::json& j) {
  GridSpec g;
  g.H = j.at("H");
  g.W = j.at("W");
  g.D = j.at("D");
  g.cell_u = j.at("cell_u");
  g.cell_v = j.at("cell_v");
  g.cell_z = j.at("cell_z");
  g.z_min = j.at("z_min");
  g.alpha = j.at("alpha");
  g.dth_px = j.at("dth_px");
  g.dth_m = j.at("dth_m");
  return g;
}

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

}  // namespace

void write_grid_tensor(const std::filesystem::path& path, const GridTensor& tensor, TensorKind kind,
                       const CameraIntrinsics& k, const TargetTensor* responsibility) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const double v : tensor.values()) {
    const std::uint32_t bits = to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }

  const auto& l = tensor.labels();
  nlohmann::json side = {
      {"format", "hopose-grid-tensor"},
      {"version", 1},
      {"kind", kind == TensorKind::Target ? "target" : "raw"},
      {"dtype", "float32-le"},
      {"order", "u,v,z,slot,channel"},
      {"grid", grid_json(tensor.grid())},
      {"labels",
       {{"num_control_points", l.num_control_points},
        {"num_actions", l.num_actions},
        {"num_objects", l.num_objects},
        {"num_interactions", l.num_interactions}}},
      {"hand_slot_size", l.hand_slot_size()},
      {"object_slot_size", l.object_slot_size()},
      {"camera", {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}}},
  };
  if (responsibility && responsibility->hand_cell && responsibility->object_cell) {
    const auto& h = *responsibility->hand_cell;
    const auto& o = *responsibility->object_cell;
    side["hand_cell"] = {h.u, h.v, h.z};
    side["object_cell"] = {o.u, o.v, o.z};
  }
  std::ofstream js(path.string() + ".json");
  if (!js) throw Error(ErrorCode::IoError, "cannot write sidecar for " + path.string());
  js << side.dump(2) << '\n';
}

LoadedGridTensor read_grid_tensor(const std::filesystem::path& path, const std::filesystem::path& sidecar) {
  std::ifstream js(sidecar);
  if (!js) throw Error(ErrorCode::MissingArtifact, "cannot read sidecar " + sidecar.string());
  nlohmann::json side;
  try {
    js >> side;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, "malformed sidecar " + sidecar.string() + ": " + e.what());
  }
  LoadedGridTensor loaded;
  try {
    const GridSpec grid = grid_from_json(side.at("grid"));
    LabelSpec labels;
    labels.num_control_points = side.at("labels").at("num_control_points");
    labels.num_actions = side.at("labels").at("num_actions");
    labels.num_objects = side.at("labels").at("num_objects");
    labels.num_interactions = side.at("labels").at("num_interactions");
    grid.validate();
    labels.validate();
    loaded.tensor = TargetTensor(grid, labels);
    loaded.kind = side.at("kind") == "raw" ? TensorKind::Raw : TensorKind::Target;
    const auto& cam = side.at("camera");
    loaded.camera = {cam.at("fx"), cam.at("fy"), cam.at("cx"), cam.at("cy")};
    if (side.contains("hand_cell")) {
      const auto& h = side["hand_cell"];
      const auto& o = side.at("object_cell");
      loaded.tensor.hand_cell = CellIndex{h[0], h[1], h[2]};
      loaded.tensor.object_cell = CellIndex{o[0], o[1], o[2]};
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, "sidecar " + sidecar.string() + " is missing fields: " + e.what());
  }

  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot read tensor " + path.string());
  auto& values = loaded.tensor.values();
  for (double& v : values) {
    std::uint32_t bits = 0;
    in.read(reinterpret_cast<char*>(&bits), sizeof bits);
    if (!in) throw Error(ErrorCode::ShapeMismatch, "tensor file shorter than the sidecar shape");
    v = std::bit_cast<float>(to_little_endian(bits));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::ShapeMismatch, "tensor file longer than the sidecar shape");
  }
  return loaded;
}

}  // namespace hopose
