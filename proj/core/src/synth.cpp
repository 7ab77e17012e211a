#include "hopose/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

#include "hopose/error.hpp"
#include "hopose/params.hpp"
#include "hopose/rigidpose.hpp"

namespace hopose {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct FingerTemplate {
  Vec3 base;
  Vec3 direction;
  std::array<double, 3> lengths;
};

// Hand frame: wrist at the origin, fingers along -y, palm facing -z.
const std::array<FingerTemplate, 5>& finger_templates() {
  static const std::array<FingerTemplate, 5> fingers = {{
      {Vec3(-0.025, -0.025, 0.0), Vec3(-0.7, -0.7, 0.0).normalized(), {0.040, 0.032, 0.028}},
      {Vec3(-0.030, -0.085, 0.0), Vec3(-0.10, -1.0, 0.0).normalized(), {0.040, 0.025, 0.020}},
      {Vec3(-0.010, -0.090, 0.0), Vec3(0.0, -1.0, 0.0), {0.045, 0.028, 0.022}},
      {Vec3(0.010, -0.086, 0.0), Vec3(0.08, -1.0, 0.0).normalized(), {0.042, 0.026, 0.021}},
      {Vec3(0.030, -0.076, 0.0), Vec3(0.18, -1.0, 0.0).normalized(), {0.033, 0.020, 0.018}},
  }};
  return fingers;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Mat3 random_bounded_rotation(std::mt19937_64& rng, double range_deg) {
  const double a = uniform(rng, -range_deg, range_deg) * kDeg;
  const double b = uniform(rng, -range_deg, range_deg) * kDeg;
  const double c = uniform(rng, -range_deg, range_deg) * kDeg;
  return rotation_from_axis_angle(Vec3::UnitZ(), c) * rotation_from_axis_angle(Vec3::UnitY(), b) *
         rotation_from_axis_angle(Vec3::UnitX(), a);
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-9);
  return v.normalized();
}

Vec3 point_at_pixel(double u, double v, double z, const CameraIntrinsics& k) {
  return {(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z};
}

HandPose random_hand(std::mt19937_64& rng, const Vec3& root, int action, const SynthConfig& cfg) {
  HandPose hp;
  hp.root = root;
  hp.rotation = random_bounded_rotation(rng, cfg.hand_rotation_deg);
  hp.curl = action_curl(action, cfg.labels.num_actions);
  const double j = cfg.joint_jitter_deg * kDeg;
  for (auto& finger : hp.flex_jitter) {
    for (double& s : finger) s = uniform(rng, -j, j);
  }
  for (double& s : hp.spread_jitter) s = uniform(rng, -j, j);
  return hp;
}

Vec3 class_extents(std::mt19937_64& rng, int object_class, const SynthConfig& cfg) {
  const Vec3 base = cfg.object_extents[static_cast<std::size_t>(object_class) % cfg.object_extents.size()];
  Vec3 e;
  for (int a = 0; a < 3; ++a) e(a) = base(a) * (1.0 + uniform(rng, -cfg.extent_jitter, cfg.extent_jitter));
  return e;
}

bool inside_volume(const Vec3& p, const SynthConfig& cfg) {
  if (!(p.z() > 0.0)) return false;
  const Pixel2 px = project(p, cfg.camera);
  const double m = cfg.pixel_margin;
  return px.u >= m && px.u <= cfg.grid.image_width() - m && px.v >= m && px.v <= cfg.grid.image_height() - m &&
         p.z() >= cfg.grid.z_min && p.z() < cfg.grid.z_max();
}

// Flat-topped blob: full value within kPlateau pixels of the center (so the
// nearest pixel always carries the exact depth shade), Gaussian falloff beyond.
constexpr double kPlateau = 0.75;

void stamp(Raster& r, int channel, double u, double v, double sigma, float value) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma + kPlateau));
  const int x0 = static_cast<int>(std::floor(u)) - radius;
  const int y0 = static_cast<int>(std::floor(v)) - radius;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int y = std::max(0, y0); y <= std::min(r.height - 1, y0 + 2 * radius + 1); ++y) {
    for (int x = std::max(0, x0); x <= std::min(r.width - 1, x0 + 2 * radius + 1); ++x) {
      const double d = std::max(0.0, std::hypot(x - u, y - v) - kPlateau);
      const float val = static_cast<float>(value * std::exp(-d * d * inv));
      float& dst = r.at(x, y, channel);
      dst = std::max(dst, val);
    }
  }
}

float depth_shade(double z, const GridSpec& grid) {
  const double s = std::clamp((z - grid.z_min) / (grid.z_max() - grid.z_min), 0.0, 1.0);
  return static_cast<float>(1.0 - 0.75 * s);
}

void draw_segment(Raster& r, int channel, const Vec3& a, const Vec3& b, double sigma, double gain,
                  const CameraIntrinsics& k, const GridSpec& grid, bool shaded) {
  const Pixel2 pa = project(a, k);
  const Pixel2 pb = project(b, k);
  const double len = std::hypot(pb.u - pa.u, pb.v - pa.v);
  const int steps = std::max(1, static_cast<int>(std::ceil(len / 0.5)));
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const Vec3 p = a + t * (b - a);
    const Pixel2 px = project(p, k);
    const float value = static_cast<float>(gain * (shaded ? depth_shade(p.z(), grid) : 1.0f));
    stamp(r, channel, px.u, px.v, sigma, value);
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void SynthConfig::validate() const {
  grid.validate();
  camera.validate();
  labels.validate();
  if (image_channels != 1 && image_channels != 3) {
    throw Error(ErrorCode::ConfigOutOfRange, "image_channels must be 1 or 3");
  }
  if (!(depth_lo >= grid.z_min) || !(depth_hi < grid.z_max()) || !(depth_lo < depth_hi) || !(depth_lo > 0.0)) {
    throw Error(ErrorCode::ConfigOutOfRange, "depth sampling range must lie inside the grid depth range");
  }
  if (!(pixel_margin >= 0.0) || 2.0 * pixel_margin >= std::min(grid.image_width(), grid.image_height())) {
    throw Error(ErrorCode::ConfigOutOfRange, "pixel margin leaves no room in the image");
  }
  if (object_extents.empty()) throw Error(ErrorCode::ConfigOutOfRange, "need at least one object extent");
  for (const auto& e : object_extents) Cuboid{e}.validate();
  if (!(extent_jitter >= 0.0 && extent_jitter < 1.0)) {
    throw Error(ErrorCode::ConfigOutOfRange, "extent_jitter must be in [0, 1)");
  }
  if (sequence_length < 2) throw Error(ErrorCode::ConfigOutOfRange, "sequence_length must be >= 2");
  if (!(joint_sigma_px > 0.0) || !(line_sigma_px > 0.0)) {
    throw Error(ErrorCode::ConfigOutOfRange, "render sigmas must be > 0");
  }
}

const std::array<std::pair<int, int>, 20>& hand_bones() {
  static const std::array<std::pair<int, int>, 20> bones = [] {
    std::array<std::pair<int, int>, 20> b{};
    for (int f = 0; f < 5; ++f) {
      const int mcp = 1 + 4 * f;
      b[4 * f] = {0, mcp};
      b[4 * f + 1] = {mcp, mcp + 1};
      b[4 * f + 2] = {mcp + 1, mcp + 2};
      b[4 * f + 3] = {mcp + 2, mcp + 3};
    }
    return b;
  }();
  return bones;
}

double action_curl(int action, int num_actions) {
  return 0.1 + 1.1 * static_cast<double>(action) / std::max(1, num_actions - 1);
}

ControlPointSet hand_joints(const HandPose& pose) {
  ControlPointSet out;
  out.role = PointRole::Hand;
  const Vec3 palm_normal(0.0, 0.0, -1.0);
  std::array<Vec3, kNumControlPoints> local;
  local[0] = Vec3::Zero();
  const auto& fingers = finger_templates();
  for (std::size_t f = 0; f < 5; ++f) {
    const auto& ft = fingers[f];
    const Vec3 dir = rotation_from_axis_angle(palm_normal, pose.spread_jitter[f]) * ft.direction;
    const double finger_curl = f == 0 ? 0.5 * pose.curl : pose.curl;
    Vec3 p = ft.base;
    local[1 + 4 * f] = p;
    double theta = 0.0;
    for (std::size_t s = 0; s < 3; ++s) {
      theta += finger_curl * (s == 0 ? 0.8 : (s == 1 ? 1.0 : 0.7)) + pose.flex_jitter[f][s];
      p += ft.lengths[s] * (std::cos(theta) * dir + std::sin(theta) * palm_normal);
      local[2 + 4 * f + s] = p;
    }
  }
  for (std::size_t i = 0; i < kNumControlPoints; ++i) out[i] = pose.root + pose.rotation * local[i];
  return out;
}

SceneFrame sample_scene(std::uint64_t seed, const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  SceneFrame s;
  s.action = std::uniform_int_distribution<int>(0, cfg.labels.num_actions - 1)(rng);
  s.object_class = std::uniform_int_distribution<int>(0, cfg.labels.num_objects - 1)(rng);

  const double m = cfg.pixel_margin;
  const double w = cfg.grid.image_width();
  const double h = cfg.grid.image_height();
  const Vec3 root = point_at_pixel(uniform(rng, m, w - m), uniform(rng, m, h - m),
                                   uniform(rng, cfg.depth_lo, cfg.depth_hi), cfg.camera);
  s.hand = hand_joints(random_hand(rng, root, s.action, cfg));

  s.cuboid.half_extents = class_extents(rng, s.object_class, cfg);
  const Vec3 axis = random_unit(rng);
  const double angle = uniform(rng, 0.0, cfg.object_rotation_deg) * kDeg;
  s.object_pose.R = rotation_from_axis_angle(axis, angle);
  s.object_pose.t = point_at_pixel(uniform(rng, m, w - m), uniform(rng, m, h - m),
                                   uniform(rng, cfg.depth_lo, cfg.depth_hi), cfg.camera);
  s.object = transform_points(s.object_pose, cuboid_control_points(s.cuboid));
  s.raster = render(s, cfg);
  return s;
}

RenderInput render_input(const SceneFrame& scene) {
  RenderInput in;
  in.joints.assign(scene.hand.points.begin(), scene.hand.points.end());
  in.bones.assign(hand_bones().begin(), hand_bones().end());
  for (const auto& [a, b] : cuboid_edges()) in.edges.push_back({scene.object[a], scene.object[b]});
  in.markers.push_back(scene.object[0]);
  return in;
}

Raster render(const RenderInput& input, const CameraIntrinsics& k, const SynthConfig& cfg) {
  const GridSpec& grid = cfg.grid;
  const int channels = cfg.image_channels;
  Raster r(grid.image_width(), grid.image_height(), channels);
  const int hand_ch = 0;
  const int obj_ch = channels == 3 ? 1 : 0;

  for (const auto& p : input.joints) {
    const Pixel2 px = project(p, k);
    stamp(r, hand_ch, px.u, px.v, cfg.joint_sigma_px, depth_shade(p.z(), grid));
    if (channels == 3) stamp(r, 2, px.u, px.v, cfg.joint_sigma_px, 1.0f);
  }
  for (const auto& [a, b] : input.bones) {
    draw_segment(r, hand_ch, input.joints.at(a), input.joints.at(b), cfg.line_sigma_px, 0.5, k, grid, true);
    if (channels == 3) {
      draw_segment(r, 2, input.joints.at(a), input.joints.at(b), cfg.line_sigma_px, 0.5, k, grid, false);
    }
  }
  for (const auto& e : input.edges) {
    draw_segment(r, obj_ch, e[0], e[1], cfg.line_sigma_px, 1.0, k, grid, true);
    if (channels == 3) draw_segment(r, 2, e[0], e[1], cfg.line_sigma_px, 1.0, k, grid, false);
  }
  for (const auto& p : input.markers) {
    const Pixel2 px = project(p, k);
    stamp(r, obj_ch, px.u, px.v, 2.0 * cfg.joint_sigma_px, depth_shade(p.z(), grid));
    if (channels == 3) stamp(r, 2, px.u, px.v, 2.0 * cfg.joint_sigma_px, 1.0f);
  }
  return r;
}

Raster render(const SceneFrame& scene, const SynthConfig& cfg) {
  return render(render_input(scene), cfg.camera, cfg);
}

FrameSequence sample_sequence(std::uint64_t seed, int action, int object_class, const SynthConfig& cfg) {
  cfg.validate();
  const auto& labels = cfg.labels;
  if (action < 0 || action >= labels.num_actions || object_class < 0 || object_class >= labels.num_objects) {
    throw Error(ErrorCode::ConfigOutOfRange, "sequence action/object id out of range");
  }
  const int interaction = labels.interaction_index(action, object_class);
  const Verb verb = static_cast<Verb>(action % 4);
  const int T = cfg.sequence_length;
  const double m = cfg.pixel_margin;
  const double w = cfg.grid.image_width();
  const double h = cfg.grid.image_height();

  for (int attempt = 0; attempt < 500; ++attempt) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    const Vec3 center = point_at_pixel(uniform(rng, m, w - m), uniform(rng, m, h - m),
                                       uniform(rng, cfg.depth_lo, cfg.depth_hi), cfg.camera);
    Cuboid cuboid{class_extents(rng, object_class, cfg)};
    const Mat3 R0 = rotation_from_axis_angle(random_unit(rng), uniform(rng, 0.0, cfg.object_rotation_deg) * kDeg);
    const HandPose hand0 = random_hand(rng, Vec3::Zero(), action, cfg);
    const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const Vec3 dir = Vec3(std::cos(phi), std::sin(phi), uniform(rng, -0.3, 0.3)).normalized();
    const double near_d = uniform(rng, 0.05, 0.08);
    const double far_d = uniform(rng, 0.16, 0.22);
    const Vec3 spin_axis = random_unit(rng);
    const double spin = uniform(rng, 90.0, 170.0) * kDeg;
    const double shake_phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const Vec3 shake_dir(std::cos(shake_phi), std::sin(shake_phi), 0.0);
    const double amplitude = uniform(rng, 0.08, 0.11);
    const double jitter_scale = 0.3;

    FrameSequence seq;
    seq.action = action;
    seq.object_class = object_class;
    seq.interaction = interaction;
    bool ok = true;
    const ControlPointSet box = cuboid_control_points(cuboid);
    for (int t = 0; t < T && ok; ++t) {
      const double s = static_cast<double>(t) / (T - 1);
      Pose6D pose{R0, center};
      Vec3 hand_root = center + 0.1 * dir;
      switch (verb) {
        case Verb::Approach:
          hand_root = center + dir * (far_d + (near_d - far_d) * s);
          break;
        case Verb::Retract:
          hand_root = center + dir * (near_d + (far_d - near_d) * s);
          break;
        case Verb::Rotate:
          pose.R = rotation_from_axis_angle(spin_axis, spin * s) * R0;
          break;
        case Verb::Shake: {
          // the object swings about a steady grip point, so the relative offset oscillates
          pose.t += shake_dir * amplitude * std::sin(2.0 * std::numbers::pi * 1.5 * s);
          break;
        }
      }
      HandPose hp = hand0;
      hp.root = hand_root;
      for (auto& finger : hp.flex_jitter) {
        for (double& j : finger) j += jitter_scale * uniform(rng, -1.0, 1.0) * cfg.joint_jitter_deg * kDeg;
      }
      SceneFrame f;
      f.sequence_id = 0;
      f.action = action;
      f.object_class = object_class;
      f.hand = hand_joints(hp);
      f.cuboid = cuboid;
      f.object_pose = pose;
      f.object = transform_points(pose, box);
      ok = inside_volume(f.hand[kHandRootIndex], cfg) && inside_volume(f.object[kObjectCentroidIndex], cfg);
      for (const auto& p : f.hand.points) ok = ok && p.z() > 0.0;
      for (const auto& p : f.object.points) ok = ok && p.z() > 0.0;
      if (ok) seq.frames.push_back(std::move(f));
    }
    if (!ok) continue;
    for (auto& f : seq.frames) f.raster = render(f, cfg);
    return seq;
  }
  throw Error(ErrorCode::ConfigOutOfRange, "could not fit a sequence trajectory inside the grid volume");
}

bool translate_frame(const SceneFrame& in, int du, int dv, const SynthConfig& cfg, SceneFrame& out) {
  const auto& k = cfg.camera;
  auto shift = [&](const Vec3& p) { return Vec3(p.x() + du * p.z() / k.fx, p.y() + dv * p.z() / k.fy, p.z()); };
  SceneFrame f = in;
  for (auto& p : f.hand.points) p = shift(p);
  for (auto& p : f.object.points) p = shift(p);
  const GridSpec& g = cfg.grid;
  auto in_grid = [&](const Vec3& p) {
    const GridCoordinate c = to_grid(p, k, g);
    return c.wu >= 0.0 && c.wu < g.W && c.wv >= 0.0 && c.wv < g.H && c.wz >= 0.0 && c.wz < g.D;
  };
  if (!in_grid(f.hand[kHandRootIndex]) || !in_grid(f.object[kObjectCentroidIndex])) return false;
  f.object_pose = procrustes_align(cuboid_control_points(f.cuboid), f.object);

  if (!in.raster.empty()) {
    const Raster& src = in.raster;
    Raster dst(src.width, src.height, src.channels);
    for (int y = 0; y < src.height; ++y) {
      const int sy = y - dv;
      if (sy < 0 || sy >= src.height) continue;
      for (int x = 0; x < src.width; ++x) {
        const int sx = x - du;
        if (sx < 0 || sx >= src.width) continue;
        for (int c = 0; c < src.channels; ++c) dst.at(x, y, c) = src.at(sx, sy, c);
      }
    }
    f.raster = std::move(dst);
  }
  out = std::move(f);
  return true;
}

void photometric_jitter(Raster& raster, double amount, std::mt19937_64& rng) {
  if (amount <= 0.0) return;
  const double lo = 1.0 / (1.0 + amount);
  const double hi = 1.0 + amount;
  const double exposure = uniform(rng, lo, hi);
  const double saturation = uniform(rng, lo, hi);
  const double hue = uniform(rng, -amount / 5.0, amount / 5.0) * 2.0 * std::numbers::pi;
  if (raster.channels == 1) {
    for (float& v : raster.data) v = static_cast<float>(std::clamp(v * exposure, 0.0, 1.0));
    return;
  }
  // Hue rotation about the gray axis.
  const Mat3 rot = rotation_from_axis_angle(Vec3::Ones(), hue);
  for (std::size_t i = 0; i < raster.data.size(); i += 3) {
    Vec3 c(raster.data[i], raster.data[i + 1], raster.data[i + 2]);
    c = rot * c;
    const double gray = c.mean();
    c = (Vec3::Constant(gray) + saturation * (c - Vec3::Constant(gray))) * exposure;
    for (int a = 0; a < 3; ++a) raster.data[i + a] = static_cast<float>(std::clamp(c(a), 0.0, 1.0));
  }
}

void write_frames(const std::filesystem::path& file, std::span<const SceneFrame> frames) {
  const auto dir = file.parent_path();
  const auto raster_dir = dir / "rasters";
  std::filesystem::create_directories(raster_dir);
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + file.string());
  for (const auto& f : frames) {
    std::string ref = "-";
    if (!f.raster.empty()) {
      ref = "rasters/f" + std::to_string(f.frame_id) + (f.raster.channels == 1 ? ".pgm" : ".ppm");
      write_pnm(dir / ref, f.raster);
    }
    out << f.frame_id << ' ' << f.sequence_id << ' ' << f.action << ' ' << f.object_class;
    for (const auto& p : f.hand.points) {
      for (int a = 0; a < 3; ++a) out << ' ' << format_double(p(a));
    }
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out << ' ' << format_double(f.object_pose.R(r, c));
    }
    for (int a = 0; a < 3; ++a) out << ' ' << format_double(f.object_pose.t(a));
    for (int a = 0; a < 3; ++a) out << ' ' << format_double(f.cuboid.half_extents(a));
    out << ' ' << ref << '\n';
  }
}

std::vector<SceneFrame> read_frames(const std::filesystem::path& file, bool load_rasters) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot read dataset file " + file.string());
  const auto dir = file.parent_path();
  std::vector<SceneFrame> frames;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    SceneFrame f;
    ls >> f.frame_id >> f.sequence_id >> f.action >> f.object_class;
    for (auto& p : f.hand.points) ls >> p.x() >> p.y() >> p.z();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) ls >> f.object_pose.R(r, c);
    }
    ls >> f.object_pose.t.x() >> f.object_pose.t.y() >> f.object_pose.t.z();
    ls >> f.cuboid.half_extents.x() >> f.cuboid.half_extents.y() >> f.cuboid.half_extents.z();
    std::string ref;
    ls >> ref;
    if (!ls) {
      throw Error(ErrorCode::IoError, file.string() + ":" + std::to_string(line_no) + ": malformed frame record");
    }
    f.hand.role = PointRole::Hand;
    f.object = transform_points(f.object_pose, cuboid_control_points(f.cuboid));
    if (load_rasters && ref != "-") f.raster = read_pnm(dir / ref);
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<FrameSequence> group_sequences(std::span<const SceneFrame> frames, const LabelSpec& labels) {
  std::map<int, FrameSequence> by_id;
  std::vector<int> order;
  for (const auto& f : frames) {
    if (f.sequence_id < 0) continue;
    auto [it, inserted] = by_id.try_emplace(f.sequence_id);
    if (inserted) {
      order.push_back(f.sequence_id);
      it->second.sequence_id = f.sequence_id;
      it->second.action = f.action;
      it->second.object_class = f.object_class;
      it->second.interaction = labels.interaction_index(f.action, f.object_class);
    } else if (it->second.object_class != f.object_class || it->second.action != f.action) {
      throw Error(ErrorCode::IoError, "sequence " + std::to_string(f.sequence_id) + " mixes labels");
    }
    it->second.frames.push_back(f);
  }
  std::vector<FrameSequence> out;
  out.reserve(order.size());
  for (const int id : order) out.push_back(std::move(by_id.at(id)));
  return out;
}

}  // namespace hopose
