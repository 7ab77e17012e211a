#include "hopose/config.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <openssl/evp.h>

#include "hopose/error.hpp"

namespace hopose {

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw Error(ErrorCode::ConfigError, "key '" + key + "': cannot parse '" + value + "' as " + expected);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

std::string format(double v) {
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}
std::string format(int v) { return std::to_string(v); }
std::string format(std::uint64_t v) { return std::to_string(v); }
std::string format(bool v) { return v ? "true" : "false"; }
std::string format(const std::string& v) { return v; }
std::string format(const std::filesystem::path& v) { return v.generic_string(); }
std::string format(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}
std::string format(const std::vector<ConvSpec>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out += (i ? "," : "") + std::to_string(v[i].out_channels) + ":" + std::to_string(v[i].kernel) + ":" +
           std::to_string(v[i].stride);
  }
  return out;
}
std::string format(const std::vector<Vec3>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out += (i ? "," : "") + format(v[i].x()) + ":" + format(v[i].y()) + ":" + format(v[i].z());
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& s, const char* expected) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) bad_value(key, s, expected);
  return v;
}

void parse(const std::string& key, const std::string& s, double& out) {
  out = parse_number<double>(key, s, "a number");
}
void parse(const std::string& key, const std::string& s, int& out) { out = parse_number<int>(key, s, "an integer"); }
void parse(const std::string& key, const std::string& s, std::uint64_t& out) {
  out = parse_number<std::uint64_t>(key, s, "an unsigned integer");
}
void parse(const std::string& key, const std::string& s, bool& out) {
  if (s == "true" || s == "1") {
    out = true;
  } else if (s == "false" || s == "0") {
    out = false;
  } else {
    bad_value(key, s, "a boolean");
  }
}
void parse(const std::string&, const std::string& s, std::string& out) { out = s; }
void parse(const std::string&, const std::string& s, std::filesystem::path& out) { out = s; }
void parse(const std::string& key, const std::string& s, std::vector<int>& out) {
  out.clear();
  for (const auto& item : split(s, ',')) out.push_back(parse_number<int>(key, item, "an integer list"));
}
void parse(const std::string& key, const std::string& s, std::vector<ConvSpec>& out) {
  out.clear();
  for (const auto& item : split(s, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 3) bad_value(key, item, "channels:kernel:stride");
    out.push_back({parse_number<int>(key, parts[0], "channels:kernel:stride"),
                   parse_number<int>(key, parts[1], "channels:kernel:stride"),
                   parse_number<int>(key, parts[2], "channels:kernel:stride")});
  }
}
void parse(const std::string& key, const std::string& s, std::vector<Vec3>& out) {
  out.clear();
  for (const auto& item : split(s, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 3) bad_value(key, item, "x:y:z");
    out.emplace_back(parse_number<double>(key, parts[0], "x:y:z"), parse_number<double>(key, parts[1], "x:y:z"),
                     parse_number<double>(key, parts[2], "x:y:z"));
  }
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class Ref>
Field make_field(std::string key, Ref ref) {
  return {key, [ref](const RunConfig& c) { return format(ref(c)); },
          [ref, key](RunConfig& c, const std::string& v) { parse(key, v, ref(c)); }};
}

#define HOPOSE_FIELD(key, expr) make_field(key, [](auto& c) -> auto& { return c.expr; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      HOPOSE_FIELD("preset", preset),
      HOPOSE_FIELD("seed", seed),
      HOPOSE_FIELD("grid.H", grid.H),
      HOPOSE_FIELD("grid.W", grid.W),
      HOPOSE_FIELD("grid.D", grid.D),
      HOPOSE_FIELD("grid.cell_u", grid.cell_u),
      HOPOSE_FIELD("grid.cell_v", grid.cell_v),
      HOPOSE_FIELD("grid.cell_z", grid.cell_z),
      HOPOSE_FIELD("grid.z_min", grid.z_min),
      HOPOSE_FIELD("grid.alpha", grid.alpha),
      HOPOSE_FIELD("grid.dth_px", grid.dth_px),
      HOPOSE_FIELD("grid.dth_m", grid.dth_m),
      HOPOSE_FIELD("camera.fx", camera.fx),
      HOPOSE_FIELD("camera.fy", camera.fy),
      HOPOSE_FIELD("camera.cx", camera.cx),
      HOPOSE_FIELD("camera.cy", camera.cy),
      HOPOSE_FIELD("labels.num_actions", labels.num_actions),
      HOPOSE_FIELD("labels.num_objects", labels.num_objects),
      HOPOSE_FIELD("labels.num_interactions", labels.num_interactions),
      HOPOSE_FIELD("image.channels", image_channels),
      HOPOSE_FIELD("backbone.layers", backbone.layers),
      HOPOSE_FIELD("backbone.head_kernel", backbone.head_kernel),
      HOPOSE_FIELD("backbone.head_stride", backbone.head_stride),
      HOPOSE_FIELD("backbone.leaky_slope", backbone.leaky_slope),
      HOPOSE_FIELD("backbone.head_gain", backbone.head_gain),
      HOPOSE_FIELD("loss.pose", loss.pose),
      HOPOSE_FIELD("loss.actcls", loss.actcls),
      HOPOSE_FIELD("loss.objcls", loss.objcls),
      HOPOSE_FIELD("loss.conf_obj", loss.conf_obj),
      HOPOSE_FIELD("loss.conf_noobj", loss.conf_noobj),
      HOPOSE_FIELD("loss.online_confidence", online_confidence),
      HOPOSE_FIELD("optim.lr", optim.lr),
      HOPOSE_FIELD("optim.epochs", optim.epochs),
      HOPOSE_FIELD("optim.drop_epochs", optim.drop_epochs),
      HOPOSE_FIELD("optim.lr_factor", optim.lr_factor),
      HOPOSE_FIELD("optim.batch_size", optim.batch_size),
      HOPOSE_FIELD("optim.momentum", optim.momentum),
      HOPOSE_FIELD("optim.clip_norm", optim.clip_norm),
      HOPOSE_FIELD("augment.photometric", augment.photometric),
      HOPOSE_FIELD("augment.translation", augment.translation),
      HOPOSE_FIELD("synth.depth_lo", synth.depth_lo),
      HOPOSE_FIELD("synth.depth_hi", synth.depth_hi),
      HOPOSE_FIELD("synth.pixel_margin", synth.pixel_margin),
      HOPOSE_FIELD("synth.hand_rotation_deg", synth.hand_rotation_deg),
      HOPOSE_FIELD("synth.object_rotation_deg", synth.object_rotation_deg),
      HOPOSE_FIELD("synth.joint_jitter_deg", synth.joint_jitter_deg),
      HOPOSE_FIELD("synth.joint_sigma_px", synth.joint_sigma_px),
      HOPOSE_FIELD("synth.line_sigma_px", synth.line_sigma_px),
      HOPOSE_FIELD("synth.sequence_length", synth.sequence_length),
      HOPOSE_FIELD("synth.object_extents", synth.object_extents),
      HOPOSE_FIELD("synth.extent_jitter", synth.extent_jitter),
      HOPOSE_FIELD("interaction.use_hand_pose", interaction.use_hand_pose),
      HOPOSE_FIELD("interaction.use_object_pose", interaction.use_object_pose),
      HOPOSE_FIELD("interaction.use_action_probs", interaction.use_action_probs),
      HOPOSE_FIELD("interaction.use_object_probs", interaction.use_object_probs),
      HOPOSE_FIELD("interaction.interaction_mlp", interaction.interaction_mlp),
      HOPOSE_FIELD("interaction.root_relative", interaction.root_relative),
      HOPOSE_FIELD("interaction.input_scale", interaction.input_scale),
      HOPOSE_FIELD("interaction.mlp_hidden", interaction.mlp_hidden),
      HOPOSE_FIELD("interaction.lstm_hidden", interaction.lstm_hidden),
      HOPOSE_FIELD("interaction.lstm_layers", interaction.lstm_layers),
      HOPOSE_FIELD("stage2.lr", stage2.lr),
      HOPOSE_FIELD("stage2.epochs", stage2.epochs),
      HOPOSE_FIELD("stage2.drop_epochs", stage2.drop_epochs),
      HOPOSE_FIELD("stage2.lr_factor", stage2.lr_factor),
      HOPOSE_FIELD("stage2.batch_size", stage2.batch_size),
      HOPOSE_FIELD("stage2.momentum", stage2.momentum),
      HOPOSE_FIELD("stage2.clip_norm", stage2.clip_norm),
      HOPOSE_FIELD("stage2.train_baseline", stage2.train_baseline),
      HOPOSE_FIELD("stage2.inputs", stage2.inputs),
      HOPOSE_FIELD("stage2.augment_copies", stage2.augment_copies),
      HOPOSE_FIELD("data.dir", data.dir),
      HOPOSE_FIELD("data.train_frames", data.train_frames),
      HOPOSE_FIELD("data.test_frames", data.test_frames),
      HOPOSE_FIELD("data.train_sequences", data.train_sequences),
      HOPOSE_FIELD("data.test_sequences", data.test_sequences),
      HOPOSE_FIELD("output.dir", output_dir),
  };
  return table;
}

#undef HOPOSE_FIELD

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

void check(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::ConfigOutOfRange, message);
}

void check_schedule(const std::vector<int>& drops, int epochs, const char* what) {
  for (std::size_t i = 0; i < drops.size(); ++i) {
    check(drops[i] > 0 && drops[i] < epochs, std::string(what) + " drop epochs must lie in (0, epochs)");
    check(i == 0 || drops[i] > drops[i - 1], std::string(what) + " drop epochs must be increasing");
  }
}

bool model_key(const std::string& key) {
  for (const char* prefix : {"grid.", "camera.", "labels.", "image.", "backbone."}) {
    if (key.rfind(prefix, 0) == 0) return true;
  }
  return false;
}

}  // namespace

void RunConfig::validate() const {
  grid.validate();
  camera.validate();
  labels.validate();
  loss.validate();
  check(image_channels == 1 || image_channels == 3, "image.channels must be 1 or 3");
  check(optim.lr > 0.0 && optim.epochs >= 1 && optim.batch_size >= 1, "optim: lr, epochs and batch size must be > 0");
  check(optim.lr_factor > 0.0 && optim.momentum >= 0.0 && optim.momentum < 1.0, "optim: bad lr_factor or momentum");
  check(optim.clip_norm >= 0.0, "optim.clip_norm must be >= 0");
  check_schedule(optim.drop_epochs, optim.epochs, "optim");
  check(augment.photometric >= 0.0 && augment.translation >= 0.0 && augment.translation < 0.5,
        "augment amounts out of range");
  check(stage2.lr > 0.0 && stage2.epochs >= 1 && stage2.batch_size >= 1, "stage2: lr, epochs, batch size must be > 0");
  check(stage2.momentum >= 0.0 && stage2.momentum < 1.0 && stage2.clip_norm >= 0.0, "stage2: bad momentum or clip");
  check_schedule(stage2.drop_epochs, stage2.epochs, "stage2");
  check(stage2.augment_copies >= 0, "stage2.augment_copies must be >= 0");
  check(stage2.inputs == "predicted" || stage2.inputs == "ground_truth",
        "stage2.inputs must be 'predicted' or 'ground_truth'");
  check(data.train_frames >= 1 && data.test_frames >= 1 && data.train_sequences >= 1 && data.test_sequences >= 1,
        "data counts must be >= 1");
  synth_config().validate();
  network_config().validate();
  interaction_config().validate();
}

std::filesystem::path RunConfig::data_path() const { return data.dir.is_absolute() ? data.dir : base_dir / data.dir; }

std::filesystem::path RunConfig::output_path() const {
  return output_dir.is_absolute() ? output_dir : base_dir / output_dir;
}

SynthConfig RunConfig::synth_config() const {
  SynthConfig s = synth;
  s.grid = grid;
  s.camera = camera;
  s.labels = labels;
  s.image_channels = image_channels;
  return s;
}

NetworkConfig RunConfig::network_config() const {
  NetworkConfig n;
  n.grid = grid;
  n.labels = labels;
  n.backbone = backbone;
  n.backbone.in_channels = image_channels;
  return n;
}

InteractionConfig RunConfig::interaction_config() const {
  InteractionConfig c = interaction;
  c.num_actions = labels.num_actions;
  c.num_objects = labels.num_objects;
  c.num_interactions = labels.num_interactions;
  return c;
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "paper") {
    c.backbone.layers = {{16, 3, 2}, {32, 3, 2}, {64, 3, 2}, {128, 3, 2}, {256, 3, 2}};
    c.synth.depth_lo = 0.2;
    c.synth.depth_hi = 0.7;
    c.synth.pixel_margin = 16.0;
    return c;
  }
  if (name == "toy") {
    c.grid = GridSpec{7, 7, 3, 16.0, 16.0, 0.15, 0.3, 2.0, 37.5, 0.075};
    c.camera = CameraIntrinsics{120.0, 120.0, 56.0, 56.0};
    c.labels = LabelSpec{21, 4, 3, 12};
    c.backbone.layers = {{16, 3, 2}, {32, 3, 2}, {48, 3, 2}, {64, 3, 2}, {64, 3, 1}, {64, 3, 1}};
    c.optim = OptimConfig{0.005, 100, {80, 92}, 0.1, 8, 0.9, 5.0};
    c.augment = AugmentConfig{0.0, 0.1};
    c.synth.depth_lo = 0.35;
    c.synth.depth_hi = 0.7;
    c.synth.pixel_margin = 8.0;
    // milder tilt and clearly different shapes keep the object classes
    // separable from 200 short sequences
    c.synth.object_rotation_deg = 45.0;
    c.synth.object_extents = {Vec3(0.015, 0.015, 0.015), Vec3(0.07, 0.012, 0.012), Vec3(0.05, 0.05, 0.008)};
    c.interaction.mlp_hidden = 64;
    c.interaction.lstm_hidden = 64;
    c.stage2 = Stage2Config{};
    c.stage2.augment_copies = 8;
    c.interaction.use_object_probs = true;
    c.data = DataConfig{"data", 500, 100, 200, 96};
    return c;
  }
  throw Error(ErrorCode::ConfigError, "unknown preset '" + name + "' (expected 'paper' or 'toy')");
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::string preset = "paper";
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!find_field(key)) throw Error(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    for (const auto& [k, v] : entries) {
      if (k == key) throw Error(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    if (key == "preset") preset = value;
    entries.emplace_back(key, value);
  }
  RunConfig cfg = preset_config(preset);
  for (const auto& [k, v] : entries) find_field(k)->set(cfg, v);
  cfg.base_dir = base_dir;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto base = path.parent_path();
  if (base.empty()) base = ".";
  return parse_config(ss.str(), base);
}

std::map<std::string, std::string> config_entries(const RunConfig& cfg) {
  std::map<std::string, std::string> out;
  for (const auto& f : fields()) out[f.key] = f.get(cfg);
  return out;
}

std::string canonical_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
  return out;
}

void save_config(const std::filesystem::path& path, const RunConfig& cfg) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << canonical_config(cfg);
}

std::string config_hash(const RunConfig& cfg) { return sha256_hex(canonical_config(cfg)); }

std::string model_hash(const RunConfig& cfg) {
  std::string text;
  for (const auto& [k, v] : config_entries(cfg)) {
    if (model_key(k)) text += k + " = " + v + "\n";
  }
  return sha256_hex(text);
}

std::string sha256_hex(const std::string& data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoError, "SHA-256 computation failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

}  // namespace hopose
