#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "doctest.h"
#include "hopose/checkpoint.hpp"
#include "hopose/error.hpp"
#include "hopose/pipeline.hpp"
#include "hopose/rigidpose.hpp"

using namespace hopose;
namespace fs = std::filesystem;

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

// toy geometry with very little data and only a couple of epochs
RunConfig small_config() {
  RunConfig c = preset_config("toy");
  c.seed = 5;
  c.data = DataConfig{".", 12, 6, 8, 4};
  c.optim.epochs = 2;
  c.optim.drop_epochs = {1};
  c.optim.batch_size = 4;
  c.stage2.epochs = 2;
  c.stage2.drop_epochs = {};
  c.stage2.batch_size = 4;
  c.stage2.augment_copies = 1;
  c.interaction.mlp_hidden = 8;
  c.interaction.lstm_hidden = 8;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// relative path -> bytes of every regular file below `root`
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  }
  return out;
}

}  // namespace

TEST_CASE("dataset generation is deterministic and survives a disk round trip") {
  const RunConfig cfg = small_config();
  const Dataset a = generate_dataset(cfg);
  CHECK(a.train_frames.size() == 12);
  CHECK(a.test_frames.size() == 6);
  CHECK(a.train_sequences.size() == 8);
  CHECK(a.test_sequences.size() == 4);
  for (const auto& s : a.train_sequences) {
    CHECK(static_cast<int>(s.frames.size()) == cfg.synth.sequence_length);
    CHECK(s.interaction == s.action * cfg.labels.num_objects + s.object_class);
  }
  const fs::path d1 = fresh_dir("hopose_pipe_ds1");
  const fs::path d2 = fresh_dir("hopose_pipe_ds2");
  const fs::path d3 = fresh_dir("hopose_pipe_ds3");
  write_dataset(d1, a);
  write_dataset(d2, generate_dataset(cfg));
  CHECK(tree(d1) == tree(d2));
  write_dataset(d3, load_dataset(d1, cfg.labels));
  CHECK(tree(d1) == tree(d3));

  RunConfig other = cfg;
  other.seed = 6;
  const Dataset b = generate_dataset(other);
  CHECK_FALSE(b.train_frames[0].raster.data == a.train_frames[0].raster.data);
  for (const auto& d : {d1, d2, d3}) fs::remove_all(d);
}

TEST_CASE("oracle predictions score perfectly") {
  const RunConfig cfg = small_config();
  const Dataset ds = generate_dataset(cfg);
  std::vector<FramePrediction> preds;
  for (const auto& f : ds.test_frames) preds.push_back(oracle_prediction(f, cfg));
  const EvalReport r = evaluate_frames(cfg, ds.test_frames, preds);
  CHECK(r.frames == 6);
  CHECK(r.mean_joint_error_mm < 1e-9);
  CHECK(r.pck_at_cell == 1.0);
  CHECK(r.action_accuracy == 1.0);
  CHECK(r.object_accuracy == 1.0);
  CHECK(r.frame_interaction_accuracy == 1.0);
  CHECK(r.mean_add_procrustes < 1e-9);
  CHECK(r.mean_add_pnp < 1e-6);
  CHECK(r.mean_proj2d_procrustes < 1e-6);
  CHECK(r.pnp_failures == 0);
  CHECK(r.cell_diagonal_m == doctest::Approx(cell_diagonal_m(cfg.grid, cfg.camera)));
}

TEST_CASE("procrustes ADD grows linearly with small point noise") {
  // one fixed noise draw per trial, scaled by sigma: ADD(2s) / ADD(s) should be 2
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 1.0);
  const ControlPointSet model = cuboid_control_points(Cuboid{Vec3(0.06, 0.03, 0.02)});
  const std::vector<Vec3> pts(model.points.begin(), model.points.end());
  double add1 = 0, add2 = 0;
  for (int t = 0; t < 200; ++t) {
    const Pose6D pose{rotation_from_axis_angle(Vec3(n(rng), n(rng), n(rng)), 1.0), Vec3(0, 0, 0.5)};
    std::vector<Vec3> dir;
    for (std::size_t i = 0; i < 21; ++i) dir.emplace_back(n(rng), n(rng), n(rng));
    for (int k = 1; k <= 2; ++k) {
      ControlPointSet noisy = transform_points(pose, model);
      for (std::size_t i = 0; i < 21; ++i) noisy[i] += 1e-4 * k * dir[i];
      (k == 1 ? add1 : add2) += add_metric(procrustes_align(model, noisy), pose, pts);
    }
  }
  CHECK(add2 / add1 == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("noise sweep: paired levels, direct 3D never worse than PnP") {
  const RunConfig cfg = small_config();
  const std::vector<double> sigmas = {0.0, 1.0, 2.0, 4.0};
  const auto rows = pose_noise_sweep(cfg.synth_config(), sigmas, 100, 3);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].procrustes_add < 1e-9);
  CHECK(rows[0].pnp_add < 1e-6);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].trials + rows[i].pnp_failures == 100);
    CHECK(rows[i].procrustes_add <= rows[i].pnp_add);
    if (i > 0) {
      CHECK(rows[i].procrustes_add > rows[i - 1].procrustes_add);
      CHECK(rows[i].sigma_m == doctest::Approx(rows[1].sigma_m * sigmas[i]));
    }
  }
  const auto again = pose_noise_sweep(cfg.synth_config(), sigmas, 100, 3);
  CHECK(again[3].pnp_add == rows[3].pnp_add);
}

TEST_CASE("checkpoint round trip and corruption") {
  const fs::path d = fresh_dir("hopose_pipe_ck");
  const RunConfig cfg = small_config();
  const Network net(cfg.network_config());
  ParamSet p = net.init_params(4);
  round_to_float32(p);
  CheckpointHeader h;
  h.kind = "backbone";
  h.config_hash = config_hash(cfg);
  h.model_hash = model_hash(cfg);
  h.epoch = 2;
  h.seed = 5;
  write_checkpoint(d / "a.ckpt", h, p);
  const Checkpoint back = read_checkpoint(d / "a.ckpt");
  CHECK(back.params == p);
  CHECK(back.header.kind == "backbone");
  CHECK(back.header.model_hash == h.model_hash);
  CHECK(back.header.epoch == 2);
  write_checkpoint(d / "b.ckpt", h, back.params);
  CHECK(slurp(d / "a.ckpt") == slurp(d / "b.ckpt"));

  std::string bytes = slurp(d / "a.ckpt");
  std::ofstream(d / "trailing.ckpt", std::ios::binary) << bytes << "x";
  CHECK(error_code([&] { read_checkpoint(d / "trailing.ckpt"); }) == ErrorCode::IoError);
  std::ofstream(d / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  CHECK(error_code([&] { read_checkpoint(d / "short.ckpt"); }) == ErrorCode::IoError);
  std::ofstream(d / "junk.ckpt", std::ios::binary) << "not a checkpoint at all";
  CHECK(error_code([&] { read_checkpoint(d / "junk.ckpt"); }) == ErrorCode::IoError);
  CHECK(error_code([&] { read_checkpoint(d / "missing.ckpt"); }) == ErrorCode::MissingArtifact);
  fs::remove_all(d);
}

TEST_CASE("train, evaluate and guard the frozen backbone end to end") {
  const fs::path d = fresh_dir("hopose_pipe_run");
  RunConfig cfg = small_config();
  cfg.base_dir = d;
  cfg.data.dir = ".";
  cfg.output_dir = "run";
  write_dataset(d, generate_dataset(cfg));
  save_config(d / "config.cfg", cfg);

  run_train(d / "config.cfg", 1);
  const std::string backbone_bytes = slurp(d / "run" / kBackboneCheckpoint);
  CHECK(fs::exists(d / "run" / "stage1_manifest.json"));
  run_train(d / "config.cfg", 2);
  CHECK(slurp(d / "run" / kBackboneCheckpoint) == backbone_bytes);
  CHECK(fs::exists(d / "run" / kInteractionCheckpoint));
  CHECK(fs::exists(d / "run" / kBaselineCheckpoint));

  run_eval(d / "config.cfg", d / "run", d, d / "report_a");
  run_eval(d / "config.cfg", d / "run", d, d / "report_b");
  CHECK(tree(d / "report_a") == tree(d / "report_b"));
  CHECK(fs::exists(d / "report_a" / "summary.json"));
  CHECK(fs::exists(d / "report_a" / "manifest.json"));

  const std::string imp = run_importance(d / "run" / kInteractionCheckpoint);
  CHECK(imp.find("per_joint") != std::string::npos);

  // a retrained backbone no longer matches the interaction checkpoints
  RunConfig other = cfg;
  other.seed = 99;
  save_config(d / "config.cfg", other);
  run_train(d / "config.cfg", 1);
  CHECK(error_code([&] { run_eval(d / "config.cfg", d / "run", d, d / "report_c"); }) == ErrorCode::HashMismatch);

  // a backbone trained for another grid is refused
  RunConfig wide = cfg;
  wide.grid.alpha = 3.0;
  save_config(d / "config.cfg", wide);
  CHECK(error_code([&] { run_train(d / "config.cfg", 2); }) == ErrorCode::HashMismatch);
  fs::remove_all(d);
}
