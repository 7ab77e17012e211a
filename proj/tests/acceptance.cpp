// Runs the nine acceptance checks and prints one PASS/FAIL line per check.
// Usage: hopose_acceptance [--work-dir DIR]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Geometry>

#include "hopose/checkpoint.hpp"
#include "hopose/codec.hpp"
#include "hopose/error.hpp"
#include "hopose/pipeline.hpp"
#include "hopose/rigidpose.hpp"
#include "json.hpp"

using namespace hopose;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kRunSeed = 7;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

Outcome codec_round_trip() {
  const RunConfig cfg = preset_config("toy");
  SynthConfig sc = cfg.synth_config();
  std::vector<SceneFrame> scenes;
  for (std::uint64_t i = 0; i < 1000; ++i) scenes.push_back(sample_scene(derive_seed(11, i), sc));
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (const auto& s : scenes) {
    const TargetTensor t = encode_frame(s, cfg.grid, cfg.labels, cfg.camera);
    const FramePrediction p = prune(decode_grid(target_to_raw(t), cfg.camera));
    for (std::size_t j = 0; j < kNumControlPoints; ++j) {
      worst = std::max(worst, (p.hand.points[j] - s.hand[j]).norm());
      worst = std::max(worst, (p.object.points[j] - s.object[j]).norm());
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-9 && secs < 5.0,
          "1000 scenes, max point error " + fmt(worst) + " m, encode+decode " + fmt(secs, 3) + " s"};
}

Outcome confidence_law() {
  const double dth = 75.0, alpha = 2.0;
  const double at0 = confidence_component(0.0, dth, alpha);
  const double at_th = confidence_component(dth, dth, alpha);
  const double beyond = confidence_component(3.0 * dth, dth, alpha);
  const double half = confidence_component(dth / 2.0, dth, alpha);
  const double expect = 1.0 / (std::numbers::e + 1.0);
  bool monotone = true;
  double prev = at0;
  for (int i = 1; i < 100; ++i) {
    const double c = confidence_component(dth * i / 99.0, dth, alpha);
    monotone = monotone && c < prev;
    prev = c;
  }
  const bool ok = at0 == 1.0 && at_th == 0.0 && beyond == 0.0 && std::abs(half - expect) < 1e-9 && monotone;
  return {ok, "c(0)=" + fmt(at0) + " c(dth)=" + fmt(at_th) + " c(dth/2)-1/(e+1)=" + fmt(half - expect) +
                  (monotone ? ", strictly decreasing on 100 points" : ", NOT monotone")};
}

Outcome procrustes_exactness() {
  std::mt19937_64 rng(derive_seed(kRunSeed, 3));
  std::normal_distribution<double> n(0.0, 1.0);
  double worst_rot = 0.0, worst_t = 0.0, worst_det = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Vec3> src(kNumControlPoints), dst;
    for (auto& p : src) p = 0.1 * Vec3(n(rng), n(rng), n(rng));
    const Pose6D P{random_rotation(rng), Vec3(n(rng), n(rng), n(rng))};
    for (const auto& p : src) dst.push_back(P.apply(p));
    const Pose6D got = procrustes_align(src, dst);
    worst_rot = std::max(worst_rot, rotation_angle_between(got.R, P.R));
    worst_t = std::max(worst_t, (got.t - P.t).norm());
    worst_det = std::max(worst_det, std::abs(got.R.determinant() - 1.0));
  }
  // mirrored targets: the best proper rotation must still have det +1
  const ControlPointSet box = cuboid_control_points(Cuboid{Vec3(0.05, 0.03, 0.02)});
  for (int trial = 0; trial < 1000; ++trial) {
    Mat3 mirror = Mat3::Identity();
    mirror(trial % 3, trial % 3) = -1.0;
    const Mat3 R = random_rotation(rng);
    ControlPointSet dst = box;
    for (auto& p : dst.points) p = R * mirror * p + Vec3(0, 0, 0.5);
    worst_det = std::max(worst_det, std::abs(procrustes_align(box, dst).R.determinant() - 1.0));
  }
  return {worst_rot < 1e-9 && worst_t < 1e-9 && worst_det < 1e-9,
          "1000 trials: rotation error " + fmt(worst_rot) + " rad, translation error " + fmt(worst_t) +
              " m; |det-1| " + fmt(worst_det) + " incl. 1000 mirrored"};
}

Outcome gradient_fidelity() {
  const RunConfig cfg = preset_config("toy");
  const auto t0 = Clock::now();
  const Network net(cfg.network_config());
  const ParamSet p = net.init_params(derive_seed(kRunSeed, 4));
  const SynthConfig sc = cfg.synth_config();
  const SceneFrame frame = sample_scene(derive_seed(kRunSeed, 5), sc);
  const TargetTensor target = encode_frame(frame, cfg.grid, cfg.labels, cfg.camera);
  struct Term {
    const char* name;
    LossWeights w;
  };
  auto weights = [&](double pose, double conf, double act, double obj) {
    LossWeights w = cfg.loss;
    w.pose *= pose;
    w.conf_obj *= conf;
    w.conf_noobj *= conf;
    w.actcls *= act;
    w.objcls *= obj;
    return w;
  };
  const Term terms[] = {{"pose", weights(1, 0, 0, 0)},
                        {"conf", weights(0, 1, 0, 0)},
                        {"act", weights(0, 0, 1, 0)},
                        {"obj", weights(0, 0, 0, 1)},
                        {"total", weights(1, 1, 1, 1)}};
  bool ok = true;
  std::string detail;
  std::uint64_t k = 0;
  for (const auto& t : terms) {
    GradCheckOptions o;
    o.epsilon = 1e-4;
    o.num_params = 200;
    o.seed = derive_seed(kRunSeed, 40 + k++);
    const GradCheckReport r = grad_check(net, p, frame.raster, target, t.w, o);
    ok = ok && r.max_rel_error < 1e-4 && r.checked == o.num_params;
    detail += std::string(t.name) + " " + fmt(r.max_rel_error, 2) + " ";
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 60.0;
  return {ok, "max rel error per term: " + detail + "(" + fmt(secs, 3) + " s, eps 1e-4, 200 params each)"};
}

struct RunArtifacts {
  fs::path dir;
  double stage1_seconds = 0.0;
  double stage2_seconds = 0.0;
  nlohmann::json summary;
};

RunArtifacts full_run(const fs::path& dir) {
  fs::remove_all(dir);
  RunArtifacts a;
  a.dir = dir;
  run_gen_data(kRunSeed, "toy", dir, &std::cerr);
  auto t0 = Clock::now();
  run_train(dir / "config.cfg", 1, &std::cerr);
  a.stage1_seconds = seconds_since(t0);
  t0 = Clock::now();
  run_train(dir / "config.cfg", 2, &std::cerr);
  a.stage2_seconds = seconds_since(t0);
  run_eval(dir / "config.cfg", dir / "run", dir, dir / "report", &std::cerr);
  std::ifstream in(dir / "report" / "summary.json");
  a.summary = nlohmann::json::parse(in);
  return a;
}

Outcome toy_pose(const RunArtifacts& a) {
  const auto& s = a.summary;
  const double diag_mm = 1000.0 * s["cell_diagonal_m"].get<double>();
  const double mje = s["mean_joint_error_mm"].get<double>();
  const double pck = s["pck_at_cell_diagonal"].get<double>();
  const int frames = s["frames"].get<int>();
  const bool ok = mje < 0.2 * diag_mm && pck >= 0.9 && a.stage1_seconds < 1800.0 && frames == 100;
  return {ok, "mean joint error " + fmt(mje) + " mm (limit " + fmt(0.2 * diag_mm) + "), PCK@cell " + fmt(pck) +
                  " on " + std::to_string(frames) + " frames, stage 1 " + fmt(a.stage1_seconds, 4) + " s"};
}

Outcome toy_interaction(const RunArtifacts& a) {
  const auto& s = a.summary;
  if (s["sequence_accuracy"].is_null() || s["baseline_sequence_accuracy"].is_null()) {
    return {false, "report lacks sequence accuracies"};
  }
  const double acc = s["sequence_accuracy"].get<double>();
  const double base = s["baseline_sequence_accuracy"].get<double>();
  return {acc >= 0.9 && acc >= base, "held-out accuracy " + fmt(acc) + " vs plain recurrent baseline " + fmt(base) +
                                         " on " + std::to_string(s["sequences"].get<int>()) + " sequences, stage 2 " +
                                         fmt(a.stage2_seconds, 4) + " s"};
}

Outcome pnp_ordering(const RunArtifacts& a) {
  bool ok = !a.summary["pnp_comparison"].empty();
  std::string detail;
  for (const auto& row : a.summary["pnp_comparison"]) {
    const double pr = row["procrustes_add_m"].get<double>();
    const double pn = row["pnp_add_m"].get<double>();
    ok = ok && pr <= pn && row["trials"].get<int>() + row["pnp_failures"].get<int>() == 500;
    detail += fmt(row["sigma_px"].get<double>(), 2) + "px " + fmt(1000 * pr, 3) + "/" + fmt(1000 * pn, 3) + " mm; ";
  }
  const auto& op = a.summary["object_pose"];
  detail += "on predictions " + fmt(1000 * op["mean_add_procrustes_m"].get<double>(), 3) + "/" +
            fmt(1000 * op["mean_add_pnp_m"].get<double>(), 3) + " mm";
  return {ok, "ADD procrustes/pnp, 500 paired trials per level: " + detail};
}

Outcome importance_contract(const RunArtifacts& a) {
  const Checkpoint ck = read_checkpoint(a.dir / "run" / kInteractionCheckpoint);
  const RunConfig cfg = parse_config(ck.header.config_text);
  InteractionModel model(cfg.interaction_config());
  model.set_params(ck.params);
  const WeightImportance w = weight_importance(model);
  double sum = 0.0, parts = 0.0, fingers = 0.0;
  bool nonneg = true;
  for (double v : w.per_joint) {
    sum += v;
    nonneg = nonneg && v >= 0.0;
  }
  for (double v : w.per_part) parts += v;
  for (double v : w.per_finger) fingers += v;
  // wrist is joint 0; fingers cover the rest
  const bool ok = w.per_joint.size() == 21 && nonneg && std::abs(sum - 1.0) < 1e-9 && std::abs(parts - 1.0) < 1e-9 &&
                  std::abs(fingers + w.per_joint[0] - 1.0) < 1e-9;
  return {ok, "21 joints, sum " + fmt(sum, 17) + ", parts wrist/MCP/PIP/DIP/TIP " + fmt(w.per_part[0], 3) + "/" +
                  fmt(w.per_part[1], 3) + "/" + fmt(w.per_part[2], 3) + "/" + fmt(w.per_part[3], 3) + "/" +
                  fmt(w.per_part[4], 3)};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).generic_string()] = {std::istreambuf_iterator<char>(in),
                                                           std::istreambuf_iterator<char>()};
  }
  return out;
}

Outcome determinism(const RunArtifacts& a, const RunArtifacts& b) {
  const auto ta = tree(a.dir);
  const auto tb = tree(b.dir);
  std::size_t differing = 0;
  std::string first;
  for (const auto& [path, bytes] : ta) {
    const auto it = tb.find(path);
    if (it == tb.end() || it->second != bytes) {
      if (differing++ == 0) first = path;
    }
  }
  differing += tb.size() > ta.size() ? tb.size() - ta.size() : 0;
  const bool ok = differing == 0 && ta.size() == tb.size() && ta.count("run/backbone.ckpt") &&
                  ta.count("run/interaction.ckpt") && ta.count("report/summary.json");
  return {ok, std::to_string(ta.size()) + " files (dataset, checkpoints, report) compared, " +
                  std::to_string(differing) + " differ" + (first.empty() ? "" : ", first " + first)};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = "acceptance_work";
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--work-dir" && i + 1 < argc) {
      work = argv[++i];
    } else {
      std::cerr << "usage: hopose_acceptance [--work-dir DIR]\n";
      return 2;
    }
  }
  fs::create_directories(work);

  // ctest hides stdout of passing tests, so keep a copy next to the artifacts
  std::ofstream results(work / "results.txt");
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw ") + e.what()};
    }
    failures += !o.pass;
    std::ostringstream line;
    line << "[" << id << "] " << (o.pass ? "PASS" : "FAIL") << " " << name << ": " << o.detail;
    std::cout << line.str() << std::endl;
    results << line.str() << std::endl;
  };

  report(1, "codec round trip", codec_round_trip);
  report(2, "confidence law", confidence_law);
  report(3, "procrustes exactness", procrustes_exactness);
  report(4, "gradient fidelity", gradient_fidelity);

  std::optional<RunArtifacts> run_a, run_b;
  std::string run_error;
  try {
    run_a = full_run(work / "run_a");
    run_b = full_run(work / "run_b");
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  auto needs = [&](const std::optional<RunArtifacts>& r, const std::function<Outcome()>& f) {
    return [&r, f, &run_error]() -> Outcome {
      if (!r) return {false, "toy run failed: " + run_error};
      return f();
    };
  };
  report(5, "toy end-to-end pose", needs(run_a, [&] { return toy_pose(*run_a); }));
  report(6, "toy interaction recognition", needs(run_a, [&] { return toy_interaction(*run_a); }));
  report(7, "direct 3D vs PnP ordering", needs(run_a, [&] { return pnp_ordering(*run_a); }));
  report(8, "weight importance contract", needs(run_a, [&] { return importance_contract(*run_a); }));
  report(9, "determinism", needs(run_b, [&] { return determinism(*run_a, *run_b); }));

  const std::string verdict =
      failures == 0 ? "all 9 checks passed" : std::to_string(failures) + " of 9 checks failed";
  std::cout << verdict << std::endl;
  results << verdict << std::endl;
  return failures == 0 ? 0 : 1;
}
