#include "hopose/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "hopose/error.hpp"
#include "json.hpp"

namespace hopose {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Seed streams; each consumer derives its own generator from the run seed.
constexpr std::uint64_t kStreamTrainFrames = 11;
constexpr std::uint64_t kStreamTestFrames = 12;
constexpr std::uint64_t kStreamTrainSequences = 13;
constexpr std::uint64_t kStreamTestSequences = 14;
constexpr std::uint64_t kStreamBackboneInit = 101;
constexpr std::uint64_t kStreamStage1Shuffle = 102;
constexpr std::uint64_t kStreamAugment = 103;
constexpr std::uint64_t kStreamInteractionInit = 201;
constexpr std::uint64_t kStreamInteractionShuffle = 202;
constexpr std::uint64_t kStreamBaselineInit = 203;
constexpr std::uint64_t kStreamBaselineShuffle = 204;
constexpr std::uint64_t kStreamStage2Augment = 205;
constexpr std::uint64_t kStreamNoiseSweep = 301;

const std::vector<double> kSweepSigmasPx = {0.5, 1.0, 2.0, 4.0, 8.0};
constexpr int kSweepTrials = 500;

void say(std::ostream* log, const std::string& line) {
  if (log) *log << line << std::endl;
}

std::vector<SceneFrame> flatten(std::span<const FrameSequence> sequences) {
  std::vector<SceneFrame> out;
  for (const auto& s : sequences) out.insert(out.end(), s.frames.begin(), s.frames.end());
  return out;
}

std::vector<double> finite_values(const std::vector<double>& v) {
  std::vector<double> out;
  std::copy_if(v.begin(), v.end(), std::back_inserter(out), [](double x) { return std::isfinite(x); });
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (const double x : v) s += x;
  return s / static_cast<double>(v.size());
}

ojson curve_json(const PckCurve& c) { return {{"thresholds", c.thresholds}, {"fractions", c.fractions}}; }

ojson importance_object(const WeightImportance& imp) {
  static const char* parts[] = {"wrist", "mcp", "pip", "dip", "tip"};
  static const char* fingers[] = {"thumb", "index", "middle", "ring", "pinky"};
  ojson j;
  j["per_joint"] = imp.per_joint;
  ojson p, f;
  for (int i = 0; i < 5; ++i) {
    p[parts[i]] = imp.per_part[i];
    f[fingers[i]] = imp.per_finger[i];
  }
  j["per_part"] = p;
  j["per_finger"] = f;
  return j;
}

ojson points_json(const ControlPointSet& s) {
  ojson arr = ojson::array();
  for (const auto& p : s.points) arr.push_back({p.x(), p.y(), p.z()});
  return arr;
}

ojson slot_json(const DecodedSlot& s) {
  return {{"confidence", s.confidence}, {"class", s.argmax_class()}, {"probs", s.probs}, {"points", points_json(s.points)}};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

CheckpointHeader make_header(const RunConfig& cfg, const std::string& kind, int epoch) {
  CheckpointHeader h;
  h.kind = kind;
  h.config_hash = config_hash(cfg);
  h.model_hash = model_hash(cfg);
  h.epoch = epoch;
  h.seed = cfg.seed;
  h.config_text = canonical_config(cfg);
  return h;
}

Checkpoint load_backbone(const RunConfig& cfg, const Network& net, const fs::path& path) {
  Checkpoint ck = read_checkpoint(path);
  if (ck.header.kind != "backbone") {
    throw Error(ErrorCode::ConfigError, path.string() + " holds a '" + ck.header.kind + "' checkpoint, not a backbone");
  }
  if (ck.header.model_hash != model_hash(cfg)) {
    throw Error(ErrorCode::HashMismatch, "backbone checkpoint " + path.string() +
                                             " was trained with a different grid/camera/labels/backbone config");
  }
  net.check_params(ck.params);
  return ck;
}

std::optional<InteractionModel> load_interaction(const RunConfig& cfg, const fs::path& path, bool baseline,
                                                 const std::string& backbone_hash) {
  if (!fs::exists(path)) return std::nullopt;
  Checkpoint ck = read_checkpoint(path);
  if (ck.header.backbone_hash != backbone_hash) {
    throw Error(ErrorCode::HashMismatch, path.string() + " was trained on a different backbone checkpoint");
  }
  InteractionConfig ic = cfg.interaction_config();
  if (baseline) ic = baseline_config(ic);
  InteractionModel model(ic);
  model.set_params(std::move(ck.params));
  return model;
}

std::vector<fs::path> list_files(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

Dataset generate_dataset(const RunConfig& cfg) {
  cfg.validate();
  const SynthConfig sc = cfg.synth_config();
  const LabelSpec& labels = cfg.labels;
  auto seed_for = [&](std::uint64_t stream, int i) {
    return derive_seed(derive_seed(cfg.seed, stream), static_cast<std::uint64_t>(i));
  };
  Dataset d;
  int next_frame = 0;
  int next_sequence = 0;
  auto frames = [&](std::uint64_t stream, int count, std::vector<SceneFrame>& out) {
    for (int i = 0; i < count; ++i) {
      SceneFrame f = sample_scene(seed_for(stream, i), sc);
      quantize_8bit(f.raster);
      f.frame_id = next_frame++;
      out.push_back(std::move(f));
    }
  };
  auto sequences = [&](std::uint64_t stream, int count, std::vector<FrameSequence>& out) {
    for (int i = 0; i < count; ++i) {
      const int k = i % labels.num_interactions;
      FrameSequence s = sample_sequence(seed_for(stream, i), k / labels.num_objects, k % labels.num_objects, sc);
      s.sequence_id = next_sequence++;
      for (auto& f : s.frames) {
        quantize_8bit(f.raster);
        f.frame_id = next_frame++;
        f.sequence_id = s.sequence_id;
      }
      out.push_back(std::move(s));
    }
  };
  frames(kStreamTrainFrames, cfg.data.train_frames, d.train_frames);
  frames(kStreamTestFrames, cfg.data.test_frames, d.test_frames);
  sequences(kStreamTrainSequences, cfg.data.train_sequences, d.train_sequences);
  sequences(kStreamTestSequences, cfg.data.test_sequences, d.test_sequences);
  return d;
}

void write_dataset(const fs::path& dir, const Dataset& data) {
  fs::create_directories(dir);
  write_frames(dir / kTrainFramesFile, data.train_frames);
  write_frames(dir / kTestFramesFile, data.test_frames);
  write_frames(dir / kTrainSequencesFile, flatten(data.train_sequences));
  write_frames(dir / kTestSequencesFile, flatten(data.test_sequences));
}

Dataset load_dataset(const fs::path& dir, const LabelSpec& labels, bool load_rasters) {
  Dataset d;
  d.train_frames = read_frames(dir / kTrainFramesFile, load_rasters);
  d.test_frames = read_frames(dir / kTestFramesFile, load_rasters);
  d.train_sequences = group_sequences(read_frames(dir / kTrainSequencesFile, load_rasters), labels);
  d.test_sequences = group_sequences(read_frames(dir / kTestSequencesFile, load_rasters), labels);
  return d;
}

FramePrediction predict_frame(const Network& net, const ParamSet& params, const Raster& image,
                              const CameraIntrinsics& k) {
  const auto cells = decode_grid(net.forward(params, image), k);
  return prune(cells);
}

FramePrediction oracle_prediction(const SceneFrame& frame, const RunConfig& cfg) {
  return prediction_from_target(encode_frame(frame, cfg.grid, cfg.labels, cfg.camera), cfg.camera);
}

Stage1Result train_stage1(const RunConfig& cfg, std::span<const SceneFrame> train, const Stage1Progress& progress) {
  cfg.validate();
  if (train.empty()) throw Error(ErrorCode::MissingArtifact, "stage 1 needs at least one training frame");
  const Network net(cfg.network_config());
  const SynthConfig sc = cfg.synth_config();
  Stage1Result result;
  result.params = net.init_params(derive_seed(cfg.seed, kStreamBackboneInit));

  std::vector<TrainingSample> base;
  base.reserve(train.size());
  for (const auto& f : train) base.push_back({f.raster, encode_frame(f, cfg.grid, cfg.labels, cfg.camera)});

  const int max_du = static_cast<int>(std::floor(cfg.augment.translation * cfg.grid.image_width()));
  const int max_dv = static_cast<int>(std::floor(cfg.augment.translation * cfg.grid.image_height()));
  const bool augment = max_du > 0 || max_dv > 0 || cfg.augment.photometric > 0.0;

  TrainOptions opts;
  opts.camera = cfg.camera;
  opts.batch_size = cfg.optim.batch_size;
  opts.online_confidence = cfg.online_confidence;
  opts.momentum = cfg.optim.momentum;
  opts.clip_norm = cfg.optim.clip_norm;
  ParamSet velocity;
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, kStreamStage1Shuffle));

  for (int epoch = 0; epoch < cfg.optim.epochs; ++epoch) {
    const double lr = scheduled_learning_rate(cfg.optim.lr, cfg.optim.drop_epochs, epoch, cfg.optim.lr_factor);
    std::vector<TrainingSample> augmented;
    if (augment) {
      std::mt19937_64 arng(derive_seed(derive_seed(cfg.seed, kStreamAugment), static_cast<std::uint64_t>(epoch)));
      augmented.reserve(train.size());
      for (const auto& f : train) {
        const int du = std::uniform_int_distribution<int>(-max_du, max_du)(arng);
        const int dv = std::uniform_int_distribution<int>(-max_dv, max_dv)(arng);
        SceneFrame moved;
        const SceneFrame& use = (du || dv) && translate_frame(f, du, dv, sc, moved) ? moved : f;
        TrainingSample s{use.raster, encode_frame(use, cfg.grid, cfg.labels, cfg.camera)};
        photometric_jitter(s.image, cfg.augment.photometric, arng);
        augmented.push_back(std::move(s));
      }
    }
    const std::span<const TrainingSample> data = augment ? std::span<const TrainingSample>(augmented) : base;
    const EpochStats stats = sgd_epoch(net, result.params, data, lr, cfg.loss, opts, shuffle_rng,
                                       opts.momentum > 0.0 ? &velocity : nullptr);
    result.log.push_back({epoch, lr, stats.mean});
    if (progress) progress(result.log.back());
  }
  round_to_float32(result.params);
  return result;
}

InteractionConfig baseline_config(const InteractionConfig& cfg) {
  InteractionConfig b = cfg;
  b.interaction_mlp = false;
  return b;
}

std::vector<SequenceSample> sequence_samples(const RunConfig& cfg, const Network& net, const ParamSet& backbone,
                                             std::span<const FrameSequence> sequences) {
  const bool oracle = cfg.stage2.inputs == "ground_truth";
  std::vector<SequenceSample> out;
  out.reserve(sequences.size());
  for (const auto& seq : sequences) {
    SequenceSample s;
    s.label = seq.interaction;
    for (const auto& f : seq.frames) {
      s.frames.push_back(oracle ? oracle_prediction(f, cfg) : predict_frame(net, backbone, f.raster, cfg.camera));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SequenceSample> augmented_sequence_samples(const RunConfig& cfg, const Network& net,
                                                       const ParamSet& backbone,
                                                       std::span<const FrameSequence> sequences) {
  std::vector<SequenceSample> out;
  if (cfg.stage2.inputs == "ground_truth" || cfg.stage2.augment_copies == 0) return out;
  const SynthConfig sc = cfg.synth_config();
  const int max_du = static_cast<int>(std::floor(cfg.augment.translation * cfg.grid.image_width()));
  const int max_dv = static_cast<int>(std::floor(cfg.augment.translation * cfg.grid.image_height()));
  std::mt19937_64 rng(derive_seed(cfg.seed, kStreamStage2Augment));
  for (int copy = 0; copy < cfg.stage2.augment_copies; ++copy) {
    for (const auto& seq : sequences) {
      const int du = std::uniform_int_distribution<int>(-max_du, max_du)(rng);
      const int dv = std::uniform_int_distribution<int>(-max_dv, max_dv)(rng);
      SequenceSample s;
      s.label = seq.interaction;
      bool ok = true;
      for (const auto& f : seq.frames) {
        SceneFrame moved;
        if (!translate_frame(f, du, dv, sc, moved)) {
          ok = false;
          break;
        }
        photometric_jitter(moved.raster, cfg.augment.photometric, rng);
        s.frames.push_back(predict_frame(net, backbone, moved.raster, cfg.camera));
      }
      if (ok) out.push_back(std::move(s));
    }
  }
  return out;
}

Stage2Result train_stage2(const RunConfig& cfg, std::span<const SequenceSample> train, const Stage2Progress& progress) {
  cfg.validate();
  if (train.empty()) throw Error(ErrorCode::MissingArtifact, "stage 2 needs at least one training sequence");
  const InteractionConfig ic = cfg.interaction_config();
  Stage2Result r{InteractionModel(ic), std::nullopt, {}};
  r.model.init(derive_seed(cfg.seed, kStreamInteractionInit));

  std::vector<SequenceInputs> inputs;
  for (const auto& s : train) inputs.push_back(r.model.encode(s));

  InteractionTrainOptions opts;
  opts.batch_size = cfg.stage2.batch_size;
  opts.momentum = cfg.stage2.momentum;
  opts.clip_norm = cfg.stage2.clip_norm;
  std::mt19937_64 rng(derive_seed(cfg.seed, kStreamInteractionShuffle));
  ParamSet velocity = r.model.params().zeros_like();

  std::vector<SequenceInputs> baseline_inputs;
  std::mt19937_64 baseline_rng(derive_seed(cfg.seed, kStreamBaselineShuffle));
  ParamSet baseline_velocity;
  if (cfg.stage2.train_baseline) {
    r.baseline.emplace(baseline_config(ic));
    r.baseline->init(derive_seed(cfg.seed, kStreamBaselineInit));
    for (const auto& s : train) baseline_inputs.push_back(r.baseline->encode(s));
    baseline_velocity = r.baseline->params().zeros_like();
  }

  for (int epoch = 0; epoch < cfg.stage2.epochs; ++epoch) {
    Stage2Epoch e;
    e.epoch = epoch;
    e.lr = scheduled_learning_rate(cfg.stage2.lr, cfg.stage2.drop_epochs, epoch, cfg.stage2.lr_factor);
    e.loss = train_interaction_epoch(r.model, inputs, e.lr, opts, rng, velocity);
    if (r.baseline) e.baseline_loss = train_interaction_epoch(*r.baseline, baseline_inputs, e.lr, opts, baseline_rng,
                                                              baseline_velocity);
    r.log.push_back(e);
    if (progress) progress(e);
  }
  ParamSet rounded = r.model.params();
  round_to_float32(rounded);
  r.model.set_params(std::move(rounded));
  if (r.baseline) {
    ParamSet b = r.baseline->params();
    round_to_float32(b);
    r.baseline->set_params(std::move(b));
  }
  return r;
}

std::vector<NoiseSweepRow> pose_noise_sweep(const SynthConfig& cfg, std::span<const double> sigmas_px, int trials,
                                            std::uint64_t seed) {
  struct Trial {
    ControlPointSet model;
    ControlPointSet observed;
    Pose6D pose;
  };
  std::vector<Trial> scenes;
  double mean_depth = 0.0;
  for (int t = 0; t < trials; ++t) {
    const SceneFrame s = sample_scene(derive_seed(seed, static_cast<std::uint64_t>(t)), cfg);
    scenes.push_back({cuboid_control_points(s.cuboid), s.object, s.object_pose});
    mean_depth += s.object_pose.t.z() / trials;
  }
  const auto& k = cfg.camera;
  std::vector<NoiseSweepRow> rows;
  for (std::size_t level = 0; level < sigmas_px.size(); ++level) {
    const double sigma = sigmas_px[level];
    NoiseSweepRow row;
    row.sigma_px = sigma;
    row.sigma_m = sigma * mean_depth / k.fx;
    double sum_procrustes = 0.0;
    double sum_pnp = 0.0;
    for (int t = 0; t < trials; ++t) {
      std::mt19937_64 rng(derive_seed(derive_seed(seed, 1000 + level), static_cast<std::uint64_t>(t)));
      std::normal_distribution<double> n(0.0, 1.0);
      const Trial& tr = scenes[static_cast<std::size_t>(t)];
      ControlPointSet noisy{PointRole::Object, {}};
      std::array<Pixel2, kNumControlPoints> pixels{};
      for (std::size_t i = 0; i < kNumControlPoints; ++i) {
        const Vec3& p = tr.observed[i];
        const Pixel2 px = project(p, k);
        pixels[i] = {px.u + sigma * n(rng), px.v + sigma * n(rng)};
        const double z = p.z() + sigma * p.z() / k.fx * n(rng);
        noisy[i] = Vec3((pixels[i].u - k.cx) * z / k.fx, (pixels[i].v - k.cy) * z / k.fy, z);
      }
      double pnp_add = 0.0;
      try {
        pnp_add = add_metric(pnp_dlt(pixels, tr.model.view(), k), tr.pose, tr.model.view());
      } catch (const Error&) {
        ++row.pnp_failures;
        continue;
      }
      sum_pnp += pnp_add;
      sum_procrustes += add_metric(procrustes_align(tr.model, noisy), tr.pose, tr.model.view());
      ++row.trials;
    }
    if (row.trials > 0) {
      row.procrustes_add = sum_procrustes / row.trials;
      row.pnp_add = sum_pnp / row.trials;
    }
    rows.push_back(row);
  }
  return rows;
}

PoseRecovery recover_object_pose(const FramePrediction& pred, const SceneFrame& gt, const CameraIntrinsics& k) {
  const ControlPointSet model = cuboid_control_points(gt.cuboid);
  const double inf = std::numeric_limits<double>::infinity();
  PoseRecovery r{inf, inf, inf, inf, false};
  const Pose6D procrustes = procrustes_align(model, pred.object.points);
  r.add_procrustes = add_metric(procrustes, gt.object_pose, model.view());
  try {
    r.proj2d_procrustes = proj2d_error(procrustes, gt.object_pose, model.view(), k);
  } catch (const Error&) {
  }
  std::array<Pixel2, kNumControlPoints> pixels{};
  for (std::size_t i = 0; i < kNumControlPoints; ++i) {
    if (!(pred.object.points[i].z() > 0.0)) return r;
    pixels[i] = project(pred.object.points[i], k);
  }
  try {
    const Pose6D pnp = pnp_dlt(pixels, model.view(), k);
    r.add_pnp = add_metric(pnp, gt.object_pose, model.view());
    r.proj2d_pnp = proj2d_error(pnp, gt.object_pose, model.view(), k);
    r.pnp_ok = true;
  } catch (const Error&) {
  }
  return r;
}

EvalReport evaluate_frames(const RunConfig& cfg, std::span<const SceneFrame> frames,
                           std::span<const FramePrediction> preds) {
  if (frames.size() != preds.size()) {
    throw Error(ErrorCode::LengthMismatch, "evaluate: " + std::to_string(preds.size()) + " predictions for " +
                                               std::to_string(frames.size()) + " frames");
  }
  EvalReport r;
  r.frames = static_cast<int>(frames.size());
  r.cell_diagonal_m = cell_diagonal_m(cfg.grid, cfg.camera);

  std::vector<ControlPointSet> pred_hands, gt_hands;
  std::vector<int> pa, ga, po, go, pi, gi;
  std::vector<double> add_p, add_n, proj_p, proj_n;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    const auto& p = preds[i];
    pred_hands.push_back(p.hand.points);
    gt_hands.push_back(f.hand);
    pa.push_back(p.action());
    ga.push_back(f.action);
    po.push_back(p.object_class());
    go.push_back(f.object_class);
    pi.push_back(p.interaction(cfg.labels));
    gi.push_back(cfg.labels.interaction_index(f.action, f.object_class));
    const PoseRecovery rec = recover_object_pose(p, f, cfg.camera);
    add_p.push_back(rec.add_procrustes);
    add_n.push_back(rec.add_pnp);
    proj_p.push_back(rec.proj2d_procrustes);
    proj_n.push_back(rec.proj2d_pnp);
    if (!rec.pnp_ok) ++r.pnp_failures;
  }
  const double diag = r.cell_diagonal_m;
  const std::vector<double> cell_threshold = {diag};
  r.pck = pck3d(pred_hands, gt_hands, linspace(0.0, 2.0 * diag, 41));
  r.pck_at_cell = pck3d(pred_hands, gt_hands, cell_threshold).fractions[0];
  r.mean_joint_error_mm = mean_joint_error_mm(pred_hands, gt_hands);
  r.action_accuracy = classification_accuracy(pa, ga);
  r.object_accuracy = classification_accuracy(po, go);
  r.frame_interaction_accuracy = classification_accuracy(pi, gi);

  const auto add_thresholds = linspace(0.0, 0.1, 41);
  const auto proj_thresholds = linspace(0.0, 40.0, 41);
  r.add_procrustes_curve = fraction_below(add_p, add_thresholds);
  r.add_pnp_curve = fraction_below(add_n, add_thresholds);
  r.proj2d_procrustes_curve = fraction_below(proj_p, proj_thresholds);
  r.proj2d_pnp_curve = fraction_below(proj_n, proj_thresholds);
  r.mean_add_procrustes = mean_of(finite_values(add_p));
  r.mean_add_pnp = mean_of(finite_values(add_n));
  r.mean_proj2d_procrustes = mean_of(finite_values(proj_p));
  r.mean_proj2d_pnp = mean_of(finite_values(proj_n));
  r.noise_sweep = pose_noise_sweep(cfg.synth_config(), kSweepSigmasPx, kSweepTrials,
                                   derive_seed(cfg.seed, kStreamNoiseSweep));
  return r;
}

void evaluate_sequences(EvalReport& report, std::span<const SequenceSample> sequences, const InteractionModel* model,
                        const InteractionModel* baseline) {
  report.sequences = static_cast<int>(sequences.size());
  auto accuracy = [&](const InteractionModel& m) {
    std::vector<int> pred, gt;
    for (const auto& s : sequences) {
      Eigen::Index best = 0;
      m.classify_sequence(s).maxCoeff(&best);
      pred.push_back(static_cast<int>(best));
      gt.push_back(s.label);
    }
    return classification_accuracy(pred, gt);
  };
  if (model) {
    report.sequence_accuracy = accuracy(*model);
    report.importance = weight_importance(*model);
  }
  if (baseline) {
    report.baseline_sequence_accuracy = accuracy(*baseline);
    report.baseline_importance = weight_importance(*baseline);
  }
}

std::string importance_json(const WeightImportance& imp) { return importance_object(imp).dump(2); }

void write_report(const fs::path& dir, const EvalReport& r) {
  fs::create_directories(dir);
  ojson j;
  j["frames"] = r.frames;
  j["cell_diagonal_m"] = r.cell_diagonal_m;
  j["mean_joint_error_mm"] = r.mean_joint_error_mm;
  j["pck_at_cell_diagonal"] = r.pck_at_cell;
  j["pck_auc"] = r.pck.normalized_auc();
  j["action_accuracy"] = r.action_accuracy;
  j["object_accuracy"] = r.object_accuracy;
  j["frame_interaction_accuracy"] = r.frame_interaction_accuracy;
  j["object_pose"] = {{"mean_add_procrustes_m", r.mean_add_procrustes},
                      {"mean_add_pnp_m", r.mean_add_pnp},
                      {"mean_proj2d_procrustes_px", r.mean_proj2d_procrustes},
                      {"mean_proj2d_pnp_px", r.mean_proj2d_pnp},
                      {"pnp_failures", r.pnp_failures}};
  ojson sweep = ojson::array();
  std::vector<std::vector<double>> sweep_rows;
  for (const auto& row : r.noise_sweep) {
    sweep.push_back({{"sigma_px", row.sigma_px},
                     {"sigma_m", row.sigma_m},
                     {"procrustes_add_m", row.procrustes_add},
                     {"pnp_add_m", row.pnp_add},
                     {"trials", row.trials},
                     {"pnp_failures", row.pnp_failures}});
    sweep_rows.push_back({row.sigma_px, row.sigma_m, row.procrustes_add, row.pnp_add,
                          static_cast<double>(row.trials), static_cast<double>(row.pnp_failures)});
  }
  j["pnp_comparison"] = sweep;
  j["sequences"] = r.sequences;
  j["sequence_accuracy"] = r.sequence_accuracy ? ojson(*r.sequence_accuracy) : ojson(nullptr);
  j["baseline_sequence_accuracy"] =
      r.baseline_sequence_accuracy ? ojson(*r.baseline_sequence_accuracy) : ojson(nullptr);
  j["importance"] = r.importance ? importance_object(*r.importance) : ojson(nullptr);
  j["baseline_importance"] = r.baseline_importance ? importance_object(*r.baseline_importance) : ojson(nullptr);
  j["curves"] = {{"pck3d", curve_json(r.pck)},
                 {"add_procrustes", curve_json(r.add_procrustes_curve)},
                 {"add_pnp", curve_json(r.add_pnp_curve)},
                 {"proj2d_procrustes", curve_json(r.proj2d_procrustes_curve)},
                 {"proj2d_pnp", curve_json(r.proj2d_pnp_curve)}};
  write_text(dir / "summary.json", j.dump(2) + "\n");

  write_curve_csv(dir / "pck3d.csv", r.pck, "pck");
  write_curve_csv(dir / "add_procrustes.csv", r.add_procrustes_curve, "fraction");
  write_curve_csv(dir / "add_pnp.csv", r.add_pnp_curve, "fraction");
  write_curve_csv(dir / "proj2d_procrustes.csv", r.proj2d_procrustes_curve, "fraction");
  write_curve_csv(dir / "proj2d_pnp.csv", r.proj2d_pnp_curve, "fraction");
  write_table_csv(dir / "pnp_comparison.csv",
                  {"sigma_px", "sigma_m", "procrustes_add_m", "pnp_add_m", "trials", "pnp_failures"}, sweep_rows);
  if (r.importance || r.baseline_importance) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < kNumControlPoints; ++i) {
      rows.push_back({static_cast<double>(i), r.importance ? r.importance->per_joint[i] : 0.0,
                      r.baseline_importance ? r.baseline_importance->per_joint[i] : 0.0});
    }
    write_table_csv(dir / "importance.csv", {"joint", "interaction", "baseline"}, rows);
  }
}

void write_manifest(const fs::path& path, const std::string& command, const RunConfig& cfg, const fs::path& root,
                    const std::vector<fs::path>& files) {
  ojson j;
  j["tool"] = "hopose";
  j["version"] = kVersion;
  j["command"] = command;
  j["preset"] = cfg.preset;
  j["seed"] = cfg.seed;
  j["config_hash"] = config_hash(cfg);
  j["model_hash"] = model_hash(cfg);
  ojson list = ojson::array();
  for (const auto& f : files) list.push_back({{"path", f.generic_string()}, {"sha256", file_sha256(root / f)}});
  j["files"] = list;
  write_text(path, j.dump(2) + "\n");
}

void run_gen_data(std::uint64_t seed, const std::string& preset, const fs::path& out, std::ostream* log) {
  RunConfig cfg = preset_config(preset);
  cfg.seed = seed;
  cfg.data.dir = ".";
  cfg.output_dir = "run";
  cfg.base_dir = out;
  cfg.validate();
  const Dataset data = generate_dataset(cfg);
  write_dataset(out, data);
  save_config(out / "config.cfg", cfg);
  auto files = list_files(out);
  std::erase(files, fs::path("manifest.json"));
  write_manifest(out / "manifest.json", "gen-data", cfg, out, files);
  say(log, "wrote " + std::to_string(data.train_frames.size()) + " train / " + std::to_string(data.test_frames.size()) +
               " test frames, " + std::to_string(data.train_sequences.size()) + " train / " +
               std::to_string(data.test_sequences.size()) + " test sequences to " + out.string());
}

void run_train(const fs::path& config, int stage, std::ostream* log) {
  const RunConfig cfg = load_config(config);
  const fs::path out = cfg.output_path();
  const fs::path data_dir = cfg.data_path();
  fs::create_directories(out);
  const Network net(cfg.network_config());

  if (stage == 1) {
    const auto train = read_frames(data_dir / kTrainFramesFile);
    std::ofstream csv(out / "stage1_log.csv");
    csv << std::setprecision(17) << "epoch,lr,total,pose,conf,actcls,objcls\n";
    const auto result = train_stage1(cfg, train, [&](const Stage1Epoch& e) {
      csv << e.epoch << ',' << e.lr << ',' << e.loss.total << ',' << e.loss.pose << ',' << e.loss.conf << ','
          << e.loss.actcls << ',' << e.loss.objcls << '\n';
      std::ostringstream line;
      line << "stage1 epoch " << e.epoch << " lr " << e.lr << " loss " << e.loss.total << " pose " << e.loss.pose;
      say(log, line.str());
    });
    csv.close();
    write_checkpoint(out / kBackboneCheckpoint, make_header(cfg, "backbone", cfg.optim.epochs), result.params);
    write_manifest(out / "stage1_manifest.json", "train --stage 1", cfg, out,
                   {kBackboneCheckpoint, "stage1_log.csv"});
    return;
  }
  if (stage != 2) throw Error(ErrorCode::ConfigError, "--stage must be 1 or 2");

  const fs::path backbone_path = out / kBackboneCheckpoint;
  const Checkpoint ck = load_backbone(cfg, net, backbone_path);
  const std::string backbone_hash = file_sha256(backbone_path);
  const ParamSet frozen = ck.params;

  const auto sequences = group_sequences(read_frames(data_dir / kTrainSequencesFile), cfg.labels);
  auto samples = sequence_samples(cfg, net, ck.params, sequences);
  const std::size_t original = samples.size();
  for (auto& s : augmented_sequence_samples(cfg, net, ck.params, sequences)) samples.push_back(std::move(s));
  say(log, "stage2 sequences " + std::to_string(original) + " + " + std::to_string(samples.size() - original) +
               " shifted copies");
  std::ofstream csv(out / "stage2_log.csv");
  csv << std::setprecision(17) << "epoch,lr,interaction_ce,baseline_ce\n";
  const auto result = train_stage2(cfg, samples, [&](const Stage2Epoch& e) {
    csv << e.epoch << ',' << e.lr << ',' << e.loss << ',' << e.baseline_loss << '\n';
    std::ostringstream line;
    line << "stage2 epoch " << e.epoch << " lr " << e.lr << " ce " << e.loss << " baseline ce " << e.baseline_loss;
    say(log, line.str());
  });
  csv.close();

  if (!(ck.params == frozen) || file_sha256(backbone_path) != backbone_hash) {
    throw Error(ErrorCode::HashMismatch, "backbone parameters changed during stage 2");
  }
  CheckpointHeader h = make_header(cfg, "interaction", cfg.stage2.epochs);
  h.backbone_hash = backbone_hash;
  write_checkpoint(out / kInteractionCheckpoint, h, result.model.params());
  std::vector<fs::path> files = {kInteractionCheckpoint, "stage2_log.csv"};
  if (result.baseline) {
    h.kind = "baseline";
    write_checkpoint(out / kBaselineCheckpoint, h, result.baseline->params());
    files.emplace_back(kBaselineCheckpoint);
  }
  write_manifest(out / "stage2_manifest.json", "train --stage 2", cfg, out, files);
  say(log, "backbone unchanged (sha256 " + backbone_hash + ")");
}

void run_eval(const fs::path& config, const fs::path& ckpt, const fs::path& data, const fs::path& report_dir,
              std::ostream* log) {
  const RunConfig cfg = load_config(config);
  const Network net(cfg.network_config());
  const fs::path backbone_path = fs::is_directory(ckpt) ? ckpt / kBackboneCheckpoint : ckpt;
  const fs::path ckpt_dir = backbone_path.parent_path();
  const Checkpoint ck = load_backbone(cfg, net, backbone_path);
  const std::string backbone_hash = file_sha256(backbone_path);

  const auto frames = read_frames(data / kTestFramesFile);
  std::vector<FramePrediction> preds;
  preds.reserve(frames.size());
  for (const auto& f : frames) preds.push_back(predict_frame(net, ck.params, f.raster, cfg.camera));
  EvalReport report = evaluate_frames(cfg, frames, preds);

  const auto model = load_interaction(cfg, ckpt_dir / kInteractionCheckpoint, false, backbone_hash);
  const auto baseline = load_interaction(cfg, ckpt_dir / kBaselineCheckpoint, true, backbone_hash);
  if (model || baseline) {
    const auto sequences = group_sequences(read_frames(data / kTestSequencesFile), cfg.labels);
    const auto samples = sequence_samples(cfg, net, ck.params, sequences);
    evaluate_sequences(report, samples, model ? &*model : nullptr, baseline ? &*baseline : nullptr);
  }
  write_report(report_dir, report);
  auto files = list_files(report_dir);
  std::erase(files, fs::path("manifest.json"));
  write_manifest(report_dir / "manifest.json", "eval", cfg, report_dir, files);

  std::ostringstream line;
  line << "mean joint error " << report.mean_joint_error_mm << " mm, PCK@" << report.cell_diagonal_m << " m "
       << report.pck_at_cell << ", action acc " << report.action_accuracy << ", object acc "
       << report.object_accuracy;
  if (report.sequence_accuracy) line << ", sequence acc " << *report.sequence_accuracy;
  if (report.baseline_sequence_accuracy) line << " (baseline " << *report.baseline_sequence_accuracy << ")";
  say(log, line.str());
}

std::string run_decode(const fs::path& tensor, const fs::path& spec) {
  const LoadedGridTensor loaded = read_grid_tensor(tensor, spec);
  FramePrediction pred;
  if (loaded.kind == TensorKind::Raw) {
    pred = prune(decode_grid(loaded.tensor, loaded.camera));
  } else {
    if (!loaded.tensor.hand_cell || !loaded.tensor.object_cell) {
      throw Error(ErrorCode::ConfigError, "target tensor sidecar lacks responsible cells");
    }
    pred = prediction_from_target(loaded.tensor, loaded.camera);
  }
  const LabelSpec& labels = loaded.tensor.labels();
  ojson j;
  j["kind"] = loaded.kind == TensorKind::Raw ? "raw" : "target";
  j["hand_cell"] = {pred.hand_cell.u, pred.hand_cell.v, pred.hand_cell.z};
  j["object_cell"] = {pred.object_cell.u, pred.object_cell.v, pred.object_cell.z};
  j["action"] = pred.action();
  j["object_class"] = pred.object_class();
  const int ia = pred.action() * labels.num_objects + pred.object_class();
  j["interaction"] = ia < labels.num_interactions ? ojson(ia) : ojson(nullptr);
  j["hand"] = slot_json(pred.hand);
  j["object"] = slot_json(pred.object);
  return j.dump(2);
}

std::string run_importance(const fs::path& ckpt) {
  Checkpoint ck = read_checkpoint(ckpt);
  if (ck.header.kind != "interaction" && ck.header.kind != "baseline") {
    throw Error(ErrorCode::ConfigError, ckpt.string() + " is a '" + ck.header.kind +
                                            "' checkpoint; importance needs an interaction or baseline checkpoint");
  }
  const RunConfig cfg = parse_config(ck.header.config_text);
  InteractionConfig ic = cfg.interaction_config();
  if (ck.header.kind == "baseline") ic = baseline_config(ic);
  InteractionModel model(ic);
  model.set_params(std::move(ck.params));
  ojson j = importance_object(weight_importance(model));
  j["kind"] = ck.header.kind;
  j["source"] = ic.interaction_mlp ? "mlp.w1" : "lstm0.wx";
  return j.dump(2);
}

}  // namespace hopose
