#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hopose/checkpoint.hpp"
#include "hopose/config.hpp"
#include "hopose/interaction.hpp"
#include "hopose/metrics.hpp"
#include "hopose/network.hpp"
#include "hopose/synth.hpp"

namespace hopose {

inline constexpr const char* kVersion = "0.1.0";

inline constexpr const char* kTrainFramesFile = "frames_train.txt";
inline constexpr const char* kTestFramesFile = "frames_test.txt";
inline constexpr const char* kTrainSequencesFile = "sequences_train.txt";
inline constexpr const char* kTestSequencesFile = "sequences_test.txt";
inline constexpr const char* kBackboneCheckpoint = "backbone.ckpt";
inline constexpr const char* kInteractionCheckpoint = "interaction.ckpt";
inline constexpr const char* kBaselineCheckpoint = "baseline.ckpt";

struct Dataset {
  std::vector<SceneFrame> train_frames;
  std::vector<SceneFrame> test_frames;
  std::vector<FrameSequence> train_sequences;
  std::vector<FrameSequence> test_sequences;
};

/// Deterministic in (cfg.seed, cfg). Rasters are quantized to 8 bits so the
/// in-memory dataset equals what `write_dataset` + `load_dataset` yield.
Dataset generate_dataset(const RunConfig& cfg);
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& dir, const LabelSpec& labels, bool load_rasters = true);

/// forward -> decode every cell -> keep the most confident hand and object slots.
FramePrediction predict_frame(const Network& net, const ParamSet& params, const Raster& image,
                              const CameraIntrinsics& k);
/// Ground truth dressed as a prediction (one-hot classes, confidence 1).
FramePrediction oracle_prediction(const SceneFrame& frame, const RunConfig& cfg);

struct Stage1Epoch {
  int epoch = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

struct Stage1Result {
  ParamSet params;  // rounded to float32, as stored in the checkpoint
  std::vector<Stage1Epoch> log;
};

using Stage1Progress = std::function<void(const Stage1Epoch&)>;

Stage1Result train_stage1(const RunConfig& cfg, std::span<const SceneFrame> train, const Stage1Progress& progress = {});

struct Stage2Epoch {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double baseline_loss = 0.0;
};

struct Stage2Result {
  InteractionModel model;
  std::optional<InteractionModel> baseline;
  std::vector<Stage2Epoch> log;
};

/// Plain recurrent baseline config: same inputs, no hand-object map.
InteractionConfig baseline_config(const InteractionConfig& cfg);

/// Per-frame predictions of every sequence frame, from the frozen backbone or
/// from ground truth depending on `cfg.stage2.inputs`.
std::vector<SequenceSample> sequence_samples(const RunConfig& cfg, const Network& net, const ParamSet& backbone,
                                             std::span<const FrameSequence> sequences);

/// `cfg.stage2.augment_copies` shifted copies of every sequence (one random
/// pixel shift per copy, photometric jitter per frame), predicted by the
/// frozen backbone. Copies whose shift leaves the grid are dropped. Empty when
/// inputs are ground truth.
std::vector<SequenceSample> augmented_sequence_samples(const RunConfig& cfg, const Network& net,
                                                       const ParamSet& backbone,
                                                       std::span<const FrameSequence> sequences);

using Stage2Progress = std::function<void(const Stage2Epoch&)>;

/// Trains the interaction model (and the baseline when enabled). `backbone` is
/// read only; callers verify it is untouched.
Stage2Result train_stage2(const RunConfig& cfg, std::span<const SequenceSample> train,
                          const Stage2Progress& progress = {});

struct NoiseSweepRow {
  double sigma_px = 0.0;
  double sigma_m = 0.0;  // depth noise at the mean trial depth
  double procrustes_add = 0.0;
  double pnp_add = 0.0;
  int trials = 0;
  int pnp_failures = 0;
};

/// Paired direct-3D vs PnP comparison: each trial perturbs the object's
/// control points with pixel noise sigma_px and depth noise sigma_px * z / fx,
/// recovers the pose with Procrustes (noisy 3D points) and with DLT PnP (noisy
/// pixels), and averages ADD over trials where PnP succeeds.
std::vector<NoiseSweepRow> pose_noise_sweep(const SynthConfig& cfg, std::span<const double> sigmas_px, int trials,
                                            std::uint64_t seed);

struct PoseRecovery {
  double add_procrustes = 0.0;
  double add_pnp = 0.0;
  double proj2d_procrustes = 0.0;
  double proj2d_pnp = 0.0;
  bool pnp_ok = false;
};

PoseRecovery recover_object_pose(const FramePrediction& pred, const SceneFrame& gt, const CameraIntrinsics& k);

struct EvalReport {
  int frames = 0;
  double cell_diagonal_m = 0.0;
  double mean_joint_error_mm = 0.0;
  double pck_at_cell = 0.0;
  double action_accuracy = 0.0;
  double object_accuracy = 0.0;
  double frame_interaction_accuracy = 0.0;
  double mean_add_procrustes = 0.0;
  double mean_add_pnp = 0.0;
  double mean_proj2d_procrustes = 0.0;
  double mean_proj2d_pnp = 0.0;
  int pnp_failures = 0;
  PckCurve pck;
  PckCurve add_procrustes_curve;
  PckCurve add_pnp_curve;
  PckCurve proj2d_procrustes_curve;
  PckCurve proj2d_pnp_curve;
  std::vector<NoiseSweepRow> noise_sweep;
  int sequences = 0;
  std::optional<double> sequence_accuracy;
  std::optional<double> baseline_sequence_accuracy;
  std::optional<WeightImportance> importance;
  std::optional<WeightImportance> baseline_importance;
};

/// Pose and class metrics of per-frame predictions against ground truth.
EvalReport evaluate_frames(const RunConfig& cfg, std::span<const SceneFrame> frames,
                           std::span<const FramePrediction> preds);

/// Adds sequence accuracies and importance vectors for whichever models are given.
void evaluate_sequences(EvalReport& report, std::span<const SequenceSample> sequences, const InteractionModel* model,
                        const InteractionModel* baseline);

/// summary.json plus CSV curves and tables.
void write_report(const std::filesystem::path& dir, const EvalReport& report);

std::string importance_json(const WeightImportance& imp);

/// Reproduction manifest: command, version, hashes, seed and SHA-256 of every listed file.
void write_manifest(const std::filesystem::path& path, const std::string& command, const RunConfig& cfg,
                    const std::filesystem::path& root, const std::vector<std::filesystem::path>& files);

// CLI entry points. Logging goes to `log` when non-null.
void run_gen_data(std::uint64_t seed, const std::string& preset, const std::filesystem::path& out,
                  std::ostream* log = nullptr);
void run_train(const std::filesystem::path& config, int stage, std::ostream* log = nullptr);
void run_eval(const std::filesystem::path& config, const std::filesystem::path& ckpt,
              const std::filesystem::path& data, const std::filesystem::path& report_dir,
              std::ostream* log = nullptr);
/// JSON description of the pruned prediction held in a serialized grid tensor.
std::string run_decode(const std::filesystem::path& tensor, const std::filesystem::path& spec);
/// JSON weight-importance vectors of an interaction or baseline checkpoint.
std::string run_importance(const std::filesystem::path& ckpt);

}  // namespace hopose
