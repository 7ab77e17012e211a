#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hopose/codec.hpp"
#include "hopose/params.hpp"

namespace hopose {

/// Temporal classifier f(g(hand, object)): an affine-rectifier-affine map g
/// applied per frame, a stacked LSTM f over frames, and a softmax read from
/// the last hidden state. With `interaction_mlp = false` the per-frame input
/// goes straight into the LSTM (plain recurrent baseline).
struct InteractionConfig {
  bool use_hand_pose = true;
  bool use_object_pose = true;
  bool use_action_probs = false;
  bool use_object_probs = false;
  bool interaction_mlp = true;
  /// Express points relative to the hand root joint instead of the camera origin.
  bool root_relative = true;
  /// Multiplier applied to metric coordinates before they enter the model.
  double input_scale = 10.0;
  int mlp_hidden = 512;
  int lstm_hidden = 512;
  int lstm_layers = 2;
  int num_actions = 10;
  int num_objects = 4;
  int num_interactions = 40;

  std::size_t pose_width() const;
  std::size_t extra_width() const;
  std::size_t input_width() const { return pose_width() + extra_width(); }
  std::size_t feature_width() const;

  void validate() const;
};

struct SequenceSample {
  std::vector<FramePrediction> frames;
  int label = 0;
};

/// Per-frame model inputs, precomputed from predictions.
struct SequenceInputs {
  std::vector<Eigen::VectorXd> steps;
  int label = 0;
};

struct WeightImportance {
  std::array<double, kNumControlPoints> per_joint{};
  /// wrist, MCP, PIP, DIP, TIP
  std::array<double, 5> per_part{};
  /// thumb, index, middle, ring, pinky (wrist excluded)
  std::array<double, 5> per_finger{};
};

class InteractionModel {
 public:
  explicit InteractionModel(InteractionConfig config);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, forget-gate bias 1.
  void init(std::uint64_t seed);

  const InteractionConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  void set_params(ParamSet params);

  /// Flattened per-frame input in fixed joint order (hand block first), plus
  /// enabled class-probability features.
  Eigen::VectorXd frame_input(const ControlPointSet& hand, const ControlPointSet& object,
                              std::span<const double> action_probs = {},
                              std::span<const double> object_probs = {}) const;
  Eigen::VectorXd frame_input(const FramePrediction& frame) const;
  SequenceInputs encode(const SequenceSample& sample) const;

  /// g applied to one frame. `extra` holds the enabled probability features
  /// (action then object) and must match their combined width.
  Eigen::VectorXd interaction_features(const ControlPointSet& hand, const ControlPointSet& object,
                                       std::span<const double> extra = {}) const;

  Eigen::VectorXd classify_sequence(const SequenceSample& sample) const;
  Eigen::VectorXd classify_inputs(std::span<const Eigen::VectorXd> steps) const;

  struct Gradient {
    double loss = 0.0;
    ParamSet grad;
  };
  /// Cross-entropy of the sequence label and its gradient (backprop through time).
  Gradient loss_and_gradient(std::span<const Eigen::VectorXd> steps, int label) const;

  /// Sign pattern hash of every rectifier input in g over the sequence.
  std::uint64_t activation_signature(std::span<const Eigen::VectorXd> steps) const;

 private:
  struct Trace;
  void run(std::span<const Eigen::VectorXd> steps, Trace& trace) const;
  Eigen::VectorXd apply_mlp(const Eigen::VectorXd& in, Eigen::VectorXd* pre = nullptr,
                            Eigen::VectorXd* hidden = nullptr) const;

  InteractionConfig config_;
  ParamSet params_;
};

/// Sum of absolute first-layer weights tied to each hand joint's 3
/// coordinates, normalized over joints. Reads g's first layer, or the first
/// LSTM input matrix for the plain recurrent baseline.
WeightImportance weight_importance(const InteractionModel& model);

struct InteractionTrainOptions {
  int batch_size = 16;
  double momentum = 0.9;
  /// Rescale the batch gradient to at most this L2 norm (0 disables).
  double clip_norm = 5.0;
};

/// One shuffled pass of minibatch SGD over the sequences; returns mean loss.
double train_interaction_epoch(InteractionModel& model, std::span<const SequenceInputs> data, double lr,
                               const InteractionTrainOptions& opts, std::mt19937_64& rng, ParamSet& velocity);

double interaction_accuracy(const InteractionModel& model, std::span<const SequenceInputs> data);

}  // namespace hopose
