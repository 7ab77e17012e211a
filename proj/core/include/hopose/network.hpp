#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hopose/codec.hpp"
#include "hopose/params.hpp"
#include "hopose/raster.hpp"

namespace hopose {

struct ConvSpec {
  int out_channels = 16;
  int kernel = 3;
  int stride = 1;
};

/// Strided convolution stack with leaky-rectifier activations followed by a
/// linear projection head onto the grid channels. With no hidden layers the
/// whole model is a single linear map (useful for gradient checks).
struct BackboneConfig {
  int in_channels = 3;
  std::vector<ConvSpec> layers;
  /// Head kernel and stride; 1x1 stride 1 unless the head has to reduce resolution itself.
  int head_kernel = 1;
  int head_stride = 1;
  double leaky_slope = 0.1;
  /// Uniform init bound is gain * sqrt(3 / fan_in); the head uses `head_gain`.
  double head_gain = 0.1;
};

struct NetworkConfig {
  GridSpec grid;
  LabelSpec labels;
  BackboneConfig backbone;

  /// Input image is W*cell_u x H*cell_v pixels.
  int image_width() const { return grid.image_width(); }
  int image_height() const { return grid.image_height(); }
  /// D * (hand slot + object slot), depth-major, hand slot first.
  std::size_t output_channels() const { return static_cast<std::size_t>(grid.D) * labels.cell_size(); }

  void validate() const;
};

struct LossWeights {
  double pose = 1.0;
  double actcls = 1.0;
  double objcls = 1.0;
  double conf_obj = 5.0;
  double conf_noobj = 0.1;

  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double pose = 0.0;
  double conf = 0.0;
  double actcls = 0.0;
  double objcls = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o);
  LossBreakdown scaled(double s) const;
};

struct LossResult {
  LossBreakdown loss;
  RawGridOutput grad;  // dL / d(raw output)
};

/// Per-frame multi-task loss (pose L2 in grid units and cross-entropies at
/// responsible cells, weighted squared confidence error everywhere) and its
/// gradient with respect to the raw network output.
LossResult multitask_loss(const RawGridOutput& raw, const TargetTensor& target, const LossWeights& w);

/// Replaces the confidence targets of the responsible slots with the
/// distance law evaluated on the current prediction.
void apply_online_confidence(const RawGridOutput& raw, TargetTensor& target, const CameraIntrinsics& k);

class Network {
 public:
  explicit Network(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }

  ParamSet init_params(std::uint64_t seed) const;
  /// Throws ShapeMismatch when `params` does not match this config.
  void check_params(const ParamSet& params) const;

  RawGridOutput forward(const ParamSet& params, const Raster& image) const;

  struct Evaluation {
    LossBreakdown loss;
    ParamSet grad;
    RawGridOutput raw;
  };
  /// Forward, loss and backpropagated parameter gradient. With
  /// `online_confidence` set, the responsible slots' confidence targets are
  /// first replaced by the distance law evaluated on this forward pass
  /// (treated as constants, no gradient through the target).
  Evaluation loss_and_gradient(const ParamSet& params, const Raster& image, const TargetTensor& target,
                               const LossWeights& w, const CameraIntrinsics* online_confidence = nullptr) const;

  /// Hash of the sign pattern of every rectifier input; equal signatures mean
  /// two parameter settings sit in the same piecewise-smooth region.
  std::uint64_t activation_signature(const ParamSet& params, const Raster& image) const;

 private:
  struct Cache;
  void run_forward(const ParamSet& params, const Raster& image, Cache& cache) const;
  RawGridOutput to_grid_output(const Cache& cache) const;

  NetworkConfig config_;
  std::vector<int> layer_in_h_, layer_in_w_, layer_out_h_, layer_out_w_, layer_in_c_;
};

struct TrainingSample {
  Raster image;
  TargetTensor target;
};

struct TrainOptions {
  CameraIntrinsics camera;
  int batch_size = 16;
  bool online_confidence = true;
  double momentum = 0.0;
  /// Rescale the mean batch gradient to at most this L2 norm (0 disables).
  double clip_norm = 0.0;
};

struct EpochStats {
  LossBreakdown mean;
  std::size_t samples = 0;
};

/// One pass over `data` in an order shuffled by `rng`; params -= lr * mean
/// batch gradient (heavy-ball velocity when momentum > 0, norm clipping when
/// clip_norm > 0).
EpochStats sgd_epoch(const Network& net, ParamSet& params, std::span<const TrainingSample> data, double lr,
                     const LossWeights& w, const TrainOptions& opts, std::mt19937_64& rng,
                     ParamSet* velocity = nullptr);

/// Step schedule: base * factor^(number of drop epochs <= epoch), epochs 0-based.
double scheduled_learning_rate(double base, std::span<const int> drop_epochs, int epoch, double factor = 0.1);

struct GradCheckOptions {
  double epsilon = 1e-4;
  std::size_t num_params = 200;
  std::uint64_t seed = 0;
  /// Relative error denominator floor, as a fraction of max(1, |L|).
  double relative_floor = 1e-6;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

/// Analytic gradient vs central finite differences on randomly drawn parameters.
/// Parameters whose +-epsilon probes cross a rectifier kink are redrawn.
GradCheckReport grad_check(const Network& net, const ParamSet& params, const Raster& image,
                           const TargetTensor& target, const LossWeights& w, const GradCheckOptions& opts = {});

}  // namespace hopose
