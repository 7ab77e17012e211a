#include "hopose/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Core>

#include "hopose/error.hpp"

namespace hopose {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LayerGeom {
  int in_c, in_h, in_w;
  int out_c, out_h, out_w;
  int kernel, stride, pad;

  int patch() const { return kernel * kernel * in_c; }
};

int layer_padding(int kernel, int stride) { return kernel == stride ? 0 : kernel / 2; }

std::vector<LayerGeom> build_geometry(const NetworkConfig& cfg) {
  std::vector<LayerGeom> geo;
  int c = cfg.backbone.in_channels;
  int h = cfg.image_height();
  int w = cfg.image_width();
  auto push = [&](int out_c, int k, int s) {
    if (k < 1 || s < 1 || out_c < 1) {
      throw Error(ErrorCode::ConfigOutOfRange, "conv layers need positive kernel, stride and channel count");
    }
    const int pad = layer_padding(k, s);
    const int oh = (h + 2 * pad - k) / s + 1;
    const int ow = (w + 2 * pad - k) / s + 1;
    if (oh < 1 || ow < 1) throw Error(ErrorCode::ShapeMismatch, "conv stack shrinks the image to nothing");
    geo.push_back({c, h, w, out_c, oh, ow, k, s, pad});
    c = out_c;
    h = oh;
    w = ow;
  };
  for (const auto& l : cfg.backbone.layers) push(l.out_channels, l.kernel, l.stride);
  push(static_cast<int>(cfg.output_channels()), cfg.backbone.head_kernel, cfg.backbone.head_stride);
  return geo;
}

Eigen::MatrixXd im2col(const Eigen::MatrixXd& x, const LayerGeom& g) {
  Eigen::MatrixXd cols(g.patch(), g.out_h * g.out_w);
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      const int s = oy * g.out_w + ox;
      double* dst = cols.col(s).data();
      for (int ky = 0; ky < g.kernel; ++ky) {
        const int iy = oy * g.stride - g.pad + ky;
        for (int kx = 0; kx < g.kernel; ++kx) {
          const int ix = ox * g.stride - g.pad + kx;
          if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) {
            std::fill(dst, dst + g.in_c, 0.0);
          } else {
            const double* src = x.col(iy * g.in_w + ix).data();
            std::copy(src, src + g.in_c, dst);
          }
          dst += g.in_c;
        }
      }
    }
  }
  return cols;
}

Eigen::MatrixXd col2im(const Eigen::MatrixXd& cols, const LayerGeom& g) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(g.in_c, g.in_h * g.in_w);
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      const double* src = cols.col(oy * g.out_w + ox).data();
      for (int ky = 0; ky < g.kernel; ++ky) {
        const int iy = oy * g.stride - g.pad + ky;
        for (int kx = 0; kx < g.kernel; ++kx) {
          const int ix = ox * g.stride - g.pad + kx;
          if (iy >= 0 && iy < g.in_h && ix >= 0 && ix < g.in_w) {
            double* dst = x.col(iy * g.in_w + ix).data();
            for (int c = 0; c < g.in_c; ++c) dst[c] += src[c];
          }
          src += g.in_c;
        }
      }
    }
  }
  return x;
}

std::string layer_name(std::size_t i, std::size_t num_hidden) {
  return i == num_hidden ? std::string("head") : "conv" + std::to_string(i);
}

}  // namespace

// ---------------------------------------------------------------------------

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  total += o.total;
  pose += o.pose;
  conf += o.conf;
  actcls += o.actcls;
  objcls += o.objcls;
  return *this;
}

LossBreakdown LossBreakdown::scaled(double s) const { return {total * s, pose * s, conf * s, actcls * s, objcls * s}; }

void LossWeights::validate() const {
  if (pose < 0 || actcls < 0 || objcls < 0 || conf_obj < 0 || conf_noobj < 0) {
    throw Error(ErrorCode::ConfigOutOfRange, "loss weights must be >= 0");
  }
}

void NetworkConfig::validate() const {
  grid.validate();
  labels.validate();
  if (backbone.in_channels < 1) throw Error(ErrorCode::ConfigOutOfRange, "backbone needs >= 1 input channel");
  const auto geo = build_geometry(*this);
  if (geo.back().out_h != grid.H || geo.back().out_w != grid.W) {
    std::ostringstream msg;
    msg << "backbone maps " << image_width() << "x" << image_height() << " images to " << geo.back().out_w << "x"
        << geo.back().out_h << ", grid is " << grid.W << "x" << grid.H;
    throw Error(ErrorCode::ShapeMismatch, msg.str());
  }
}

LossResult multitask_loss(const RawGridOutput& raw, const TargetTensor& target, const LossWeights& w) {
  const GridSpec& grid = raw.grid();
  const LabelSpec& labels = raw.labels();
  if (raw.values().size() != target.values().size() || labels.cell_size() != target.labels().cell_size()) {
    throw Error(ErrorCode::ShapeMismatch, "raw output and target shapes differ");
  }
  LossResult result{{}, RawGridOutput(grid, labels)};
  LossBreakdown& L = result.loss;

  const SlotLayout layouts[2] = {hand_layout(labels), object_layout(labels)};
  for (std::size_t ci = 0; ci < grid.num_cells(); ++ci) {
    const CellIndex cell = CellIndex::from_linear(ci, grid);
    const auto r = raw.cell(ci);
    const auto t = target.cell(ci);
    auto g = result.grad.cell(ci);
    for (int slot = 0; slot < 2; ++slot) {
      const SlotLayout& lay = layouts[slot];
      const bool responsible = slot == 0 ? target.hand_responsible(cell) : target.object_responsible(cell);

      const double conf = sigmoid(r[lay.confidence()]);
      const double lam = responsible ? w.conf_obj : w.conf_noobj;
      const double diff = conf - t[lay.confidence()];
      L.conf += lam * diff * diff;
      g[lay.confidence()] = 2.0 * lam * diff * conf * (1.0 - conf);

      if (!responsible) continue;

      for (std::size_t p = 0; p < kNumControlPoints; ++p) {
        for (std::size_t a = 0; a < 3; ++a) {
          const std::size_t idx = lay.pose(p, a);
          const bool root = p == lay.root_point;
          const double off = root ? sigmoid(r[idx]) : r[idx];
          const double d = off - t[idx];
          L.pose += w.pose * d * d;
          g[idx] = 2.0 * w.pose * d * (root ? off * (1.0 - off) : 1.0);
        }
      }

      // Cross-entropy -sum t log softmax(z).
      const double lam_cls = slot == 0 ? w.actcls : w.objcls;
      double zmax = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < lay.num_probs; ++k) zmax = std::max(zmax, r[lay.prob(k)]);
      double sum = 0.0;
      for (std::size_t k = 0; k < lay.num_probs; ++k) sum += std::exp(r[lay.prob(k)] - zmax);
      const double log_sum = std::log(sum);
      double ce = 0.0;
      double tsum = 0.0;
      for (std::size_t k = 0; k < lay.num_probs; ++k) {
        const double tk = t[lay.prob(k)];
        ce -= tk * (r[lay.prob(k)] - zmax - log_sum);
        tsum += tk;
      }
      for (std::size_t k = 0; k < lay.num_probs; ++k) {
        const double pk = std::exp(r[lay.prob(k)] - zmax - log_sum);
        g[lay.prob(k)] = lam_cls * (pk * tsum - t[lay.prob(k)]);
      }
      (slot == 0 ? L.actcls : L.objcls) += lam_cls * ce;
    }
  }
  L.total = L.pose + L.conf + L.actcls + L.objcls;
  if (!std::isfinite(L.total)) {
    std::ostringstream msg;
    msg << "loss is not finite (pose " << L.pose << ", conf " << L.conf << ", act " << L.actcls << ", obj "
        << L.objcls << ")";
    throw Error(ErrorCode::NonFiniteLoss, msg.str());
  }
  return result;
}

void apply_online_confidence(const RawGridOutput& raw, TargetTensor& target, const CameraIntrinsics& k) {
  const auto& grid = target.grid();
  const auto& labels = target.labels();
  if (target.hand_cell) {
    const CellIndex c = *target.hand_cell;
    const auto pred = decode_cell(raw.cell(c), c, grid, labels, k);
    const auto gt = decode_target_cell(target.cell(c), c, grid, labels, k);
    target.cell(c)[hand_layout(labels).confidence()] =
        confidence_target_grid(pred.hand.grid_points, gt.hand.grid_points, grid);
  }
  if (target.object_cell) {
    const CellIndex c = *target.object_cell;
    const auto pred = decode_cell(raw.cell(c), c, grid, labels, k);
    const auto gt = decode_target_cell(target.cell(c), c, grid, labels, k);
    target.cell(c)[object_layout(labels).confidence()] =
        confidence_target_grid(pred.object.grid_points, gt.object.grid_points, grid);
  }
}

// ---------------------------------------------------------------------------

struct Network::Cache {
  std::vector<Eigen::MatrixXd> cols;  // per layer, head last
  std::vector<Eigen::MatrixXd> pre;   // hidden layers only
  std::vector<Eigen::MatrixXd> act;   // hidden layers only
  Eigen::MatrixXd head;
};

Network::Network(NetworkConfig config) : config_(std::move(config)) { config_.validate(); }

ParamSet Network::init_params(std::uint64_t seed) const {
  const auto geo = build_geometry(config_);
  const std::size_t hidden = config_.backbone.layers.size();
  std::mt19937_64 rng(seed);
  ParamSet params;
  for (std::size_t i = 0; i < geo.size(); ++i) {
    const auto& g = geo[i];
    const std::string name = layer_name(i, hidden);
    auto& weight = params.add(name + ".weight", {g.out_c, g.kernel, g.kernel, g.in_c});
    const double gain = i == hidden ? config_.backbone.head_gain : std::sqrt(2.0);
    const double bound = gain * std::sqrt(3.0 / g.patch());
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : weight.values) v = dist(rng);
    params.add(name + ".bias", {g.out_c});
  }
  return params;
}

void Network::check_params(const ParamSet& params) const {
  const auto geo = build_geometry(config_);
  if (params.num_tensors() != 2 * geo.size()) {
    throw Error(ErrorCode::ShapeMismatch, "parameter set does not match the network config");
  }
  for (std::size_t i = 0; i < geo.size(); ++i) {
    const auto& g = geo[i];
    const std::vector<int> wshape{g.out_c, g.kernel, g.kernel, g.in_c};
    if (params[2 * i].shape != wshape || params[2 * i + 1].shape != std::vector<int>{g.out_c}) {
      throw Error(ErrorCode::ShapeMismatch, "parameter tensor " + params[2 * i].name + " has the wrong shape");
    }
  }
}

void Network::run_forward(const ParamSet& params, const Raster& image, Cache& cache) const {
  if (image.width != config_.image_width() || image.height != config_.image_height() ||
      image.channels != config_.backbone.in_channels) {
    std::ostringstream msg;
    msg << "image is " << image.width << "x" << image.height << "x" << image.channels << ", network expects "
        << config_.image_width() << "x" << config_.image_height() << "x" << config_.backbone.in_channels;
    throw Error(ErrorCode::ShapeMismatch, msg.str());
  }
  check_params(params);
  const auto geo = build_geometry(config_);
  const std::size_t hidden = config_.backbone.layers.size();
  const double slope = config_.backbone.leaky_slope;

  Eigen::MatrixXd x(image.channels, static_cast<Eigen::Index>(image.width) * image.height);
  for (std::size_t i = 0; i < image.data.size(); ++i) x.data()[i] = image.data[i];

  cache.cols.assign(geo.size(), {});
  cache.pre.assign(hidden, {});
  cache.act.assign(hidden, {});
  const Eigen::MatrixXd* input = &x;
  for (std::size_t i = 0; i < geo.size(); ++i) {
    const auto& g = geo[i];
    cache.cols[i] = im2col(*input, g);
    const Eigen::Map<const RowMatrix> W(params[2 * i].values.data(), g.out_c, g.patch());
    const Eigen::Map<const Eigen::VectorXd> b(params[2 * i + 1].values.data(), g.out_c);
    Eigen::MatrixXd out = W * cache.cols[i];
    out.colwise() += b;
    if (i == hidden) {
      cache.head = std::move(out);
    } else {
      cache.act[i] = out.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
      cache.pre[i] = std::move(out);
      input = &cache.act[i];
    }
  }
}

RawGridOutput Network::to_grid_output(const Cache& cache) const {
  const GridSpec& grid = config_.grid;
  RawGridOutput out(grid, config_.labels);
  const std::size_t n = config_.labels.cell_size();
  for (int u = 0; u < grid.W; ++u) {
    for (int v = 0; v < grid.H; ++v) {
      const auto col = cache.head.col(v * grid.W + u);
      for (int z = 0; z < grid.D; ++z) {
        auto cell = out.cell(CellIndex{u, v, z});
        for (std::size_t c = 0; c < n; ++c) cell[c] = col(static_cast<Eigen::Index>(z * n + c));
      }
    }
  }
  return out;
}

RawGridOutput Network::forward(const ParamSet& params, const Raster& image) const {
  Cache cache;
  run_forward(params, image, cache);
  return to_grid_output(cache);
}

Network::Evaluation Network::loss_and_gradient(const ParamSet& params, const Raster& image,
                                               const TargetTensor& target, const LossWeights& w,
                                               const CameraIntrinsics* online_confidence) const {
  Cache cache;
  run_forward(params, image, cache);
  Evaluation ev;
  ev.raw = to_grid_output(cache);
  LossResult lr;
  if (online_confidence) {
    TargetTensor online = target;
    apply_online_confidence(ev.raw, online, *online_confidence);
    lr = multitask_loss(ev.raw, online, w);
  } else {
    lr = multitask_loss(ev.raw, target, w);
  }
  ev.loss = lr.loss;

  const GridSpec& grid = config_.grid;
  const std::size_t n = config_.labels.cell_size();
  Eigen::MatrixXd delta(cache.head.rows(), cache.head.cols());
  for (int u = 0; u < grid.W; ++u) {
    for (int v = 0; v < grid.H; ++v) {
      auto col = delta.col(v * grid.W + u);
      for (int z = 0; z < grid.D; ++z) {
        const auto cell = lr.grad.cell(CellIndex{u, v, z});
        for (std::size_t c = 0; c < n; ++c) col(static_cast<Eigen::Index>(z * n + c)) = cell[c];
      }
    }
  }

  const auto geo = build_geometry(config_);
  const std::size_t hidden = config_.backbone.layers.size();
  const double slope = config_.backbone.leaky_slope;
  ev.grad = params.zeros_like();
  for (std::size_t i = geo.size(); i-- > 0;) {
    const auto& g = geo[i];
    if (i < hidden) {
      delta = delta.cwiseProduct(cache.pre[i].unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; }));
    }
    Eigen::Map<RowMatrix> dW(ev.grad[2 * i].values.data(), g.out_c, g.patch());
    Eigen::Map<Eigen::VectorXd> db(ev.grad[2 * i + 1].values.data(), g.out_c);
    dW.noalias() = delta * cache.cols[i].transpose();
    db = delta.rowwise().sum();
    if (i > 0) {
      const Eigen::Map<const RowMatrix> W(params[2 * i].values.data(), g.out_c, g.patch());
      const Eigen::MatrixXd dcols = W.transpose() * delta;
      delta = col2im(dcols, g);
    }
  }
  return ev;
}

std::uint64_t Network::activation_signature(const ParamSet& params, const Raster& image) const {
  Cache cache;
  run_forward(params, image, cache);
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& m : cache.pre) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      h ^= m.data()[i] > 0.0 ? 1u : 0u;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

// ---------------------------------------------------------------------------

EpochStats sgd_epoch(const Network& net, ParamSet& params, std::span<const TrainingSample> data, double lr,
                     const LossWeights& w, const TrainOptions& opts, std::mt19937_64& rng, ParamSet* velocity) {
  if (!(lr >= 0.0)) throw Error(ErrorCode::ConfigOutOfRange, "learning rate must be >= 0");
  if (opts.batch_size < 1) throw Error(ErrorCode::ConfigOutOfRange, "batch size must be >= 1");
  w.validate();

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  EpochStats stats;
  ParamSet batch_grad = params.zeros_like();
  if (velocity && !velocity->same_structure(params)) *velocity = params.zeros_like();

  for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opts.batch_size));
    batch_grad.set_zero();
    for (std::size_t b = start; b < end; ++b) {
      const TrainingSample& sample = data[order[b]];
      Network::Evaluation ev;
      try {
        ev = net.loss_and_gradient(params, sample.image, sample.target, w,
                                   opts.online_confidence ? &opts.camera : nullptr);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFiniteLoss) throw;
        throw Error(ErrorCode::NonFiniteLoss, std::string(e.what()) + " at sample " + std::to_string(order[b]) +
                                                  " (batch starting " + std::to_string(start) + ")");
      }
      batch_grad.axpy(1.0, ev.grad);
      stats.mean += ev.loss;
      ++stats.samples;
    }
    double inv = 1.0 / static_cast<double>(end - start);
    if (opts.clip_norm > 0.0) {
      const double norm = inv * std::sqrt(batch_grad.squared_norm());
      if (norm > opts.clip_norm) inv *= opts.clip_norm / norm;
    }
    if (velocity && opts.momentum > 0.0) {
      velocity->scale(opts.momentum);
      velocity->axpy(inv, batch_grad);
      params.axpy(-lr, *velocity);
    } else {
      params.axpy(-lr * inv, batch_grad);
    }
    if (!params.all_finite()) {
      throw Error(ErrorCode::NonFiniteLoss, "parameters diverged after batch starting at " + std::to_string(start));
    }
  }
  if (stats.samples > 0) stats.mean = stats.mean.scaled(1.0 / static_cast<double>(stats.samples));
  return stats;
}

double scheduled_learning_rate(double base, std::span<const int> drop_epochs, int epoch, double factor) {
  double lr = base;
  for (const int d : drop_epochs) {
    if (epoch >= d) lr *= factor;
  }
  return lr;
}

GradCheckReport grad_check(const Network& net, const ParamSet& params, const Raster& image,
                           const TargetTensor& target, const LossWeights& w, const GradCheckOptions& opts) {
  const auto analytic = net.loss_and_gradient(params, image, target, w);
  const double floor = opts.relative_floor * std::max(1.0, std::abs(analytic.loss.total));
  const std::uint64_t base_signature = net.activation_signature(params, image);

  GradCheckReport report;
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<std::size_t> pick(0, params.total_size() - 1);
  ParamSet probe = params;
  const std::size_t max_attempts = opts.num_params * 20;
  for (std::size_t attempt = 0; report.checked < opts.num_params && attempt < max_attempts; ++attempt) {
    const std::size_t idx = pick(rng);
    const double orig = params.flat(idx);
    probe.flat(idx) = orig + opts.epsilon;
    const bool plus_ok = net.activation_signature(probe, image) == base_signature;
    const double lp = multitask_loss(net.forward(probe, image), target, w).loss.total;
    probe.flat(idx) = orig - opts.epsilon;
    const bool minus_ok = net.activation_signature(probe, image) == base_signature;
    const double lm = multitask_loss(net.forward(probe, image), target, w).loss.total;
    probe.flat(idx) = orig;
    if (!plus_ok || !minus_ok) {
      ++report.skipped_kinks;
      continue;
    }
    const double numeric = (lp - lm) / (2.0 * opts.epsilon);
    const double a = analytic.grad.flat(idx);
    const double abs_err = std::abs(a - numeric);
    const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    report.max_rel_error = std::max(report.max_rel_error, rel);
    ++report.checked;
  }
  return report;
}

}  // namespace hopose
