#include "hopose/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hopose/error.hpp"

namespace hopose {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;
using MutVec = Eigen::Map<Eigen::VectorXd>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

ConstMap matrix(const ParamSet& p, const std::string& name) {
  const auto& t = p.at(name);
  return ConstMap(t.values.data(), t.shape[0], t.shape[1]);
}

ConstVec vector(const ParamSet& p, const std::string& name) {
  const auto& t = p.at(name);
  return ConstVec(t.values.data(), t.shape[0]);
}

MutMap matrix(ParamSet& p, const std::string& name) {
  auto& t = p.at(name);
  return MutMap(t.values.data(), t.shape[0], t.shape[1]);
}

MutVec vector(ParamSet& p, const std::string& name) {
  auto& t = p.at(name);
  return MutVec(t.values.data(), t.shape[0]);
}

std::string lstm_name(int layer, const char* what) { return "lstm" + std::to_string(layer) + "." + what; }

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  const Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace

std::size_t InteractionConfig::pose_width() const {
  return (use_hand_pose ? 3 * kNumControlPoints : 0) + (use_object_pose ? 3 * kNumControlPoints : 0);
}

std::size_t InteractionConfig::extra_width() const {
  return (use_action_probs ? static_cast<std::size_t>(num_actions) : 0) +
         (use_object_probs ? static_cast<std::size_t>(num_objects) : 0);
}

std::size_t InteractionConfig::feature_width() const {
  return interaction_mlp ? static_cast<std::size_t>(mlp_hidden) : input_width();
}

void InteractionConfig::validate() const {
  if (input_width() == 0) throw Error(ErrorCode::ConfigOutOfRange, "interaction model has no enabled inputs");
  if (mlp_hidden < 1 || lstm_hidden < 1 || lstm_layers < 1) {
    throw Error(ErrorCode::ConfigOutOfRange, "interaction widths and depth must be >= 1");
  }
  if (num_actions < 1 || num_objects < 1 || num_interactions < 1) {
    throw Error(ErrorCode::ConfigOutOfRange, "interaction label counts must be >= 1");
  }
  if (!(input_scale > 0.0)) throw Error(ErrorCode::ConfigOutOfRange, "input_scale must be > 0");
}

InteractionModel::InteractionModel(InteractionConfig config) : config_(std::move(config)) {
  config_.validate();
  const int in = static_cast<int>(config_.input_width());
  const int hid = config_.mlp_hidden;
  const int H = config_.lstm_hidden;
  if (config_.interaction_mlp) {
    params_.add("mlp.w1", {hid, in});
    params_.add("mlp.b1", {hid});
    params_.add("mlp.w2", {hid, hid});
    params_.add("mlp.b2", {hid});
  }
  int layer_in = static_cast<int>(config_.feature_width());
  for (int l = 0; l < config_.lstm_layers; ++l) {
    params_.add(lstm_name(l, "wx"), {4 * H, layer_in});
    params_.add(lstm_name(l, "wh"), {4 * H, H});
    params_.add(lstm_name(l, "b"), {4 * H});
    layer_in = H;
  }
  params_.add("out.w", {config_.num_interactions, H});
  params_.add("out.b", {config_.num_interactions});
}

void InteractionModel::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& t : params_.tensors()) {
    if (t.shape.size() == 2) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(t.shape[1]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : t.values) v = dist(rng);
    } else {
      std::fill(t.values.begin(), t.values.end(), 0.0);
    }
  }
  const int H = config_.lstm_hidden;
  for (int l = 0; l < config_.lstm_layers; ++l) {
    vector(params_, lstm_name(l, "b")).segment(H, H).setOnes();
  }
}

void InteractionModel::set_params(ParamSet params) {
  if (!params.same_structure(params_)) {
    throw Error(ErrorCode::ShapeMismatch, "interaction parameters do not match the model config");
  }
  params_ = std::move(params);
}

Eigen::VectorXd InteractionModel::frame_input(const ControlPointSet& hand, const ControlPointSet& object,
                                              std::span<const double> action_probs,
                                              std::span<const double> object_probs) const {
  const auto& c = config_;
  if ((c.use_action_probs && action_probs.size() != static_cast<std::size_t>(c.num_actions)) ||
      (c.use_object_probs && object_probs.size() != static_cast<std::size_t>(c.num_objects))) {
    throw Error(ErrorCode::WidthMismatch, "class probability features do not match the enabled flags");
  }
  Eigen::VectorXd x(c.input_width());
  const Vec3 origin = c.root_relative ? hand[kHandRootIndex] : Vec3::Zero();
  Eigen::Index n = 0;
  if (c.use_hand_pose) {
    for (const auto& p : hand.points) {
      x.segment<3>(n) = (p - origin) * c.input_scale;
      n += 3;
    }
  }
  if (c.use_object_pose) {
    for (const auto& p : object.points) {
      x.segment<3>(n) = (p - origin) * c.input_scale;
      n += 3;
    }
  }
  if (c.use_action_probs) {
    for (const double v : action_probs) x(n++) = v;
  }
  if (c.use_object_probs) {
    for (const double v : object_probs) x(n++) = v;
  }
  return x;
}

Eigen::VectorXd InteractionModel::frame_input(const FramePrediction& frame) const {
  return frame_input(frame.hand.points, frame.object.points, frame.hand.probs, frame.object.probs);
}

SequenceInputs InteractionModel::encode(const SequenceSample& sample) const {
  SequenceInputs out;
  out.label = sample.label;
  out.steps.reserve(sample.frames.size());
  for (const auto& f : sample.frames) out.steps.push_back(frame_input(f));
  return out;
}

Eigen::VectorXd InteractionModel::apply_mlp(const Eigen::VectorXd& in, Eigen::VectorXd* pre,
                                            Eigen::VectorXd* hidden) const {
  if (!config_.interaction_mlp) return in;
  Eigen::VectorXd a = matrix(params_, "mlp.w1") * in + vector(params_, "mlp.b1");
  Eigen::VectorXd h = a.cwiseMax(0.0);
  Eigen::VectorXd out = matrix(params_, "mlp.w2") * h + vector(params_, "mlp.b2");
  if (pre) *pre = std::move(a);
  if (hidden) *hidden = std::move(h);
  return out;
}

Eigen::VectorXd InteractionModel::interaction_features(const ControlPointSet& hand, const ControlPointSet& object,
                                                       std::span<const double> extra) const {
  const auto& c = config_;
  if (extra.size() != c.extra_width()) {
    throw Error(ErrorCode::WidthMismatch, "extra feature width " + std::to_string(extra.size()) + ", expected " +
                                              std::to_string(c.extra_width()));
  }
  const std::size_t na = c.use_action_probs ? static_cast<std::size_t>(c.num_actions) : 0;
  return apply_mlp(frame_input(hand, object, extra.subspan(0, na), extra.subspan(na)));
}

struct InteractionModel::Trace {
  std::vector<Eigen::VectorXd> inputs;
  std::vector<Eigen::VectorXd> mlp_pre, mlp_hidden;
  // Per layer, per time step. h/c hold T + 1 entries with the zero state first.
  std::vector<std::vector<Eigen::VectorXd>> x, gates, c, h;
  Eigen::VectorXd logits;
};

void InteractionModel::run(std::span<const Eigen::VectorXd> steps, Trace& tr) const {
  if (steps.empty()) throw Error(ErrorCode::EmptySequence, "cannot classify an empty sequence");
  const auto& cfg = config_;
  const std::size_t T = steps.size();
  const int H = cfg.lstm_hidden;
  const int L = cfg.lstm_layers;

  tr.inputs.assign(steps.begin(), steps.end());
  tr.mlp_pre.resize(T);
  tr.mlp_hidden.resize(T);
  tr.x.assign(L, std::vector<Eigen::VectorXd>(T));
  tr.gates.assign(L, std::vector<Eigen::VectorXd>(T));
  tr.c.assign(L, std::vector<Eigen::VectorXd>(T + 1, Eigen::VectorXd::Zero(H)));
  tr.h.assign(L, std::vector<Eigen::VectorXd>(T + 1, Eigen::VectorXd::Zero(H)));

  for (std::size_t t = 0; t < T; ++t) {
    if (static_cast<std::size_t>(steps[t].size()) != cfg.input_width()) {
      throw Error(ErrorCode::WidthMismatch, "frame input width does not match the model");
    }
    tr.x[0][t] = apply_mlp(steps[t], &tr.mlp_pre[t], &tr.mlp_hidden[t]);
  }
  for (int l = 0; l < L; ++l) {
    const auto Wx = matrix(params_, lstm_name(l, "wx"));
    const auto Wh = matrix(params_, lstm_name(l, "wh"));
    const auto b = vector(params_, lstm_name(l, "b"));
    for (std::size_t t = 0; t < T; ++t) {
      if (l > 0) tr.x[l][t] = tr.h[l - 1][t + 1];
      Eigen::VectorXd z = Wx * tr.x[l][t] + Wh * tr.h[l][t] + b;
      for (int k = 0; k < H; ++k) {
        z(k) = sigmoid(z(k));
        z(H + k) = sigmoid(z(H + k));
        z(2 * H + k) = std::tanh(z(2 * H + k));
        z(3 * H + k) = sigmoid(z(3 * H + k));
      }
      const auto i = z.segment(0, H);
      const auto f = z.segment(H, H);
      const auto g = z.segment(2 * H, H);
      const auto o = z.segment(3 * H, H);
      tr.c[l][t + 1] = f.cwiseProduct(tr.c[l][t]) + i.cwiseProduct(g);
      tr.h[l][t + 1] = o.cwiseProduct(tr.c[l][t + 1].array().tanh().matrix());
      tr.gates[l][t] = std::move(z);
    }
  }
  tr.logits = matrix(params_, "out.w") * tr.h[L - 1][T] + vector(params_, "out.b");
}

Eigen::VectorXd InteractionModel::classify_inputs(std::span<const Eigen::VectorXd> steps) const {
  Trace tr;
  run(steps, tr);
  return softmax(tr.logits);
}

Eigen::VectorXd InteractionModel::classify_sequence(const SequenceSample& sample) const {
  if (sample.frames.empty()) throw Error(ErrorCode::EmptySequence, "cannot classify an empty sequence");
  return classify_inputs(encode(sample).steps);
}

InteractionModel::Gradient InteractionModel::loss_and_gradient(std::span<const Eigen::VectorXd> steps,
                                                               int label) const {
  if (label < 0 || label >= config_.num_interactions) {
    throw Error(ErrorCode::ConfigOutOfRange, "sequence label out of range");
  }
  Trace tr;
  run(steps, tr);
  const std::size_t T = steps.size();
  const int H = config_.lstm_hidden;
  const int L = config_.lstm_layers;

  Gradient out;
  out.grad = params_.zeros_like();
  const Eigen::VectorXd p = softmax(tr.logits);
  out.loss = -std::log(std::max(p(label), 1e-300));

  Eigen::VectorXd dlogits = p;
  dlogits(label) -= 1.0;
  matrix(out.grad, "out.w") = dlogits * tr.h[L - 1][T].transpose();
  vector(out.grad, "out.b") = dlogits;

  // dh_above[t]: gradient flowing into layer l's output at step t from above.
  std::vector<Eigen::VectorXd> dh_above(T, Eigen::VectorXd::Zero(H));
  dh_above[T - 1] = matrix(params_, "out.w").transpose() * dlogits;
  std::vector<Eigen::VectorXd> dx(T);

  for (int l = L - 1; l >= 0; --l) {
    const auto Wx = matrix(params_, lstm_name(l, "wx"));
    const auto Wh = matrix(params_, lstm_name(l, "wh"));
    auto dWx = matrix(out.grad, lstm_name(l, "wx"));
    auto dWh = matrix(out.grad, lstm_name(l, "wh"));
    auto db = vector(out.grad, lstm_name(l, "b"));
    Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(H);
    Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(H);
    for (std::size_t t = T; t-- > 0;) {
      const Eigen::VectorXd& z = tr.gates[l][t];
      const auto i = z.segment(0, H).array();
      const auto f = z.segment(H, H).array();
      const auto g = z.segment(2 * H, H).array();
      const auto o = z.segment(3 * H, H).array();
      const Eigen::ArrayXd tc = tr.c[l][t + 1].array().tanh();

      const Eigen::ArrayXd dh = (dh_above[t] + dh_next).array();
      const Eigen::ArrayXd dc = dh * o * (1.0 - tc * tc) + dc_next.array();
      Eigen::VectorXd dz(4 * H);
      dz.segment(0, H) = (dc * g * i * (1.0 - i)).matrix();
      dz.segment(H, H) = (dc * tr.c[l][t].array() * f * (1.0 - f)).matrix();
      dz.segment(2 * H, H) = (dc * i * (1.0 - g * g)).matrix();
      dz.segment(3 * H, H) = (dh * tc * o * (1.0 - o)).matrix();

      dWx.noalias() += dz * tr.x[l][t].transpose();
      dWh.noalias() += dz * tr.h[l][t].transpose();
      db += dz;
      dx[t] = Wx.transpose() * dz;
      dh_next = Wh.transpose() * dz;
      dc_next = (dc * f).matrix();
    }
    if (l > 0) dh_above = dx;
  }

  if (config_.interaction_mlp) {
    const auto W2 = matrix(params_, "mlp.w2");
    auto dW1 = matrix(out.grad, "mlp.w1");
    auto db1 = vector(out.grad, "mlp.b1");
    auto dW2 = matrix(out.grad, "mlp.w2");
    auto db2 = vector(out.grad, "mlp.b2");
    for (std::size_t t = 0; t < T; ++t) {
      dW2.noalias() += dx[t] * tr.mlp_hidden[t].transpose();
      db2 += dx[t];
      const Eigen::VectorXd dhid =
          (W2.transpose() * dx[t]).cwiseProduct((tr.mlp_pre[t].array() > 0.0).cast<double>().matrix());
      dW1.noalias() += dhid * tr.inputs[t].transpose();
      db1 += dhid;
    }
  }
  return out;
}

std::uint64_t InteractionModel::activation_signature(std::span<const Eigen::VectorXd> steps) const {
  std::uint64_t h = 1469598103934665603ULL;
  if (!config_.interaction_mlp) return h;
  for (const auto& s : steps) {
    Eigen::VectorXd pre;
    apply_mlp(s, &pre, nullptr);
    for (Eigen::Index i = 0; i < pre.size(); ++i) {
      h ^= pre(i) > 0.0 ? 1u : 0u;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

WeightImportance weight_importance(const InteractionModel& model) {
  const auto& cfg = model.config();
  if (!cfg.use_hand_pose) {
    throw Error(ErrorCode::WidthMismatch, "weight importance needs hand pose inputs");
  }
  const auto& t = model.params().at(cfg.interaction_mlp ? "mlp.w1" : "lstm0.wx");
  const ConstMap W(t.values.data(), t.shape[0], t.shape[1]);

  WeightImportance imp;
  double total = 0.0;
  for (std::size_t j = 0; j < kNumControlPoints; ++j) {
    imp.per_joint[j] = W.middleCols(static_cast<Eigen::Index>(3 * j), 3).cwiseAbs().sum();
    total += imp.per_joint[j];
  }
  for (double& v : imp.per_joint) v = total > 0.0 ? v / total : 1.0 / kNumControlPoints;

  // Joint order: wrist, then per finger (thumb..pinky) MCP, PIP, DIP, TIP.
  imp.per_part[0] = imp.per_joint[0];
  for (std::size_t f = 0; f < 5; ++f) {
    for (std::size_t k = 0; k < 4; ++k) {
      const double v = imp.per_joint[1 + 4 * f + k];
      imp.per_part[1 + k] += v;
      imp.per_finger[f] += v;
    }
  }
  return imp;
}

double train_interaction_epoch(InteractionModel& model, std::span<const SequenceInputs> data, double lr,
                               const InteractionTrainOptions& opts, std::mt19937_64& rng, ParamSet& velocity) {
  if (!(lr >= 0.0) || opts.batch_size < 1) {
    throw Error(ErrorCode::ConfigOutOfRange, "interaction training needs lr >= 0 and batch size >= 1");
  }
  if (!velocity.same_structure(model.params())) velocity = model.params().zeros_like();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  double loss_sum = 0.0;
  ParamSet batch = model.params().zeros_like();
  for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opts.batch_size));
    batch.set_zero();
    for (std::size_t b = start; b < end; ++b) {
      const auto& s = data[order[b]];
      auto g = model.loss_and_gradient(s.steps, s.label);
      loss_sum += g.loss;
      batch.axpy(1.0, g.grad);
    }
    batch.scale(1.0 / static_cast<double>(end - start));
    if (opts.clip_norm > 0.0) {
      const double norm = std::sqrt(batch.squared_norm());
      if (norm > opts.clip_norm) batch.scale(opts.clip_norm / norm);
    }
    velocity.scale(opts.momentum);
    velocity.axpy(1.0, batch);
    model.params().axpy(-lr, velocity);
    if (!model.params().all_finite()) {
      throw Error(ErrorCode::NonFiniteLoss, "interaction parameters diverged");
    }
  }
  return data.empty() ? 0.0 : loss_sum / static_cast<double>(data.size());
}

double interaction_accuracy(const InteractionModel& model, std::span<const SequenceInputs> data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : data) {
    Eigen::Index best = 0;
    model.classify_inputs(s.steps).maxCoeff(&best);
    if (best == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace hopose
