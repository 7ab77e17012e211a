#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "hopose/error.hpp"
#include "hopose/interaction.hpp"

using namespace hopose;

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

InteractionConfig small_config(bool mlp = true) {
  InteractionConfig c;
  c.mlp_hidden = 6;
  c.lstm_hidden = 5;
  c.lstm_layers = 2;
  c.num_actions = 4;
  c.num_objects = 3;
  c.num_interactions = 12;
  c.interaction_mlp = mlp;
  return c;
}

ControlPointSet random_set(std::mt19937_64& rng, PointRole role) {
  std::normal_distribution<double> n(0.0, 0.05);
  ControlPointSet s{role, {}};
  for (auto& p : s.points) p = Vec3(n(rng), n(rng), 0.5 + n(rng));
  return s;
}

FramePrediction random_frame(std::mt19937_64& rng) {
  FramePrediction f;
  f.hand.points = random_set(rng, PointRole::Hand);
  f.object.points = random_set(rng, PointRole::Object);
  f.hand.probs = {0.1, 0.2, 0.3, 0.4};
  f.object.probs = {0.5, 0.25, 0.25};
  return f;
}

Eigen::VectorXd sig(const Eigen::VectorXd& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

Eigen::MatrixXd mat(const ParamSet& p, const std::string& name) {
  const auto& t = p.at(name);
  Eigen::MatrixXd m(t.shape[0], t.shape[1]);
  for (int r = 0; r < t.shape[0]; ++r) {
    for (int c = 0; c < t.shape[1]; ++c) m(r, c) = t.values[static_cast<std::size_t>(r) * t.shape[1] + c];
  }
  return m;
}

Eigen::VectorXd vec(const ParamSet& p, const std::string& name) {
  const auto& t = p.at(name);
  return Eigen::Map<const Eigen::VectorXd>(t.values.data(), static_cast<Eigen::Index>(t.values.size()));
}

double sequence_loss(const InteractionModel& m, std::span<const Eigen::VectorXd> steps, int label) {
  return -std::log(m.classify_inputs(steps)(label));
}

}  // namespace

TEST_CASE("input widths follow the feature flags") {
  InteractionConfig c = small_config();
  CHECK(c.pose_width() == 126);
  CHECK(c.extra_width() == 0);
  c.use_action_probs = true;
  c.use_object_probs = true;
  CHECK(c.input_width() == 133);
  CHECK(c.feature_width() == 6);
  c.interaction_mlp = false;
  CHECK(c.feature_width() == 133);
  c.use_hand_pose = c.use_object_pose = c.use_action_probs = c.use_object_probs = false;
  CHECK(error_code([&] { c.validate(); }) == ErrorCode::ConfigOutOfRange);
}

TEST_CASE("zero inputs and zero params give a zero feature vector") {
  InteractionModel m(small_config());
  ControlPointSet zero{PointRole::Hand, {}};
  const Eigen::VectorXd f = m.interaction_features(zero, zero);
  CHECK(f.size() == 6);
  CHECK(f.isZero(0.0));
}

TEST_CASE("rectifier range: identity output layer gives nonnegative features") {
  InteractionModel m(small_config());
  m.init(3);
  auto& w2 = m.params().at("mlp.w2").values;
  std::fill(w2.begin(), w2.end(), 0.0);
  for (int i = 0; i < 6; ++i) w2[i * 6 + i] = 1.0;
  auto& b2 = m.params().at("mlp.b2").values;
  std::fill(b2.begin(), b2.end(), 0.0);
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd f =
        m.interaction_features(random_set(rng, PointRole::Hand), random_set(rng, PointRole::Object));
    CHECK(f.minCoeff() >= 0.0);
  }
}

TEST_CASE("hand and object blocks are not interchangeable") {
  std::mt19937_64 rng(2);
  int differ = 0;
  for (int trial = 0; trial < 20; ++trial) {
    InteractionModel m(small_config());
    m.init(100 + trial);
    auto& b1 = m.params().at("mlp.b1").values;
    for (double& v : b1) v = 0.5;  // keep some rectifiers open
    const ControlPointSet a = random_set(rng, PointRole::Hand);
    const ControlPointSet b = random_set(rng, PointRole::Object);
    InteractionConfig abs_cfg = small_config();
    abs_cfg.root_relative = false;
    InteractionModel m2(abs_cfg);
    m2.set_params(m.params());
    if ((m2.interaction_features(a, b) - m2.interaction_features(b, a)).norm() > 1e-9) ++differ;
  }
  CHECK(differ > 0);
}

TEST_CASE("extra feature width is checked") {
  InteractionConfig c = small_config();
  c.use_object_probs = true;
  InteractionModel m(c);
  ControlPointSet zero{PointRole::Hand, {}};
  const std::vector<double> three = {0.2, 0.3, 0.5};
  CHECK(m.interaction_features(zero, zero, three).size() == 6);
  const std::vector<double> four = {0.25, 0.25, 0.25, 0.25};
  CHECK(error_code([&] { m.interaction_features(zero, zero, four); }) == ErrorCode::WidthMismatch);
}

TEST_CASE("root-relative frame input") {
  InteractionModel m(small_config());
  std::mt19937_64 rng(3);
  const ControlPointSet h = random_set(rng, PointRole::Hand);
  const ControlPointSet o = random_set(rng, PointRole::Object);
  const Eigen::VectorXd x = m.frame_input(h, o);
  CHECK(x.size() == 126);
  CHECK(x.segment<3>(0).isZero(0.0));
  const Vec3 expect = (o[4] - h[0]) * 10.0;
  CHECK((x.segment<3>(63 + 12) - expect).norm() < 1e-15);
}

TEST_CASE("zero params classify uniformly; empty sequences are rejected") {
  InteractionModel m(small_config());
  std::mt19937_64 rng(4);
  SequenceSample s;
  for (int t = 0; t < 3; ++t) s.frames.push_back(random_frame(rng));
  const Eigen::VectorXd p = m.classify_sequence(s);
  for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(p(i) == doctest::Approx(1.0 / 12).epsilon(1e-15));
  CHECK(error_code([&] { m.classify_sequence(SequenceSample{}); }) == ErrorCode::EmptySequence);
}

TEST_CASE("outputs are distributions for random models and inputs") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    InteractionModel m(small_config(trial % 2 == 0));
    m.init(trial);
    SequenceSample s;
    for (int t = 0; t < 1 + trial % 6; ++t) s.frames.push_back(random_frame(rng));
    const Eigen::VectorXd p = m.classify_sequence(s);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(std::abs(p.sum() - 1.0) < 1e-6);
  }
}

TEST_CASE("single frame equals one recurrent step on the mlp features") {
  InteractionModel m(small_config());
  m.init(6);
  std::mt19937_64 rng(6);
  SequenceSample s;
  s.frames.push_back(random_frame(rng));
  const ParamSet& P = m.params();
  const Eigen::VectorXd feat = m.interaction_features(s.frames[0].hand.points, s.frames[0].object.points);
  Eigen::VectorXd x = feat;
  const int H = 5;
  for (int l = 0; l < 2; ++l) {
    const std::string pre = "lstm" + std::to_string(l) + ".";
    const Eigen::VectorXd z = mat(P, pre + "wx") * x + vec(P, pre + "b");  // h_0 = 0
    const Eigen::VectorXd i = sig(z.segment(0, H));
    const Eigen::VectorXd g = z.segment(2 * H, H).array().tanh().matrix();
    const Eigen::VectorXd o = sig(z.segment(3 * H, H));
    const Eigen::VectorXd c = i.cwiseProduct(g);  // c_0 = 0, forget gate irrelevant
    x = o.cwiseProduct(c.array().tanh().matrix());
  }
  Eigen::VectorXd logits = mat(P, "out.w") * x + vec(P, "out.b");
  const Eigen::VectorXd expect = logits.array().exp() / logits.array().exp().sum();
  CHECK((m.classify_sequence(s) - expect).norm() < 1e-14);
}

TEST_CASE("forget gate bias starts at one") {
  InteractionModel m(small_config());
  m.init(7);
  for (int l = 0; l < 2; ++l) {
    const auto b = vec(m.params(), "lstm" + std::to_string(l) + ".b");
    for (int k = 0; k < 20; ++k) CHECK(b(k) == (k >= 5 && k < 10 ? 1.0 : 0.0));
  }
}

TEST_CASE("recurrent gradient check through the mlp and both lstm layers") {
  for (bool mlp : {true, false}) {
    CAPTURE(mlp);
    InteractionConfig cfg = small_config(mlp);
    cfg.use_action_probs = true;
    InteractionModel m(cfg);
    m.init(8);
    std::mt19937_64 rng(8);
    for (double& v : m.params().at(cfg.interaction_mlp ? "mlp.b1" : "out.b").values) v = 0.3;
    for (int len = 1; len <= 5; ++len) {
      SequenceSample s;
      s.label = len % 12;
      for (int t = 0; t < len; ++t) s.frames.push_back(random_frame(rng));
      const SequenceInputs in = m.encode(s);
      const auto g = m.loss_and_gradient(in.steps, in.label);
      CHECK(g.loss == doctest::Approx(sequence_loss(m, in.steps, in.label)).epsilon(1e-12));
      const std::uint64_t sig0 = m.activation_signature(in.steps);
      double worst = 0;
      std::size_t checked = 0;
      const double eps = 1e-5;
      for (std::size_t i = 0; i < m.params().total_size(); i += 3) {
        InteractionModel probe = m;
        const double orig = probe.params().flat(i);
        probe.params().flat(i) = orig + eps;
        const bool ok_plus = probe.activation_signature(in.steps) == sig0;
        const double lp = sequence_loss(probe, in.steps, in.label);
        probe.params().flat(i) = orig - eps;
        const bool ok_minus = probe.activation_signature(in.steps) == sig0;
        const double lm = sequence_loss(probe, in.steps, in.label);
        if (!ok_plus || !ok_minus) continue;
        const double fd = (lp - lm) / (2 * eps);
        const double a = g.grad.flat(i);
        worst = std::max(worst, std::abs(fd - a) / std::max({std::abs(fd), std::abs(a), 1e-6}));
        ++checked;
      }
      CHECK(checked > 100);
      CHECK(worst < 1e-4);
    }
  }
}

TEST_CASE("weight importance: uniform, zeroed joint, normalization and scale invariance") {
  InteractionModel m(small_config());
  auto& w1 = m.params().at("mlp.w1").values;
  std::fill(w1.begin(), w1.end(), 0.7);
  WeightImportance imp = weight_importance(m);
  for (double v : imp.per_joint) CHECK(v == doctest::Approx(1.0 / 21).epsilon(1e-14));
  CHECK(imp.per_part[0] == doctest::Approx(1.0 / 21));
  for (int k = 1; k < 5; ++k) CHECK(imp.per_part[k] == doctest::Approx(5.0 / 21));

  m.init(9);
  const int in = 126;
  for (int r = 0; r < 6; ++r) {
    for (int a = 0; a < 3; ++a) w1[static_cast<std::size_t>(r) * in + 3 * 7 + a] = 0.0;
  }
  imp = weight_importance(m);
  CHECK(imp.per_joint[7] == 0.0);

  // direct summation oracle
  std::vector<double> raw(21, 0.0);
  for (int r = 0; r < 6; ++r) {
    for (int j = 0; j < 21; ++j) {
      for (int a = 0; a < 3; ++a) raw[j] += std::abs(w1[static_cast<std::size_t>(r) * in + 3 * j + a]);
    }
  }
  const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
  double sum = 0;
  for (int j = 0; j < 21; ++j) {
    CHECK(imp.per_joint[j] == doctest::Approx(raw[j] / total).epsilon(1e-12));
    CHECK(imp.per_joint[j] >= 0.0);
    sum += imp.per_joint[j];
  }
  CHECK(std::abs(sum - 1.0) < 1e-9);
  double part_sum = 0, finger_sum = 0;
  for (double v : imp.per_part) part_sum += v;
  for (double v : imp.per_finger) finger_sum += v;
  CHECK(std::abs(part_sum - 1.0) < 1e-9);
  CHECK(std::abs(finger_sum + imp.per_joint[0] - 1.0) < 1e-9);
  // TIP group = joints 4, 8, 12, 16, 20
  CHECK(imp.per_part[4] ==
        doctest::Approx(imp.per_joint[4] + imp.per_joint[8] + imp.per_joint[12] + imp.per_joint[16] + imp.per_joint[20]));

  const WeightImportance before = imp;
  for (double& v : w1) v *= 3.5;
  imp = weight_importance(m);
  for (int j = 0; j < 21; ++j) CHECK(imp.per_joint[j] == doctest::Approx(before.per_joint[j]).epsilon(1e-12));
}

TEST_CASE("weight importance of the plain recurrent baseline reads the lstm input matrix") {
  InteractionModel m(small_config(false));
  m.init(10);
  auto& wx = m.params().at("lstm0.wx").values;
  for (int r = 0; r < 20; ++r) {
    for (int a = 0; a < 3; ++a) wx[static_cast<std::size_t>(r) * 126 + 3 * 2 + a] = 0.0;
  }
  const WeightImportance imp = weight_importance(m);
  CHECK(imp.per_joint[2] == 0.0);
  CHECK(std::abs(std::accumulate(imp.per_joint.begin(), imp.per_joint.end(), 0.0) - 1.0) < 1e-9);
}

TEST_CASE("training separates two trivially different classes") {
  InteractionConfig cfg = small_config();
  cfg.num_interactions = 2;
  cfg.num_actions = 2;
  cfg.num_objects = 1;
  InteractionModel m(cfg);
  m.init(11);
  std::mt19937_64 rng(11);
  std::vector<SequenceInputs> data;
  for (int n = 0; n < 40; ++n) {
    SequenceSample s;
    s.label = n % 2;
    for (int t = 0; t < 4; ++t) {
      FramePrediction f = random_frame(rng);
      for (auto& p : f.object.points.points) p.x() += s.label ? 0.1 : -0.1;
      f.hand.probs = {0.5, 0.5};
      f.object.probs = {1.0};
      s.frames.push_back(f);
    }
    data.push_back(m.encode(s));
  }
  InteractionTrainOptions o;
  o.batch_size = 8;
  ParamSet velocity;
  double first = 0, last = 0;
  for (int e = 0; e < 40; ++e) {
    const double loss = train_interaction_epoch(m, data, 0.05, o, rng, velocity);
    if (e == 0) first = loss;
    last = loss;
  }
  CHECK(last < 0.5 * first);
  CHECK(interaction_accuracy(m, data) == 1.0);
}
