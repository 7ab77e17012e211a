#include <benchmark/benchmark.h>

#include "hopose/codec.hpp"
#include "hopose/config.hpp"
#include "hopose/network.hpp"
#include "hopose/rigidpose.hpp"
#include "hopose/synth.hpp"

namespace {

const hopose::RunConfig& toy() {
  static const hopose::RunConfig cfg = hopose::preset_config("toy");
  return cfg;
}

void BM_ForwardToy(benchmark::State& state) {
  const hopose::Network net(toy().network_config());
  const auto params = net.init_params(1);
  const auto scene = hopose::sample_scene(7, toy().synth_config());
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(params, scene.raster));
}
BENCHMARK(BM_ForwardToy);

void BM_LossAndGradientToy(benchmark::State& state) {
  const auto& cfg = toy();
  const hopose::Network net(cfg.network_config());
  const auto params = net.init_params(1);
  const auto scene = hopose::sample_scene(7, cfg.synth_config());
  const auto target = hopose::encode_frame(scene, cfg.grid, cfg.labels, cfg.camera);
  for (auto _ : state) benchmark::DoNotOptimize(net.loss_and_gradient(params, scene.raster, target, cfg.loss));
}
BENCHMARK(BM_LossAndGradientToy);

void BM_EncodeDecode(benchmark::State& state) {
  const auto& cfg = toy();
  const auto scene = hopose::sample_scene(7, cfg.synth_config());
  for (auto _ : state) {
    const auto target = hopose::encode_frame(scene, cfg.grid, cfg.labels, cfg.camera);
    benchmark::DoNotOptimize(hopose::prediction_from_target(target, cfg.camera));
  }
}
BENCHMARK(BM_EncodeDecode);

void BM_DecodeGridAndPrune(benchmark::State& state) {
  const auto& cfg = toy();
  const auto scene = hopose::sample_scene(7, cfg.synth_config());
  const auto raw = hopose::target_to_raw(hopose::encode_frame(scene, cfg.grid, cfg.labels, cfg.camera));
  for (auto _ : state) {
    const auto cells = hopose::decode_grid(raw, cfg.camera);
    benchmark::DoNotOptimize(hopose::prune(cells));
  }
}
BENCHMARK(BM_DecodeGridAndPrune);

void BM_Procrustes(benchmark::State& state) {
  const auto src = hopose::cuboid_control_points(hopose::Cuboid{hopose::Vec3(0.05, 0.03, 0.02)});
  const hopose::Pose6D pose{hopose::rotation_from_axis_angle(hopose::Vec3(1, 2, 3), 0.7), hopose::Vec3(0.1, 0, 0.5)};
  const auto dst = hopose::transform_points(pose, src);
  for (auto _ : state) benchmark::DoNotOptimize(hopose::procrustes_align(src, dst));
}
BENCHMARK(BM_Procrustes);

void BM_PnpDlt(benchmark::State& state) {
  const hopose::CameraIntrinsics k{600, 600, 208, 208};
  const auto src = hopose::cuboid_control_points(hopose::Cuboid{hopose::Vec3(0.05, 0.03, 0.02)});
  const hopose::Pose6D pose{hopose::rotation_from_axis_angle(hopose::Vec3(1, 2, 3), 0.7), hopose::Vec3(0.1, 0, 0.5)};
  const auto dst = hopose::transform_points(pose, src);
  std::array<hopose::Pixel2, hopose::kNumControlPoints> px{};
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = hopose::project(dst[i], k);
  for (auto _ : state) benchmark::DoNotOptimize(hopose::pnp_dlt(px, src.view(), k));
}
BENCHMARK(BM_PnpDlt);

void BM_RenderToy(benchmark::State& state) {
  const auto scene = hopose::sample_scene(7, toy().synth_config());
  for (auto _ : state) benchmark::DoNotOptimize(hopose::render(scene, toy().synth_config()));
}
BENCHMARK(BM_RenderToy);

}  // namespace

BENCHMARK_MAIN();
