#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "hopose/error.hpp"
#include "hopose/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hand-object pose and interaction recognition on a 3D grid"};
  app.require_subcommand(1);
  app.set_version_flag("--version", hopose::kVersion);

  std::uint64_t seed = 0;
  std::string preset = "toy";
  std::string out;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset and its run config");
  gen->add_option("--seed", seed, "Run seed")->required();
  gen->add_option("--preset", preset, "Config preset")->check(CLI::IsMember({"toy", "paper"}));
  gen->add_option("--out", out, "Output directory")->required();

  std::string config;
  int stage = 1;
  auto* train = app.add_subcommand("train", "Train stage 1 (single-image network) or stage 2 (interaction model)");
  train->add_option("--config", config, "Run config file")->required()->check(CLI::ExistingFile);
  train->add_option("--stage", stage, "Training stage")->required()->check(CLI::IsMember({1, 2}));

  std::string ckpt;
  std::string data;
  std::string report_dir;
  auto* eval = app.add_subcommand("eval", "Evaluate checkpoints on the held-out split");
  eval->add_option("--config", config, "Run config file")->required()->check(CLI::ExistingFile);
  eval->add_option("--ckpt", ckpt, "Backbone checkpoint or checkpoint directory")->required();
  eval->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--report-dir", report_dir, "Report output directory")->required();

  std::string tensor;
  std::string spec;
  auto* decode = app.add_subcommand("decode", "Decode a serialized grid tensor");
  decode->add_option("--tensor", tensor, "Float32 tensor blob")->required()->check(CLI::ExistingFile);
  decode->add_option("--spec", spec, "JSON sidecar (defaults to <tensor>.json)");

  auto* importance = app.add_subcommand("importance", "Per-joint weight importance of an interaction checkpoint");
  importance->add_option("--ckpt", ckpt, "Interaction or baseline checkpoint")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) {
      hopose::run_gen_data(seed, preset, out, &std::cerr);
    } else if (*train) {
      hopose::run_train(config, stage, &std::cerr);
    } else if (*eval) {
      hopose::run_eval(config, ckpt, data, report_dir, &std::cerr);
    } else if (*decode) {
      std::cout << hopose::run_decode(tensor, spec.empty() ? tensor + ".json" : spec) << '\n';
    } else if (*importance) {
      std::cout << hopose::run_importance(ckpt) << '\n';
    }
  } catch (const hopose::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_config_error() ? kExitConfig : kExitNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}
