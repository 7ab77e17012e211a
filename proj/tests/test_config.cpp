#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "hopose/config.hpp"
#include "hopose/error.hpp"

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

}  // namespace

TEST_CASE("presets validate and differ where they should") {
  const RunConfig toy = preset_config("toy");
  const RunConfig full = preset_config("paper");
  toy.validate();
  full.validate();
  CHECK(toy.grid.H == 7);
  CHECK(toy.grid.D == 3);
  CHECK(full.grid.H == 13);
  CHECK(full.grid.W == 13);
  CHECK(full.grid.D == 5);
  CHECK(full.grid.dth_px == 75.0);
  CHECK(full.grid.alpha == 2.0);
  CHECK(full.loss.conf_obj == 5.0);
  CHECK(full.loss.conf_noobj == 0.1);
  CHECK(config_hash(toy) != config_hash(full));
  CHECK(model_hash(toy) != model_hash(full));
  CHECK(error_code([] { preset_config("huge"); }) == ErrorCode::ConfigError);
}

TEST_CASE("parse: overrides, comments and blank lines") {
  const RunConfig c = parse_config(
      "# a comment\n"
      "preset = toy\n"
      "\n"
      "seed = 42   # trailing comment\n"
      "optim.epochs = 3\n"
      "optim.drop_epochs = 1,2\n"
      "backbone.layers = 8:3:2,8:3:2,8:3:2,8:3:2\n"
      "stage2.inputs = ground_truth\n");
  CHECK(c.seed == 42);
  CHECK(c.optim.epochs == 3);
  CHECK(c.optim.drop_epochs == std::vector<int>{1, 2});
  CHECK(c.backbone.layers.size() == 4);
  CHECK(c.backbone.layers[0].out_channels == 8);
  CHECK(c.stage2.inputs == "ground_truth");
  CHECK(c.grid.H == 7);  // untouched toy default
}

TEST_CASE("parse: malformed input raises ConfigError") {
  CHECK(error_code([] { parse_config("preset = toy\nno_such.key = 1\n"); }) == ErrorCode::ConfigError);
  CHECK(error_code([] { parse_config("preset = toy\nseed = 1\nseed = 2\n"); }) == ErrorCode::ConfigError);
  CHECK(error_code([] { parse_config("preset = toy\nseed\n"); }) == ErrorCode::ConfigError);
  CHECK(error_code([] { parse_config("preset = toy\noptim.lr = fast\n"); }) == ErrorCode::ConfigError);
  CHECK(error_code([] { parse_config("preset = toy\ngrid.H = 3.5\n"); }) == ErrorCode::ConfigError);
  CHECK(error_code([] { parse_config("preset = toy\nloss.online_confidence = maybe\n"); }) == ErrorCode::ConfigError);
  CHECK(error_code([] { parse_config("preset = toy\nbackbone.layers = 8:3\n"); }) == ErrorCode::ConfigError);
  CHECK(error_code([] { load_config("/nonexistent/run.cfg"); }) == ErrorCode::MissingArtifact);
}

TEST_CASE("validation catches out-of-range values") {
  auto bad = [](const std::string& line) {
    return error_code([&] { parse_config("preset = toy\n" + line + "\n").validate(); });
  };
  CHECK(bad("optim.lr = -1") == ErrorCode::ConfigOutOfRange);
  CHECK(bad("optim.drop_epochs = 90,80") == ErrorCode::ConfigOutOfRange);
  CHECK(bad("optim.drop_epochs = 200") == ErrorCode::ConfigOutOfRange);
  CHECK(bad("stage2.momentum = 1") == ErrorCode::ConfigOutOfRange);
  CHECK(bad("stage2.augment_copies = -1") == ErrorCode::ConfigOutOfRange);
  CHECK(bad("stage2.inputs = guessed") == ErrorCode::ConfigOutOfRange);
  CHECK(bad("image.channels = 2") == ErrorCode::ConfigOutOfRange);
  CHECK(bad("grid.alpha = 0") == ErrorCode::ConfigOutOfRange);
  CHECK(bad("labels.num_interactions = 13") == ErrorCode::ConfigOutOfRange);
}

TEST_CASE("canonical text round trips and hashes are stable") {
  RunConfig c = preset_config("toy");
  c.seed = 9;
  c.stage2.augment_copies = 3;
  const std::string text = canonical_config(c);
  const RunConfig back = parse_config(text);
  CHECK(canonical_config(back) == text);
  CHECK(config_hash(back) == config_hash(c));
  CHECK(config_hash(c) == sha256_hex(text));
  CHECK(config_hash(c).size() == 64);

  // the model hash ignores training-only keys
  RunConfig d = c;
  d.seed = 10;
  d.optim.lr = 0.001;
  d.stage2.epochs = 5;
  CHECK(model_hash(d) == model_hash(c));
  CHECK(config_hash(d) != config_hash(c));
  d.grid.alpha = 3.0;
  CHECK(model_hash(d) != model_hash(c));

  const auto entries = config_entries(c);
  CHECK(entries.at("stage2.augment_copies") == "3");
  CHECK(entries.at("seed") == "9");
}

TEST_CASE("known SHA-256 vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("save and load resolve relative paths against the file") {
  const auto dir = std::filesystem::temp_directory_path() / "hopose_cfg_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  RunConfig c = preset_config("toy");
  c.data.dir = "data";
  c.output_dir = "out";
  save_config(dir / "run.cfg", c);
  const RunConfig back = load_config(dir / "run.cfg");
  CHECK(canonical_config(back) == canonical_config(c));
  CHECK(back.data_path() == dir / "data");
  CHECK(back.output_path() == dir / "out");
  CHECK(file_sha256(dir / "run.cfg") == config_hash(c));
  std::filesystem::remove_all(dir);
}
