#include "hopose/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "hopose/error.hpp"
#include "json.hpp"

namespace hopose {

namespace {

constexpr char kMagic[4] = {'H', 'O', 'C', 'K'};

template <class T>
T to_le(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    T out{};
    auto* src = reinterpret_cast<const unsigned char*>(&v);
    auto* dst = reinterpret_cast<unsigned char*>(&out);
    for (std::size_t i = 0; i < sizeof(T); ++i) dst[i] = src[sizeof(T) - 1 - i];
    return out;
  }
  return v;
}

template <class T>
void write_le(std::ostream& out, T v) {
  v = to_le(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <class T>
T read_le(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw Error(ErrorCode::IoError, "truncated checkpoint " + path.string());
  return to_le(v);
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header, const ParamSet& params) {
  nlohmann::ordered_json j;
  j["format"] = "hopose-checkpoint";
  j["format_version"] = header.format_version;
  j["kind"] = header.kind;
  j["config_hash"] = header.config_hash;
  j["model_hash"] = header.model_hash;
  j["epoch"] = header.epoch;
  j["seed"] = header.seed;
  j["backbone_hash"] = header.backbone_hash;
  j["config"] = header.config_text;
  j["dtype"] = "float32-le";
  auto& tensors = j["tensors"] = nlohmann::ordered_json::array();
  for (const auto& t : params.tensors()) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
  const std::string text = j.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write checkpoint " + path.string());
  out.write(kMagic, 4);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(kCheckpointVersion));
  write_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : params.tensors()) {
    for (const double v : t.values) write_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot read checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorCode::IoError, path.string() + " is not a checkpoint");
  }
  const auto version = read_le<std::uint32_t>(in, path);
  if (version != static_cast<std::uint32_t>(kCheckpointVersion)) {
    throw Error(ErrorCode::IoError, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto length = read_le<std::uint64_t>(in, path);
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw Error(ErrorCode::IoError, "truncated checkpoint header in " + path.string());

  Checkpoint ck;
  try {
    const auto j = nlohmann::json::parse(text);
    auto& h = ck.header;
    h.format_version = j.at("format_version").get<int>();
    h.kind = j.at("kind").get<std::string>();
    h.config_hash = j.at("config_hash").get<std::string>();
    h.model_hash = j.at("model_hash").get<std::string>();
    h.epoch = j.at("epoch").get<int>();
    h.seed = j.at("seed").get<std::uint64_t>();
    h.backbone_hash = j.at("backbone_hash").get<std::string>();
    h.config_text = j.at("config").get<std::string>();
    for (const auto& t : j.at("tensors")) {
      ck.params.add(t.at("name").get<std::string>(), t.at("shape").get<std::vector<int>>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, "malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  for (auto& t : ck.params.tensors()) {
    for (double& v : t.values) v = std::bit_cast<float>(read_le<std::uint32_t>(in, path));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::IoError, "trailing bytes in checkpoint " + path.string());
  }
  return ck;
}

void round_to_float32(ParamSet& params) {
  for (auto& t : params.tensors()) {
    for (double& v : t.values) v = static_cast<float>(v);
  }
}

}  // namespace hopose
