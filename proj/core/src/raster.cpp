#include "hopose/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "hopose/error.hpp"

namespace hopose {

namespace {

unsigned char to_byte(float v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void skip_whitespace_and_comments(std::istream& in) {
  while (true) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

}  // namespace

void write_pnm(const std::filesystem::path& path, const Raster& raster) {
  if (raster.channels != 1 && raster.channels != 3) {
    throw Error(ErrorCode::ShapeMismatch, "pnm supports 1 or 3 channels");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << (raster.channels == 1 ? "P5" : "P6") << '\n' << raster.width << ' ' << raster.height << "\n255\n";
  std::vector<unsigned char> bytes(raster.data.size());
  std::transform(raster.data.begin(), raster.data.end(), bytes.begin(), to_byte);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Raster read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot read raster " + path.string());
  std::string magic;
  in >> magic;
  int channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw Error(ErrorCode::IoError, "unsupported raster format in " + path.string());
  }
  int w = 0;
  int h = 0;
  int maxval = 0;
  skip_whitespace_and_comments(in);
  in >> w;
  skip_whitespace_and_comments(in);
  in >> h;
  skip_whitespace_and_comments(in);
  in >> maxval;
  in.get();
  if (!in || w <= 0 || h <= 0 || maxval != 255) {
    throw Error(ErrorCode::IoError, "bad raster header in " + path.string());
  }
  Raster r(w, h, channels);
  std::vector<unsigned char> bytes(r.data.size());
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw Error(ErrorCode::IoError, "truncated raster " + path.string());
  }
  std::transform(bytes.begin(), bytes.end(), r.data.begin(), [](unsigned char b) { return b / 255.0f; });
  return r;
}

void quantize_8bit(Raster& raster) {
  for (float& v : raster.data) v = to_byte(v) / 255.0f;
}

}  // namespace hopose
