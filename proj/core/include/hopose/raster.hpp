#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace hopose {

/// Interleaved (row, column, channel) image with values in [0, 1].
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  Raster() = default;
  Raster(int w, int h, int c) : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, 0.0f) {}

  float& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  bool empty() const { return data.empty(); }
};

/// Binary PGM (1 channel) or PPM (3 channels), 8 bits per sample.
void write_pnm(const std::filesystem::path& path, const Raster& raster);
Raster read_pnm(const std::filesystem::path& path);

/// Round-trips values through the 8-bit storage used by write_pnm.
void quantize_8bit(Raster& raster);

}  // namespace hopose
