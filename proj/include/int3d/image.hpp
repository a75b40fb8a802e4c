#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "int3d/common.hpp"

namespace int3d {

/// Interleaved float image, values in [0,1], 1 (gray) or 3 (rgb) channels.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c) : width(w), height(h), channels(c), data(size_t(w) * h * c, 0.0f) {}

  float& at(int x, int y, int c) { return data[(size_t(y) * width + x) * channels + c]; }
  float at(int x, int y, int c) const { return data[(size_t(y) * width + x) * channels + c]; }

  size_t pixel_count() const { return size_t(width) * size_t(height); }
};

/// 8-bit quantization with round-half-up, the convention for every PNG this
/// project writes.
inline std::uint8_t quantize8(float v) {
  float c = std::min(std::max(v, 0.0f), 1.0f);
  return static_cast<std::uint8_t>(std::floor(c * 255.0f + 0.5f));
}

/// Writes an 8-bit PNG (grayscale or rgb by channel count). The encoder is
/// fully deterministic: filter 0 rows inside stored deflate blocks.
void write_png(const Image& img, const std::string& path);

/// Reads PNGs produced by write_png (8-bit gray or rgb, non-interlaced).
Image read_png(const std::string& path);

}  // namespace int3d
