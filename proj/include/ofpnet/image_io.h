#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ofpnet::io {

// 8-bit interleaved image, 1 (gray) or 3 (RGB) channels.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

// Any PNG flavour is expanded/stripped to 8-bit gray or RGB (alpha dropped,
// palette expanded, 16-bit reduced). Throws DataError on failure.
Image8 read_png(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const Image8& image);

inline std::uint8_t quantize(float v) {
  const float c = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
  return static_cast<std::uint8_t>(c * 255.f + 0.5f);
}

}  // namespace ofpnet::io
