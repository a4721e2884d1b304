#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace kandu {

/// 8-bit interleaved image (1 = gray, 3 = RGB).
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
};

/// Decodes any PNG to 8-bit gray or RGB (palette, 16-bit and alpha are
/// converted; gray+alpha drops alpha). Throws std::runtime_error naming the
/// path on failure.
Image8 read_png(const std::filesystem::path& path);

/// Writes an 8-bit gray or RGB PNG with fixed encoder settings, so equal
/// images produce byte-identical files.
void write_png(const std::filesystem::path& path, const Image8& image);

}  // namespace kandu
