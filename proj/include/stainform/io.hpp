#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "stainform/image.hpp"

namespace stainform {

/// Decoded 8-bit PNG before any channel conversion.
struct RawPng {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> data;
};

RawPng read_png_raw(const std::filesystem::path& path);
void write_png_raw(const std::filesystem::path& path, const RawPng& png);

/// RGB, grayscale and palette PNGs are accepted; grayscale is replicated to
/// three channels. Alpha and 16-bit files are rejected.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

/// Binary PPM, P6, maxval 255.
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);

/// Dispatches on file extension (.png, .ppm).
Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& image);

bool is_image_path(const std::filesystem::path& path);

}  // namespace stainform
