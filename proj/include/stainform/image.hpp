#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace stainform {

/// Interleaved 8-bit RGB raster. This is the canonical pixel storage; the
/// float workspace is FloatImage.
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int width, int height);
  Image(int width, int height, std::vector<std::uint8_t> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  bool empty() const noexcept { return width_ == 0 || height_ == 0; }

  std::uint8_t& at(int x, int y, int c) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }

  std::span<std::uint8_t> data() noexcept { return data_; }
  std::span<const std::uint8_t> data() const noexcept { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Interleaved RGB float raster with values nominally in [0,1].
class FloatImage {
 public:
  static constexpr int kChannels = 3;

  FloatImage() = default;
  FloatImage(int width, int height, float fill = 0.0f);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  float& at(int x, int y, int c) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }
  float at(int x, int y, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  friend bool operator==(const FloatImage&, const FloatImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

/// v / 255 per channel.
FloatImage to_float(const Image& image);

/// Clamp to [0,1], scale by 255 and round half up.
Image to_8bit(const FloatImage& image);

inline std::uint8_t quantize(float v) {
  const float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return static_cast<std::uint8_t>(static_cast<int>(c * 255.0f + 0.5f));
}

}  // namespace stainform
