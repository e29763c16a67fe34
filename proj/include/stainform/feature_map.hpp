#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace stainform {

/// Single-channel float grid, row-major.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  Plane() = default;
  Plane(int w, int h, float fill = 0.0f)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const Plane&, const Plane&) = default;
};

/// C x H x W float grid, channel-major then row-major.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int channels, int width, int height, float fill = 0.0f);
  FeatureMap(int channels, int width, int height, std::vector<float> values);

  int channels() const noexcept { return channels_; }
  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  float& at(int c, int x, int y) {
    return values_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x];
  }
  float at(int c, int x, int y) const {
    return values_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x];
  }

  std::span<float> channel(int c) { return {values_.data() + c * plane_size(), plane_size()}; }
  std::span<const float> channel(int c) const {
    return {values_.data() + c * plane_size(), plane_size()};
  }

  std::span<float> values() noexcept { return values_; }
  std::span<const float> values() const noexcept { return values_; }

  bool all_finite() const noexcept;

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  int channels_ = 0;
  int width_ = 0;
  int height_ = 0;
  std::vector<float> values_;
};

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;  // population definition
};

/// Per-channel moments, population standard deviation.
ChannelStats channel_stats(const FeatureMap& fmap);

struct Standardized {
  FeatureMap map;
  ChannelStats stats;
};

/// z = (x - mean) / std per channel. A channel with zero spread maps to all
/// zeros and reports std = 0.
Standardized standardize(const FeatureMap& fmap);

}  // namespace stainform
