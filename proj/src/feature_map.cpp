#include "stainform/feature_map.hpp"

#include <algorithm>
#include <cmath>

#include "stainform/error.hpp"

namespace stainform {

FeatureMap::FeatureMap(int channels, int width, int height, float fill)
    : channels_(channels),
      width_(width),
      height_(height),
      values_(static_cast<std::size_t>(channels) * width * height, fill) {
  if (channels < 1 || width < 1 || height < 1)
    throw Error("feature map dimensions must be positive");
}

FeatureMap::FeatureMap(int channels, int width, int height, std::vector<float> values)
    : channels_(channels), width_(width), height_(height), values_(std::move(values)) {
  if (channels < 1 || width < 1 || height < 1)
    throw Error("feature map dimensions must be positive");
  if (values_.size() != static_cast<std::size_t>(channels) * width * height)
    throw Error("feature map value count does not match C*H*W");
}

bool FeatureMap::all_finite() const noexcept {
  for (float v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

ChannelStats channel_stats(const FeatureMap& fmap) {
  ChannelStats stats;
  stats.mean.resize(fmap.channels());
  stats.std.resize(fmap.channels());
  const double n = static_cast<double>(fmap.plane_size());
  for (int c = 0; c < fmap.channels(); ++c) {
    auto ch = fmap.channel(c);
    double sum = 0.0;
    for (float v : ch) sum += v;
    const double mean = sum / n;
    // Two-pass variance.
    double ss = 0.0;
    for (float v : ch) {
      const double d = v - mean;
      ss += d * d;
    }
    stats.mean[c] = mean;
    stats.std[c] = std::sqrt(ss / n);
  }
  return stats;
}

Standardized standardize(const FeatureMap& fmap) {
  Standardized out{FeatureMap(fmap.channels(), fmap.width(), fmap.height()), channel_stats(fmap)};
  for (int c = 0; c < fmap.channels(); ++c) {
    auto src = fmap.channel(c);
    auto dst = out.map.channel(c);
    const double mean = out.stats.mean[c];
    double sd = out.stats.std[c];
    // Spread below float resolution of the mean is rounding noise, not signal.
    if (!(sd > 1e-7 * std::max(1.0, std::abs(mean)))) {
      out.stats.std[c] = 0.0;
      continue;  // already zero-filled
    }
    for (std::size_t i = 0; i < src.size(); ++i)
      dst[i] = static_cast<float>((src[i] - mean) / sd);
  }
  return out;
}

}  // namespace stainform
