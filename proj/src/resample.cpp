#include "stainform/resample.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "stainform/error.hpp"

namespace stainform {

namespace {

void check_layer(int layer) {
  if (layer < kMinLayer || layer > kMaxLayer)
    throw Error("layer must be in 1..5, got " + std::to_string(layer));
}

// Box-average `channels` interleaved channels from src into a grid reduced by
// `factor`; partial border cells average what exists.
template <typename Out, typename In, typename Convert>
void box_reduce(const In* src, int w, int h, int channels, int factor, Out* dst, Convert convert) {
  const int ow = (w + factor - 1) / factor;
  const int oh = (h + factor - 1) / factor;
  std::vector<double> acc(channels);
  for (int oy = 0; oy < oh; ++oy) {
    const int y0 = oy * factor;
    const int y1 = std::min(h, y0 + factor);
    for (int ox = 0; ox < ow; ++ox) {
      const int x0 = ox * factor;
      const int x1 = std::min(w, x0 + factor);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
          for (int c = 0; c < channels; ++c)
            acc[c] += static_cast<double>(src[(static_cast<std::size_t>(y) * w + x) * channels + c]);
      const double n = static_cast<double>((y1 - y0) * (x1 - x0));
      for (int c = 0; c < channels; ++c)
        dst[(static_cast<std::size_t>(oy) * ow + ox) * channels + c] = convert(acc[c] / n);
    }
  }
}

inline int nearest_index(int dst, int dst_dim, int src_dim) {
  return static_cast<int>(static_cast<long long>(dst) * src_dim / dst_dim);
}

}  // namespace

int layer_factor(int layer) {
  check_layer(layer);
  return 1 << (layer - 1);
}

int layer_dim(int full_dim, int layer) {
  const int f = layer_factor(layer);
  return (full_dim + f - 1) / f;
}

FloatImage downsample(const FloatImage& image, int layer) {
  const int f = layer_factor(layer);
  if (f == 1) return image;
  FloatImage out(layer_dim(image.width(), layer), layer_dim(image.height(), layer));
  box_reduce(image.data().data(), image.width(), image.height(), 3, f, out.data().data(),
             [](double v) { return static_cast<float>(v); });
  return out;
}

Image downsample(const Image& image, int layer) {
  const int f = layer_factor(layer);
  if (f == 1) return image;
  Image out(layer_dim(image.width(), layer), layer_dim(image.height(), layer));
  box_reduce(image.data().data(), image.width(), image.height(), 3, f, out.data().data(),
             [](double v) { return static_cast<std::uint8_t>(static_cast<int>(v + 0.5)); });
  return out;
}

Plane downsample(const Plane& plane, int layer) {
  const int f = layer_factor(layer);
  if (f == 1) return plane;
  Plane out(layer_dim(plane.width, layer), layer_dim(plane.height, layer));
  box_reduce(plane.values.data(), plane.width, plane.height, 1, f, out.values.data(),
             [](double v) { return static_cast<float>(v); });
  return out;
}

Plane resize_nearest(const Plane& plane, int width, int height) {
  if (width < 1 || height < 1) throw Error("resize target must be positive");
  if (width == plane.width && height == plane.height) return plane;
  Plane out(width, height);
  for (int y = 0; y < height; ++y) {
    const int sy = nearest_index(y, height, plane.height);
    for (int x = 0; x < width; ++x) out.at(x, y) = plane.at(nearest_index(x, width, plane.width), sy);
  }
  return out;
}

FeatureMap resize_nearest(const FeatureMap& fmap, int width, int height) {
  if (width < 1 || height < 1) throw Error("resize target must be positive");
  if (width == fmap.width() && height == fmap.height()) return fmap;
  FeatureMap out(fmap.channels(), width, height);
  for (int c = 0; c < fmap.channels(); ++c)
    for (int y = 0; y < height; ++y) {
      const int sy = nearest_index(y, height, fmap.height());
      for (int x = 0; x < width; ++x)
        out.at(c, x, y) = fmap.at(c, nearest_index(x, width, fmap.width()), sy);
    }
  return out;
}

Plane upsample_nearest(const Plane& plane, int width, int height) {
  if (width < plane.width || height < plane.height)
    throw Error("upsample_nearest target is smaller than the source");
  return resize_nearest(plane, width, height);
}

FeatureMap upsample_nearest(const FeatureMap& fmap, int width, int height) {
  if (width < fmap.width() || height < fmap.height())
    throw Error("upsample_nearest target is smaller than the source");
  return resize_nearest(fmap, width, height);
}

}  // namespace stainform
