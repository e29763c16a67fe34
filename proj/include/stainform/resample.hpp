#pragma once

#include "stainform/feature_map.hpp"
#include "stainform/image.hpp"

namespace stainform {

inline constexpr int kMinLayer = 1;
inline constexpr int kMaxLayer = 5;

/// Pixel side length of one layer-L cell: 2^(L-1).
int layer_factor(int layer);

/// ceil(dim / 2^(layer-1)).
int layer_dim(int full_dim, int layer);

/// Area-average reduction to layer resolution. Border cells average only the
/// pixels that exist. Layer 1 is an exact copy.
FloatImage downsample(const FloatImage& image, int layer);
Image downsample(const Image& image, int layer);
Plane downsample(const Plane& plane, int layer);

/// Nearest-neighbour resize: source index = floor(dst * src_dim / dst_dim).
Plane resize_nearest(const Plane& plane, int width, int height);
FeatureMap resize_nearest(const FeatureMap& fmap, int width, int height);

/// Magnification only; throws when the target is smaller than the source.
Plane upsample_nearest(const Plane& plane, int width, int height);
FeatureMap upsample_nearest(const FeatureMap& fmap, int width, int height);

}  // namespace stainform
