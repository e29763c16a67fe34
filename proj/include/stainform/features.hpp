#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "stainform/color.hpp"
#include "stainform/feature_map.hpp"
#include "stainform/image.hpp"

namespace stainform {

/// Per-pixel class ids in [0, num_classes).
struct LabelMap {
  int width = 0;
  int height = 0;
  int num_classes = 1;
  std::vector<std::uint16_t> labels;

  std::uint16_t at(int x, int y) const {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
};

enum class FeatureSource { kBuiltin, kExternalFmap };
enum class Enhancement { kNone, kCluster, kSegmap };

struct FeatureConfig {
  int layer = 1;
  FeatureSource source = FeatureSource::kBuiltin;
  Enhancement enhancement = Enhancement::kCluster;
  int cluster_k = 5;
  float enhancement_weight = 1.0f;
  std::uint64_t seed = 0x5eed;
  LuminanceMode luminance = LuminanceMode::kRec601;

  /// Throws Error when a field is outside its valid range.
  void validate() const;
};

inline constexpr int kBuiltinChannels = 14;

/// Hand-crafted 14-channel descriptor computed on the layer-downsampled image:
///   0-2   RGB
///   3     luminance
///   4,5   Sobel x / y of luminance
///   6     gradient magnitude
///   7-9   3x3 mean per RGB channel
///   10-12 3x3 std per RGB channel
///   13    3x3 std of luminance
/// Values are on the [0,1] pixel scale; borders are edge-clamped.
FeatureMap builtin_features(const FloatImage& image, int layer,
                            LuminanceMode mode = LuminanceMode::kRec601);
FeatureMap builtin_features(const Image& image, int layer,
                            LuminanceMode mode = LuminanceMode::kRec601);

// FMAP container: "FMAP", u32 version (1), u32 C, u32 H, u32 W, then C*H*W
// float32, all little-endian.
FeatureMap load_fmap(const std::filesystem::path& path);
FeatureMap parse_fmap(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_fmap(const FeatureMap& fmap);
void save_fmap(const std::filesystem::path& path, const FeatureMap& fmap);

struct KMeansResult {
  LabelMap labels;
  std::vector<std::vector<double>> centers;
  /// Within-cluster SSE after each Lloyd iteration.
  std::vector<double> sse_history;
  int iterations = 0;
};

inline constexpr int kKMeansMaxIterations = 50;

/// Lloyd's algorithm over per-pixel feature vectors with farthest-point
/// seeding (first centre drawn from `seed`). Ties go to the lowest cluster id.
KMeansResult kmeans(const FeatureMap& fmap, int k, std::uint64_t seed);
LabelMap kmeans_labels(const FeatureMap& fmap, int k, std::uint64_t seed);

/// Appends num_classes one-hot channels scaled by `weight`.
FeatureMap enhance(const FeatureMap& fmap, const LabelMap& labels, float weight);

inline constexpr int kMaxLabelClasses = 64;

/// 8-bit grayscale PNG, pixel value = class id. Resized by nearest neighbour
/// when the stored size differs from the expected one.
LabelMap load_label_map(const std::filesystem::path& path, int expected_width,
                        int expected_height);

LabelMap resize_nearest(const LabelMap& labels, int width, int height);

}  // namespace stainform
