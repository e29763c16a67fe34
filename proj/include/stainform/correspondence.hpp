#pragma once

#include <cstdint>
#include <vector>

#include "stainform/feature_map.hpp"
#include "stainform/image.hpp"

namespace stainform {

struct Coord {
  int x = 0;
  int y = 0;
  friend bool operator==(const Coord&, const Coord&) = default;
};

/// Dense mapping from every source pixel to a target pixel plus the patch
/// distance of that match.
struct NNField {
  int src_width = 0;
  int src_height = 0;
  int tgt_width = 0;
  int tgt_height = 0;
  std::vector<Coord> mapping;
  std::vector<double> cost;

  const Coord& at(int x, int y) const {
    return mapping[static_cast<std::size_t>(y) * src_width + x];
  }
  double cost_at(int x, int y) const { return cost[static_cast<std::size_t>(y) * src_width + x]; }

  double total_cost() const;

  friend bool operator==(const NNField&, const NNField&) = default;
};

struct PatchMatchParams {
  int patch_size = 3;
  int iterations = 5;
  double search_radius_decay = 0.5;
  std::uint64_t rng_seed = 0x9a7c4;
  /// 1 runs the sequential, bitwise-deterministic search. Larger values split
  /// the grid into that many horizontal bands searched concurrently.
  int threads = 1;

  void validate() const;
};

/// Mean squared feature difference over the patch pixels that are inside both
/// grids, and over all channels.
double patch_cost(const FeatureMap& a, Coord pa, const FeatureMap& b, Coord pb, int patch_size);

struct PatchMatchTrace {
  /// Total field cost after initialisation, then after every iteration.
  std::vector<double> total_cost;
};

NNField patchmatch(const FeatureMap& src, const FeatureMap& tgt, const PatchMatchParams& params,
                   PatchMatchTrace* trace = nullptr);

/// `k` approximate nearest neighbours of every pixel within the same map,
/// excluding the pixel itself, found with a k-best PatchMatch. Entries are
/// flat pixel indices sorted by ascending cost; k is clamped to N-1.
struct KnnField {
  int width = 0;
  int height = 0;
  int k = 0;
  std::vector<std::uint32_t> neighbors;  // N * k
  std::vector<double> cost;              // N * k
};

KnnField self_knn(const FeatureMap& fmap, int k, const PatchMatchParams& params);

/// Bidirectional-similarity reconstruction of the source grid from reference
/// colours. Completeness votes come from `fwd` (S->R), coherence votes from
/// `bwd` (R->S); each family carries half of the weight at a pixel when both
/// are present.
FloatImage bds_vote(const FloatImage& ref_colors, const NNField& fwd, const NNField& bwd,
                    int patch_size);

/// Mapping as a 2-channel (x, y) feature map, for debug dumps.
FeatureMap nnf_to_fmap(const NNField& field);

}  // namespace stainform
