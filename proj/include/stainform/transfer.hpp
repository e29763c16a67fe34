#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "stainform/color.hpp"
#include "stainform/correspondence.hpp"
#include "stainform/feature_map.hpp"
#include "stainform/features.hpp"
#include "stainform/image.hpp"

namespace stainform {

/// Per-pixel, per-RGB-channel affine coefficients: out = a * in + b.
struct AbField {
  int width = 0;
  int height = 0;
  std::array<Plane, 3> a;
  std::array<Plane, 3> b;

  AbField() = default;
  AbField(int w, int h, float a_fill = 1.0f, float b_fill = 0.0f);

  /// 6-channel map (a_r, a_g, a_b, b_r, b_g, b_b).
  FeatureMap to_fmap() const;
  static AbField from_fmap(const FeatureMap& fmap);
};

AbField upsample_nearest(const AbField& field, int width, int height);

struct EnergyParams {
  double lambda_l = 0.001;
  double lambda_nl = 0.4;
  double wls_alpha = 1.2;
  double wls_eps = 1e-4;
  int nl_neighbors = 5;
  double cg_tol = 1e-4;
  int cg_max_iter = 500;
  LuminanceMode luminance = LuminanceMode::kRec601;
  std::uint64_t nl_seed = 0x4e4c;
  /// Worker threads for matrix-vector products; results do not depend on it.
  int threads = 1;

  static EnergyParams paper_preset() { return {}; }
  static EnergyParams he_preset() {
    EnergyParams p;
    p.lambda_l = 0.125;
    p.lambda_nl = 2.0;
    return p;
  }

  void validate() const;
};

struct GuidedFilterParams {
  int radius = 8;
  double eps = 1e-3;
  int subsample = 4;

  void validate() const;
};

/// The quadratic problem of one transfer: data term against the guidance,
/// WLS 4-neighbour smoothness and feature-space non-local smoothness.
struct EnergyProblem {
  const FloatImage* source = nullptr;
  const FloatImage* guidance = nullptr;
  const KnnField* nonlocal = nullptr;  // may be null when lambda_nl == 0
  EnergyParams params;
};

/// w_pq = (|L(p) - L(q)|^alpha + eps)^-1 on [0,1] luminance. Index 0 holds the
/// weight to the right neighbour, index 1 to the one below; missing
/// neighbours get 0.
std::array<Plane, 2> wls_weights(const FloatImage& source, const EnergyParams& params);

/// E_total summed over the three channels.
double total_energy(const EnergyProblem& problem, const AbField& ab);

struct SolveReport {
  std::array<int, 3> iterations{};
  std::array<double, 3> residual{};
  std::array<bool, 3> fallback{};
};

AbField solve_ab(const EnergyProblem& problem, SolveReport* report = nullptr);

/// Builds the non-local neighbour graph from `feats` and solves.
AbField solve_ab(const FloatImage& source, const FloatImage& guidance, const FeatureMap& feats,
                 const EnergyParams& params, SolveReport* report = nullptr);

/// He et al.'s guided filter of `input` with `guide`, computed on a grid
/// subsampled by `params.subsample` and bilinearly upsampled. The result is
/// clamped to the input's value range.
Plane fast_guided_filter(const Plane& guide, const Plane& input, const GuidedFilterParams& params);

/// Nearest-upsamples each coefficient plane to full size, then guided-filters
/// it with the full-resolution luminance.
AbField guided_filter_upscale(const AbField& ab, const FloatImage& src_full,
                              const GuidedFilterParams& params,
                              LuminanceMode mode = LuminanceMode::kRec601);

/// clamp(a * s + b, 0, 1) quantised to 8 bit (round half up).
Image apply_ab(const Image& src, const AbField& ab);

struct TransferTimings {
  double features = 0;
  double patchmatch = 0;
  double vote = 0;
  double solve = 0;
  double upscale = 0;
  double total = 0;
};

/// Optional inputs and diagnostics of one transfer.
struct TransferExtras {
  /// Externally exported feature maps (FeatureSource::kExternalFmap).
  const FeatureMap* src_features = nullptr;
  const FeatureMap* ref_features = nullptr;
  /// Precomputed segmentations (Enhancement::kSegmap).
  const LabelMap* src_labels = nullptr;
  const LabelMap* ref_labels = nullptr;

  // Outputs.
  FloatImage guidance;
  AbField ab_layer;
  AbField ab_full;
  NNField forward;
  NNField backward;
  SolveReport solve;
  TransferTimings timings;
};

Image transfer_single_layer(const Image& src, const Image& ref, const FeatureConfig& cfg,
                            const PatchMatchParams& pm, const EnergyParams& ep,
                            const GuidedFilterParams& gf, TransferExtras* extras = nullptr);

}  // namespace stainform
