#pragma once

// Test-only helpers: synthetic data and independent reference computations.
// Nothing here calls into the code path it is used to check.

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "stainform/correspondence.hpp"
#include "stainform/feature_map.hpp"
#include "stainform/image.hpp"
#include "stainform/transfer.hpp"

namespace stainform::testing {

std::filesystem::path data_dir();
std::filesystem::path temp_dir(const std::string& name);

FeatureMap random_fmap(int channels, int width, int height, std::uint64_t seed,
                       float lo = -1.0f, float hi = 1.0f);
Image random_image(int width, int height, std::uint64_t seed);
FloatImage random_float_image(int width, int height, std::uint64_t seed, float lo = 0.0f,
                              float hi = 1.0f);

struct Palette {
  std::array<float, 3> background;
  std::array<float, 3> rbc;
  std::array<float, 3> cytoplasm;
  std::array<float, 3> nucleus;
};

Palette light_stain();
Palette dark_stain();

/// Blood-smear-like scene: background, red cells, and a few white cells with
/// nuclei, plus a fixed grain texture. Same `layout_seed` means same layout.
Image synthetic_smear(int width, int height, const Palette& palette, std::uint64_t layout_seed);

/// Smooth or textured synthetic test scenes, indexed 0..9.
Image synthetic_scene(int index, int width, int height);

// --- oracles ---------------------------------------------------------------

/// Naive patch distance straight from the definition.
double naive_patch_cost(const FeatureMap& a, int ax, int ay, const FeatureMap& b, int bx, int by,
                        int patch_size);

/// Total cost of the exhaustive nearest-neighbour field.
double exhaustive_nnf_total(const FeatureMap& src, const FeatureMap& tgt, int patch_size);

/// Direct vote accumulation for the bidirectional reconstruction.
FloatImage naive_vote(const FloatImage& ref, const NNField& fwd, const NNField& bwd, int patch_size);

/// E_total written out term by term from its definition.
double naive_energy(const FloatImage& s, const FloatImage& g, const KnnField& knn,
                    const EnergyParams& p, const AbField& ab);

/// Minimiser of naive_energy from the explicit Hessian, itself recovered by
/// polarisation of naive_energy, solved with a dense LU factorisation.
AbField dense_energy_minimiser(const FloatImage& s, const FloatImage& g, const KnnField& knn,
                               const EnergyParams& p);

/// Clipped (2r+1)^2 box mean.
Plane naive_box_mean(const Plane& p, int r);

std::array<double, 32> naive_histogram(const Image& img);

}  // namespace stainform::testing
