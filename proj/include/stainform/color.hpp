#pragma once

#include <array>
#include <string_view>

#include "stainform/image.hpp"

namespace stainform {

enum class LuminanceMode {
  kRec709,  ///< 0.2126 R + 0.7152 G + 0.0722 B
  kRec601,  ///< 0.299 R + 0.587 G + 0.114 B (pipeline default)
};

std::array<double, 3> luminance_coefficients(LuminanceMode mode) noexcept;

/// Weighted channel sum. Inputs and output are on the [0,255] scale.
double luminance(double r, double g, double b, LuminanceMode mode) noexcept;

inline double luminance(const std::array<double, 3>& rgb, LuminanceMode mode) noexcept {
  return luminance(rgb[0], rgb[1], rgb[2], mode);
}

/// Parses "bt601"/"rec601" or "bt709"/"rec709".
LuminanceMode parse_luminance_mode(std::string_view name);
std::string_view to_string(LuminanceMode mode) noexcept;

struct Plane;

/// Per-pixel luminance of a float image, on the [0,1] scale.
Plane luminance_plane(const FloatImage& image, LuminanceMode mode);

}  // namespace stainform
