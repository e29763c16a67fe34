#include "stainform/color.hpp"

#include <string>

#include "stainform/error.hpp"
#include "stainform/feature_map.hpp"

namespace stainform {

std::array<double, 3> luminance_coefficients(LuminanceMode mode) noexcept {
  switch (mode) {
    case LuminanceMode::kRec709:
      return {0.2126, 0.7152, 0.0722};
    case LuminanceMode::kRec601:
      break;
  }
  return {0.299, 0.587, 0.114};
}

double luminance(double r, double g, double b, LuminanceMode mode) noexcept {
  const auto k = luminance_coefficients(mode);
  return k[0] * r + k[1] * g + k[2] * b;
}

LuminanceMode parse_luminance_mode(std::string_view name) {
  if (name == "bt601" || name == "rec601") return LuminanceMode::kRec601;
  if (name == "bt709" || name == "rec709") return LuminanceMode::kRec709;
  throw Error("unknown luminance mode '" + std::string(name) + "' (expected bt601 or bt709)");
}

std::string_view to_string(LuminanceMode mode) noexcept {
  return mode == LuminanceMode::kRec709 ? "bt709" : "bt601";
}

Plane luminance_plane(const FloatImage& image, LuminanceMode mode) {
  const auto k = luminance_coefficients(mode);
  const float kr = static_cast<float>(k[0]);
  const float kg = static_cast<float>(k[1]);
  const float kb = static_cast<float>(k[2]);
  Plane out(image.width(), image.height());
  auto px = image.data();
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = kr * px[3 * i] + kg * px[3 * i + 1] + kb * px[3 * i + 2];
  return out;
}

}  // namespace stainform
