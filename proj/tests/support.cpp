#include "support.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace stainform::testing {

std::filesystem::path data_dir() { return STAINFORM_TEST_DATA_DIR; }

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("stainform_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

FeatureMap random_fmap(int channels, int width, int height, std::uint64_t seed, float lo, float hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  FeatureMap f(channels, width, height);
  for (float& v : f.values()) v = dist(rng);
  return f;
}

Image random_image(int width, int height, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image img(width, height);
  for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

FloatImage random_float_image(int width, int height, std::uint64_t seed, float lo, float hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  FloatImage img(width, height);
  for (auto& v : img.data()) v = dist(rng);
  return img;
}

Palette light_stain() {
  return {{0.93f, 0.88f, 0.90f}, {0.86f, 0.62f, 0.66f}, {0.80f, 0.74f, 0.86f}, {0.52f, 0.40f, 0.72f}};
}

Palette dark_stain() {
  return {{0.72f, 0.58f, 0.66f}, {0.58f, 0.24f, 0.32f}, {0.52f, 0.38f, 0.60f}, {0.22f, 0.10f, 0.38f}};
}

Image synthetic_smear(int width, int height, const Palette& pal, std::uint64_t layout_seed) {
  std::mt19937_64 rng(layout_seed);
  std::uniform_real_distribution<float> ux(0.0f, static_cast<float>(width));
  std::uniform_real_distribution<float> uy(0.0f, static_cast<float>(height));
  const float scale = std::min(width, height) / 64.0f;

  // 0 background, 1 red cell, 2 cytoplasm, 3 nucleus
  std::vector<int> cls(static_cast<std::size_t>(width) * height, 0);
  auto disc = [&](float cx, float cy, float r, int c) {
    for (int y = std::max(0, static_cast<int>(cy - r)); y < std::min(height, static_cast<int>(cy + r) + 1); ++y)
      for (int x = std::max(0, static_cast<int>(cx - r)); x < std::min(width, static_cast<int>(cx + r) + 1); ++x)
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) cls[static_cast<std::size_t>(y) * width + x] = c;
  };
  const int rbcs = std::max(4, width * height / 300);
  for (int i = 0; i < rbcs; ++i) disc(ux(rng), uy(rng), 3.5f * scale, 1);
  for (int i = 0; i < 3; ++i) {
    const float cx = ux(rng), cy = uy(rng);
    disc(cx, cy, 7.0f * scale, 2);
    disc(cx + 1.5f * scale, cy - 1.0f * scale, 4.0f * scale, 3);
  }

  // Deterministic grain so that patches are distinguishable.
  std::mt19937_64 grain(layout_seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<float> noise(-0.025f, 0.025f);
  FloatImage f(width, height);
  const std::array<const std::array<float, 3>*, 4> colors = {&pal.background, &pal.rbc, &pal.cytoplasm,
                                                             &pal.nucleus};
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const float n = noise(grain);
      const auto& col = *colors[cls[static_cast<std::size_t>(y) * width + x]];
      for (int c = 0; c < 3; ++c) f.at(x, y, c) = col[c] + n;
    }
  return to_8bit(f);
}

Image synthetic_scene(int index, int width, int height) {
  FloatImage f(width, height);
  std::mt19937_64 rng(1000 + index);
  std::uniform_real_distribution<float> noise(-0.03f, 0.03f);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const float u = static_cast<float>(x) / width;
      const float v = static_cast<float>(y) / height;
      float r = 0, g = 0, b = 0;
      switch (index % 10) {
        case 0: r = u; g = v; b = 0.5f; break;                                   // gradient
        case 1: r = g = b = ((x / 16 + y / 16) % 2) ? 0.8f : 0.2f; break;       // checker
        case 2: r = 0.5f + 0.4f * std::sin(u * 20); g = 0.5f + 0.4f * std::cos(v * 14); b = 0.4f; break;
        case 3: r = u > 0.5f ? 0.9f : 0.1f; g = 0.3f; b = v > 0.5f ? 0.7f : 0.2f; break;
        case 4: { const float d = std::hypot(u - 0.5f, v - 0.5f); r = g = 1.0f - d; b = d; } break;
        case 5: r = 0.6f; g = 0.4f; b = 0.5f; break;                              // flat + grain
        case 6: r = std::fmod(u * 5, 1.0f); g = std::fmod(v * 3, 1.0f); b = 0.5f * (u + v); break;
        case 7: r = 0.2f + 0.6f * u * v; g = 0.8f - 0.5f * u; b = 0.3f + 0.4f * v; break;
        case 8: return synthetic_smear(width, height, light_stain(), 77);
        case 9: return synthetic_smear(width, height, dark_stain(), 78);
      }
      const float n = noise(rng);
      f.at(x, y, 0) = r + n;
      f.at(x, y, 1) = g + n;
      f.at(x, y, 2) = b + n;
    }
  return to_8bit(f);
}

// --- oracles ---------------------------------------------------------------

double naive_patch_cost(const FeatureMap& a, int ax, int ay, const FeatureMap& b, int bx, int by,
                        int patch_size) {
  const int half = patch_size / 2;
  double sum = 0.0;
  long count = 0;
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx) {
      const int x0 = ax + dx, y0 = ay + dy, x1 = bx + dx, y1 = by + dy;
      if (x0 < 0 || y0 < 0 || x0 >= a.width() || y0 >= a.height()) continue;
      if (x1 < 0 || y1 < 0 || x1 >= b.width() || y1 >= b.height()) continue;
      for (int c = 0; c < a.channels(); ++c) {
        const double d = static_cast<double>(a.at(c, x0, y0)) - b.at(c, x1, y1);
        sum += d * d;
        ++count;
      }
    }
  return sum / static_cast<double>(count);
}

double exhaustive_nnf_total(const FeatureMap& src, const FeatureMap& tgt, int patch_size) {
  double total = 0.0;
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (int ty = 0; ty < tgt.height(); ++ty)
        for (int tx = 0; tx < tgt.width(); ++tx)
          best = std::min(best, naive_patch_cost(src, x, y, tgt, tx, ty, patch_size));
      total += best;
    }
  return total;
}

FloatImage naive_vote(const FloatImage& ref, const NNField& fwd, const NNField& bwd, int patch_size) {
  const int half = patch_size / 2;
  const int sw = fwd.src_width, sh = fwd.src_height;
  const int rw = ref.width(), rh = ref.height();
  FloatImage out(sw, sh);
  for (int py = 0; py < sh; ++py)
    for (int px = 0; px < sw; ++px) {
      std::array<double, 3> comp{}, coh{};
      int nc = 0, nh = 0;
      // Every source pixel q within the patch window of p.
      for (int qy = 0; qy < sh; ++qy)
        for (int qx = 0; qx < sw; ++qx) {
          const int dx = px - qx, dy = py - qy;
          if (std::abs(dx) > half || std::abs(dy) > half) continue;
          const Coord m = fwd.mapping[qy * sw + qx];
          const int rx = m.x + dx, ry = m.y + dy;
          if (rx < 0 || ry < 0 || rx >= rw || ry >= rh) continue;
          for (int c = 0; c < 3; ++c) comp[c] += ref.at(rx, ry, c);
          ++nc;
        }
      // Every reference pixel r whose matched patch covers p.
      for (int ry = 0; ry < rh; ++ry)
        for (int rx = 0; rx < rw; ++rx) {
          const Coord t = bwd.mapping[ry * rw + rx];
          const int dx = px - t.x, dy = py - t.y;
          if (std::abs(dx) > half || std::abs(dy) > half) continue;
          const int sx = rx + dx, sy = ry + dy;
          if (sx < 0 || sy < 0 || sx >= rw || sy >= rh) continue;
          for (int c = 0; c < 3; ++c) coh[c] += ref.at(sx, sy, c);
          ++nh;
        }
      for (int c = 0; c < 3; ++c) {
        const double a = comp[c] / nc;
        out.at(px, py, c) = static_cast<float>(nh ? 0.5 * a + 0.5 * coh[c] / nh : a);
      }
    }
  return out;
}

namespace {

double lum01(const FloatImage& s, int x, int y, LuminanceMode mode) {
  const double k[2][3] = {{0.2126, 0.7152, 0.0722}, {0.299, 0.587, 0.114}};
  const int m = mode == LuminanceMode::kRec709 ? 0 : 1;
  // Same float arithmetic as the production luminance plane would be an
  // implementation detail; the oracle uses double.
  return k[m][0] * s.at(x, y, 0) + k[m][1] * s.at(x, y, 1) + k[m][2] * s.at(x, y, 2);
}

// Energy of one channel with unknowns packed as [a_0..a_{n-1}, b_0..b_{n-1}].
double channel_energy(const FloatImage& s, const FloatImage& g, const KnnField& knn,
                      const EnergyParams& p, int c, const Eigen::VectorXd& v) {
  const int w = s.width(), h = s.height();
  const int n = w * h;
  auto a = [&](int i) { return v[i]; };
  auto b = [&](int i) { return v[n + i]; };
  double ed = 0, el = 0, enl = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int i = y * w + x;
      const double r = a(i) * s.at(x, y, c) + b(i) - g.at(x, y, c);
      ed += r * r;
      const int nbr[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
      for (const auto& d : nbr) {
        const int qx = x + d[0], qy = y + d[1];
        if (qx < 0 || qy < 0 || qx >= w || qy >= h) continue;
        const int q = qy * w + qx;
        const double dl = std::abs(lum01(s, x, y, p.luminance) - lum01(s, qx, qy, p.luminance));
        const double wpq = 1.0 / (std::pow(dl, p.wls_alpha) + p.wls_eps);
        el += wpq * ((a(i) - a(q)) * (a(i) - a(q)) + (b(i) - b(q)) * (b(i) - b(q)));
      }
      for (int k = 0; k < knn.k; ++k) {
        const int q = static_cast<int>(knn.neighbors[static_cast<std::size_t>(i) * knn.k + k]);
        enl += (a(i) - a(q)) * (a(i) - a(q)) + (b(i) - b(q)) * (b(i) - b(q));
      }
    }
  return ed + p.lambda_l * el + p.lambda_nl * enl;
}

}  // namespace

double naive_energy(const FloatImage& s, const FloatImage& g, const KnnField& knn,
                    const EnergyParams& p, const AbField& ab) {
  const int n = s.width() * s.height();
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    Eigen::VectorXd v(2 * n);
    for (int i = 0; i < n; ++i) {
      v[i] = ab.a[c].values[i];
      v[n + i] = ab.b[c].values[i];
    }
    total += channel_energy(s, g, knn, p, c, v);
  }
  return total;
}

AbField dense_energy_minimiser(const FloatImage& s, const FloatImage& g, const KnnField& knn,
                               const EnergyParams& p) {
  const int n = s.width() * s.height();
  const int m = 2 * n;
  AbField out(s.width(), s.height());
  for (int c = 0; c < 3; ++c) {
    auto E = [&](const Eigen::VectorXd& v) { return channel_energy(s, g, knn, p, c, v); };
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(m);
    const double e0 = E(zero);
    // Quadratic E(v) = v'Hv/2 + f'v + e0, so
    //   E(e_i) = H_ii/2 + f_i + e0,  E(-e_i) = H_ii/2 - f_i + e0,
    //   E(e_i + e_j) - E(e_i) - E(e_j) + e0 = H_ij.
    Eigen::VectorXd f(m), ei_energy(m);
    Eigen::MatrixXd H(m, m);
    for (int i = 0; i < m; ++i) {
      Eigen::VectorXd e = zero;
      e[i] = 1.0;
      const double plus = E(e);
      const double minus = E(-e);
      f[i] = 0.5 * (plus - minus);
      H(i, i) = plus + minus - 2.0 * e0;
      ei_energy[i] = plus;
    }
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j) {
        Eigen::VectorXd e = zero;
        e[i] = 1.0;
        e[j] = 1.0;
        H(i, j) = H(j, i) = E(e) - ei_energy[i] - ei_energy[j] + e0;
      }
    const Eigen::VectorXd v = H.fullPivLu().solve(-f);
    for (int i = 0; i < n; ++i) {
      out.a[c].values[i] = static_cast<float>(v[i]);
      out.b[c].values[i] = static_cast<float>(v[n + i]);
    }
  }
  return out;
}

Plane naive_box_mean(const Plane& p, int r) {
  Plane out(p.width, p.height);
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x) {
      double s = 0;
      int n = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int qx = x + dx, qy = y + dy;
          if (qx < 0 || qy < 0 || qx >= p.width || qy >= p.height) continue;
          s += p.at(qx, qy);
          ++n;
        }
      out.at(x, y) = static_cast<float>(s / n);
    }
  return out;
}

std::array<double, 32> naive_histogram(const Image& img) {
  std::array<double, 32> h{};
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const double l = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
      int bin = static_cast<int>(l / 8.0);
      if (bin > 31) bin = 31;
      h[bin] += 1.0;
    }
  for (double& v : h) v /= static_cast<double>(img.width() * img.height());
  return h;
}

}  // namespace stainform::testing
