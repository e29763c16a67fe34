#include "stainform/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <string>

#include "stainform/error.hpp"
#include "stainform/io.hpp"
#include "stainform/resample.hpp"

namespace stainform {

void FeatureConfig::validate() const {
  if (layer < kMinLayer || layer > kMaxLayer)
    throw Error("layer must be in 1..5, got " + std::to_string(layer));
  if (cluster_k < 1) throw Error("cluster_k must be >= 1");
  if (!std::isfinite(enhancement_weight) || enhancement_weight < 0.0f)
    throw Error("enhancement_weight must be finite and >= 0");
}

// ---------------------------------------------------------------------------
// Built-in extractor

namespace {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace

FeatureMap builtin_features(const FloatImage& full, int layer, LuminanceMode mode) {
  const FloatImage img = downsample(full, layer);
  const int w = img.width();
  const int h = img.height();
  FeatureMap out(kBuiltinChannels, w, h);
  const Plane lum = luminance_plane(img, mode);

  auto lum_at = [&](int x, int y) { return lum.at(clampi(x, 0, w - 1), clampi(y, 0, h - 1)); };
  auto px_at = [&](int x, int y, int c) {
    return img.at(clampi(x, 0, w - 1), clampi(y, 0, h - 1), c);
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) out.at(c, x, y) = img.at(x, y, c);
      out.at(3, x, y) = lum.at(x, y);

      const float gx = (lum_at(x + 1, y - 1) + 2.0f * lum_at(x + 1, y) + lum_at(x + 1, y + 1)) -
                       (lum_at(x - 1, y - 1) + 2.0f * lum_at(x - 1, y) + lum_at(x - 1, y + 1));
      const float gy = (lum_at(x - 1, y + 1) + 2.0f * lum_at(x, y + 1) + lum_at(x + 1, y + 1)) -
                       (lum_at(x - 1, y - 1) + 2.0f * lum_at(x, y - 1) + lum_at(x + 1, y - 1));
      out.at(4, x, y) = gx;
      out.at(5, x, y) = gy;
      out.at(6, x, y) = std::sqrt(gx * gx + gy * gy);

      // 3x3 moments. Values are averaged in double so a flat window gives an
      // exact zero variance.
      double sum[4] = {0, 0, 0, 0};
      double sq[4] = {0, 0, 0, 0};
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          for (int c = 0; c < 3; ++c) {
            const double v = px_at(x + dx, y + dy, c);
            sum[c] += v;
            sq[c] += v * v;
          }
          const double l = lum_at(x + dx, y + dy);
          sum[3] += l;
          sq[3] += l * l;
        }
      double sd[4];
      for (int c = 0; c < 4; ++c) {
        const double m = sum[c] / 9.0;
        const double var = sq[c] / 9.0 - m * m;
        sd[c] = var > 1e-12 ? std::sqrt(var) : 0.0;
        if (c < 3) out.at(7 + c, x, y) = static_cast<float>(m);
      }
      for (int c = 0; c < 3; ++c) out.at(10 + c, x, y) = static_cast<float>(sd[c]);
      out.at(13, x, y) = static_cast<float>(sd[3]);
    }
  }
  return out;
}

FeatureMap builtin_features(const Image& image, int layer, LuminanceMode mode) {
  return builtin_features(to_float(image), layer, mode);
}

// ---------------------------------------------------------------------------
// FMAP container

namespace {

constexpr std::uint8_t kFmapMagic[4] = {'F', 'M', 'A', 'P'};
constexpr std::uint32_t kFmapVersion = 1;
constexpr std::size_t kFmapHeaderBytes = 20;

std::uint32_t read_u32le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

FeatureMap parse_fmap(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kFmapMagic, 4) != 0)
    throw FormatError("FMAP: bad magic at byte offset 0 (expected 'FMAP')");
  if (bytes.size() < kFmapHeaderBytes)
    throw FormatError("FMAP: truncated header, need " + std::to_string(kFmapHeaderBytes) +
                      " bytes, got " + std::to_string(bytes.size()));
  const std::uint32_t version = read_u32le(bytes.data() + 4);
  if (version != kFmapVersion)
    throw FormatError("FMAP: unsupported version " + std::to_string(version) +
                      " at byte offset 4");
  const std::uint32_t c = read_u32le(bytes.data() + 8);
  const std::uint32_t h = read_u32le(bytes.data() + 12);
  const std::uint32_t w = read_u32le(bytes.data() + 16);
  if (c == 0) throw FormatError("FMAP: field C (byte offset 8) is zero");
  if (h == 0) throw FormatError("FMAP: field H (byte offset 12) is zero");
  if (w == 0) throw FormatError("FMAP: field W (byte offset 16) is zero");
  constexpr std::uint64_t kMaxInt = static_cast<std::uint64_t>(std::numeric_limits<int>::max());
  if (c > kMaxInt || h > kMaxInt || w > kMaxInt)
    throw FormatError("FMAP: dimensions exceed supported range");

  const std::uint64_t expected = static_cast<std::uint64_t>(c) * h * w;
  const std::uint64_t payload = bytes.size() - kFmapHeaderBytes;
  if (payload != expected * 4) {
    if (payload < expected * 4)
      throw FormatError("FMAP: truncated payload, expected " + std::to_string(expected) +
                        " floats, got " + std::to_string(payload / 4) + " (payload starts at byte offset 20)");
    throw FormatError("FMAP: trailing bytes after " + std::to_string(expected) +
                      " floats at byte offset " + std::to_string(kFmapHeaderBytes + expected * 4));
  }

  std::vector<float> values(expected);
  const std::uint8_t* p = bytes.data() + kFmapHeaderBytes;
  for (std::uint64_t i = 0; i < expected; ++i, p += 4) {
    const float v = std::bit_cast<float>(read_u32le(p));
    if (!std::isfinite(v))
      throw FormatError("FMAP: non-finite value at byte offset " +
                        std::to_string(kFmapHeaderBytes + i * 4));
    values[i] = v;
  }
  return FeatureMap(static_cast<int>(c), static_cast<int>(w), static_cast<int>(h),
                    std::move(values));
}

FeatureMap load_fmap(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return parse_fmap(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_fmap(const FeatureMap& fmap) {
  std::vector<std::uint8_t> out;
  out.reserve(kFmapHeaderBytes + fmap.values().size() * 4);
  for (std::uint8_t m : kFmapMagic) out.push_back(m);
  put_u32le(out, kFmapVersion);
  put_u32le(out, static_cast<std::uint32_t>(fmap.channels()));
  put_u32le(out, static_cast<std::uint32_t>(fmap.height()));
  put_u32le(out, static_cast<std::uint32_t>(fmap.width()));
  for (float v : fmap.values()) put_u32le(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

void save_fmap(const std::filesystem::path& path, const FeatureMap& fmap) {
  const auto bytes = encode_fmap(fmap);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Clustering

namespace {

// Pixel-major copy of the feature vectors.
std::vector<double> pixel_vectors(const FeatureMap& fmap) {
  const std::size_t n = fmap.plane_size();
  const int dims = fmap.channels();
  std::vector<double> v(n * dims);
  for (int c = 0; c < dims; ++c) {
    auto ch = fmap.channel(c);
    for (std::size_t i = 0; i < n; ++i) v[i * dims + c] = ch[i];
  }
  return v;
}

double sq_dist(const double* a, const double* b, int dims) {
  double s = 0.0;
  for (int d = 0; d < dims; ++d) {
    const double t = a[d] - b[d];
    s += t * t;
  }
  return s;
}

}  // namespace

KMeansResult kmeans(const FeatureMap& fmap, int k, std::uint64_t seed) {
  const std::size_t n = fmap.plane_size();
  const int dims = fmap.channels();
  if (k < 1) throw Error("kmeans: k must be >= 1");
  if (static_cast<std::size_t>(k) > n)
    throw Error("kmeans: k = " + std::to_string(k) + " exceeds pixel count " + std::to_string(n));

  const std::vector<double> x = pixel_vectors(fmap);
  auto point = [&](std::size_t i) { return x.data() + i * dims; };

  // Farthest-point seeding: a seeded random first centre, then repeatedly the
  // pixel farthest from every chosen centre (lowest index on ties).
  std::vector<std::vector<double>> centers;
  std::mt19937_64 rng(seed);
  const std::size_t first = static_cast<std::size_t>(rng() % n);
  centers.emplace_back(point(first), point(first) + dims);
  std::vector<double> nearest(n);
  for (std::size_t i = 0; i < n; ++i) nearest[i] = sq_dist(point(i), centers[0].data(), dims);
  while (static_cast<int>(centers.size()) < k) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (nearest[i] > nearest[best]) best = i;
    centers.emplace_back(point(best), point(best) + dims);
    for (std::size_t i = 0; i < n; ++i)
      nearest[i] = std::min(nearest[i], sq_dist(point(i), centers.back().data(), dims));
  }

  KMeansResult result;
  result.labels.width = fmap.width();
  result.labels.height = fmap.height();
  result.labels.num_classes = k;
  std::vector<int> label(n, -1);

  std::vector<double> sums(static_cast<std::size_t>(k) * dims);
  std::vector<std::size_t> counts(k);
  for (int it = 0; it < kKMeansMaxIterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(point(i), centers[0].data(), dims);
      for (int j = 1; j < k; ++j) {
        const double d = sq_dist(point(i), centers[j].data(), dims);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      if (label[i] != best) {
        label[i] = best;
        changed = true;
      }
    }
    ++result.iterations;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[label[i]];
      for (int d = 0; d < dims; ++d) sums[label[i] * dims + d] += point(i)[d];
    }
    // Empty clusters keep their previous centre.
    for (int j = 0; j < k; ++j)
      if (counts[j] > 0)
        for (int d = 0; d < dims; ++d)
          centers[j][d] = sums[j * dims + d] / static_cast<double>(counts[j]);

    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) sse += sq_dist(point(i), centers[label[i]].data(), dims);
    result.sse_history.push_back(sse);
    if (!changed) break;
  }

  result.labels.labels.assign(label.begin(), label.end());
  result.centers = std::move(centers);
  return result;
}

LabelMap kmeans_labels(const FeatureMap& fmap, int k, std::uint64_t seed) {
  return kmeans(fmap, k, seed).labels;
}

FeatureMap enhance(const FeatureMap& fmap, const LabelMap& labels, float weight) {
  if (labels.width != fmap.width() || labels.height != fmap.height())
    throw Error("enhance: label map is " + std::to_string(labels.width) + "x" +
                std::to_string(labels.height) + ", feature map is " +
                std::to_string(fmap.width()) + "x" + std::to_string(fmap.height()));
  const int base = fmap.channels();
  FeatureMap out(base + labels.num_classes, fmap.width(), fmap.height());
  std::copy(fmap.values().begin(), fmap.values().end(), out.values().begin());
  const std::size_t n = fmap.plane_size();
  for (std::size_t i = 0; i < n; ++i) {
    const int l = labels.labels[i];
    if (l >= labels.num_classes) throw Error("enhance: label exceeds num_classes");
    out.channel(base + l)[i] = weight;
  }
  return out;
}

LabelMap resize_nearest(const LabelMap& labels, int width, int height) {
  if (width == labels.width && height == labels.height) return labels;
  LabelMap out;
  out.width = width;
  out.height = height;
  out.num_classes = labels.num_classes;
  out.labels.resize(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    const int sy = static_cast<int>(static_cast<long long>(y) * labels.height / height);
    for (int x = 0; x < width; ++x) {
      const int sx = static_cast<int>(static_cast<long long>(x) * labels.width / width);
      out.labels[static_cast<std::size_t>(y) * width + x] = labels.at(sx, sy);
    }
  }
  return out;
}

LabelMap load_label_map(const std::filesystem::path& path, int expected_width,
                        int expected_height) {
  const RawPng raw = read_png_raw(path);
  if (raw.channels != 1)
    throw FormatError(path.string() + ": label map must be an 8-bit grayscale PNG");
  LabelMap labels;
  labels.width = raw.width;
  labels.height = raw.height;
  labels.labels.assign(raw.data.begin(), raw.data.end());
  const int max_label = *std::max_element(raw.data.begin(), raw.data.end());
  labels.num_classes = max_label + 1;
  if (labels.num_classes > kMaxLabelClasses)
    throw FormatError(path.string() + ": " + std::to_string(labels.num_classes) +
                      " classes exceed the limit of " + std::to_string(kMaxLabelClasses));
  return resize_nearest(labels, expected_width, expected_height);
}

}  // namespace stainform
