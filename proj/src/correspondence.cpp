#include "stainform/correspondence.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <thread>

#include "stainform/error.hpp"

namespace stainform {

namespace {

constexpr double kReject = std::numeric_limits<double>::infinity();

// Channel-interleaved copy of a feature map so one pixel's vector is
// contiguous.
struct PixelMajor {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> v;

  explicit PixelMajor(const FeatureMap& f)
      : width(f.width()), height(f.height()), channels(f.channels()), v(f.values().size()) {
    const std::size_t n = f.plane_size();
    for (int c = 0; c < channels; ++c) {
      auto ch = f.channel(c);
      for (std::size_t i = 0; i < n; ++i) v[i * channels + c] = ch[i];
    }
  }
  const float* at(int x, int y) const {
    return v.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
};

// Core patch distance. Both accessors return the c-th feature of a pixel; the
// summation order (dy, dx, c) is shared by every caller so results agree
// bitwise. When the running sum exceeds `limit` the candidate is rejected
// early and kReject is returned.
template <typename GetA, typename GetB>
double patch_distance(GetA get_a, int aw, int ah, Coord pa, GetB get_b, int bw, int bh, Coord pb,
                      int half, int channels, double limit = kReject) {
  const int dx0 = std::max({-half, -pa.x, -pb.x});
  const int dx1 = std::min({half, aw - 1 - pa.x, bw - 1 - pb.x});
  const int dy0 = std::max({-half, -pa.y, -pb.y});
  const int dy1 = std::min({half, ah - 1 - pa.y, bh - 1 - pb.y});
  const double count = static_cast<double>((dx1 - dx0 + 1) * (dy1 - dy0 + 1) * channels);
  const double bound = limit * count * (1.0 + 1e-12);
  double sum = 0.0;
  for (int dy = dy0; dy <= dy1; ++dy) {
    for (int dx = dx0; dx <= dx1; ++dx) {
      const int ax = pa.x + dx, ay = pa.y + dy, bx = pb.x + dx, by = pb.y + dy;
      for (int c = 0; c < channels; ++c) {
        const double d = static_cast<double>(get_a(ax, ay, c)) - static_cast<double>(get_b(bx, by, c));
        sum += d * d;
      }
    }
    if (sum > bound) return kReject;
  }
  return sum / count;
}

double pm_distance(const PixelMajor& a, Coord pa, const PixelMajor& b, Coord pb, int half,
                   double limit = kReject) {
  const float* av = a.v.data();
  const float* bv = b.v.data();
  const int ch = a.channels;
  const int aw = a.width, bw = b.width;
  return patch_distance(
      [av, aw, ch](int x, int y, int c) { return av[(static_cast<std::size_t>(y) * aw + x) * ch + c]; },
      a.width, a.height, pa,
      [bv, bw, ch](int x, int y, int c) { return bv[(static_cast<std::size_t>(y) * bw + x) * ch + c]; },
      b.width, b.height, pb, half, ch, limit);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser over the combined words.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

// Offset of up to r around `centre`, clamped onto the grid.
inline Coord sample_window(std::mt19937_64& rng, Coord centre, int r, int w, int h) {
  return {std::clamp(centre.x + uniform_int(rng, -r, r), 0, w - 1),
          std::clamp(centre.y + uniform_int(rng, -r, r), 0, h - 1)};
}

struct Searcher {
  const PixelMajor& src;
  const PixelMajor& tgt;
  const PatchMatchParams& params;
  int half;
  std::vector<Coord>& mapping;
  std::vector<double>& cost;

  void try_candidate(int x, int y, Coord cand, Coord& best, double& best_cost) const {
    if (cand == best) return;
    const double c = pm_distance(src, {x, y}, tgt, cand, half, best_cost);
    if (c < best_cost) {
      best = cand;
      best_cost = c;
    }
  }

  // One sweep over rows [y0, y1). Neighbours outside the band are read from
  // `frozen` when given, otherwise from the live field.
  void sweep(int y0, int y1, bool forward, std::mt19937_64& rng,
             const std::vector<Coord>* frozen) const {
    const int w = src.width;
    const int tw = tgt.width;
    const int th = tgt.height;
    const int step = forward ? 1 : -1;
    const int max_radius = std::max(tw, th);

    auto neighbor = [&](int nx, int ny) -> const Coord& {
      const std::size_t idx = static_cast<std::size_t>(ny) * w + nx;
      if (frozen && (ny < y0 || ny >= y1)) return (*frozen)[idx];
      return mapping[idx];
    };

    for (int yi = 0; yi < y1 - y0; ++yi) {
      const int y = forward ? y0 + yi : y1 - 1 - yi;
      for (int xi = 0; xi < w; ++xi) {
        const int x = forward ? xi : w - 1 - xi;
        const std::size_t idx = static_cast<std::size_t>(y) * w + x;
        Coord best = mapping[idx];
        double best_cost = cost[idx];

        // Propagation from the already-visited neighbours.
        const int nx = x - step;
        if (nx >= 0 && nx < w) {
          Coord c = neighbor(nx, y);
          c.x += step;
          if (c.x >= 0 && c.x < tw) try_candidate(x, y, c, best, best_cost);
        }
        const int ny = y - step;
        if (ny >= 0 && ny < src.height) {
          Coord c = neighbor(x, ny);
          c.y += step;
          if (c.y >= 0 && c.y < th) try_candidate(x, y, c, best, best_cost);
        }

        // Random search with exponentially shrinking radius.
        for (double r = max_radius; r >= 1.0; r *= params.search_radius_decay) {
          try_candidate(x, y, sample_window(rng, best, static_cast<int>(r), tw, th), best, best_cost);
        }

        mapping[idx] = best;
        cost[idx] = best_cost;
      }
    }
  }
};

NNField run_patchmatch(const FeatureMap& src, const FeatureMap& tgt, const PatchMatchParams& params,
                       PatchMatchTrace* trace) {
  params.validate();
  if (src.channels() != tgt.channels())
    throw Error("patchmatch: channel mismatch (" + std::to_string(src.channels()) + " vs " +
                std::to_string(tgt.channels()) + ")");
  const PixelMajor a(src);
  const PixelMajor b(tgt);
  const int half = params.patch_size / 2;

  NNField field;
  field.src_width = src.width();
  field.src_height = src.height();
  field.tgt_width = tgt.width();
  field.tgt_height = tgt.height();
  const std::size_t n = src.plane_size();
  field.mapping.resize(n);
  field.cost.resize(n);

  std::mt19937_64 rng(params.rng_seed);
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x) {
      const Coord c{uniform_int(rng, 0, tgt.width() - 1), uniform_int(rng, 0, tgt.height() - 1)};
      const std::size_t idx = static_cast<std::size_t>(y) * src.width() + x;
      field.mapping[idx] = c;
      field.cost[idx] = pm_distance(a, {x, y}, b, c, half);
    }
  if (trace) trace->total_cost.assign(1, field.total_cost());

  Searcher searcher{a, b, params, half, field.mapping, field.cost};
  const int bands = std::clamp(params.threads, 1, std::max(1, src.height() / 2));
  for (int it = 1; it <= params.iterations; ++it) {
    const bool forward = (it % 2) == 1;
    if (bands == 1) {
      searcher.sweep(0, src.height(), forward, rng, nullptr);
    } else {
      // Band-parallel sweep: rows outside a band are read from the state at
      // the start of the iteration, which is the boundary-row exchange.
      const std::vector<Coord> frozen = field.mapping;
      std::vector<std::thread> workers;
      workers.reserve(bands);
      for (int bnd = 0; bnd < bands; ++bnd) {
        const int y0 = static_cast<int>(static_cast<long long>(src.height()) * bnd / bands);
        const int y1 = static_cast<int>(static_cast<long long>(src.height()) * (bnd + 1) / bands);
        workers.emplace_back([&, y0, y1, bnd] {
          std::mt19937_64 band_rng(mix_seed(params.rng_seed, static_cast<std::uint64_t>(it),
                                            static_cast<std::uint64_t>(bnd)));
          searcher.sweep(y0, y1, forward, band_rng, &frozen);
        });
      }
      for (auto& t : workers) t.join();
    }
    if (trace) trace->total_cost.push_back(field.total_cost());
  }
  return field;
}

}  // namespace

double NNField::total_cost() const {
  double s = 0.0;
  for (double c : cost) s += c;
  return s;
}

void PatchMatchParams::validate() const {
  if (patch_size < 1 || patch_size % 2 == 0)
    throw Error("patch_size must be a positive odd integer, got " + std::to_string(patch_size));
  if (iterations < 1) throw Error("patchmatch iterations must be >= 1");
  if (!(search_radius_decay > 0.0 && search_radius_decay < 1.0))
    throw Error("search_radius_decay must lie in (0,1)");
  if (threads < 1) throw Error("threads must be >= 1");
}

double patch_cost(const FeatureMap& a, Coord pa, const FeatureMap& b, Coord pb, int patch_size) {
  if (a.channels() != b.channels()) throw Error("patch_cost: channel mismatch");
  return patch_distance([&a](int x, int y, int c) { return a.at(c, x, y); }, a.width(), a.height(),
                        pa, [&b](int x, int y, int c) { return b.at(c, x, y); }, b.width(),
                        b.height(), pb, patch_size / 2, a.channels());
}

NNField patchmatch(const FeatureMap& src, const FeatureMap& tgt, const PatchMatchParams& params,
                   PatchMatchTrace* trace) {
  return run_patchmatch(src, tgt, params, trace);
}

// ---------------------------------------------------------------------------
// k nearest neighbours within one map

namespace {

struct KnnList {
  std::uint32_t* idx;
  double* cost;
  int k;

  bool contains(std::uint32_t j) const {
    for (int i = 0; i < k; ++i)
      if (idx[i] == j) return true;
    return false;
  }
  double worst() const { return cost[k - 1]; }
  // Inserts keeping ascending order; caller guarantees c < worst().
  void insert(std::uint32_t j, double c) {
    int pos = k - 1;
    while (pos > 0 && cost[pos - 1] > c) {
      idx[pos] = idx[pos - 1];
      cost[pos] = cost[pos - 1];
      --pos;
    }
    idx[pos] = j;
    cost[pos] = c;
  }
};

}  // namespace

KnnField self_knn(const FeatureMap& fmap, int k, const PatchMatchParams& params) {
  params.validate();
  const int w = fmap.width();
  const int h = fmap.height();
  const std::size_t n = fmap.plane_size();
  KnnField out;
  out.width = w;
  out.height = h;
  out.k = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), n - 1));
  if (out.k == 0) return out;
  const int kk = out.k;
  out.neighbors.resize(n * kk);
  out.cost.resize(n * kk);

  const PixelMajor a(fmap);
  const int half = params.patch_size / 2;
  std::mt19937_64 rng(params.rng_seed);
  auto list = [&](std::size_t p) { return KnnList{out.neighbors.data() + p * kk, out.cost.data() + p * kk, kk}; };
  auto coord = [w](std::uint32_t j) { return Coord{static_cast<int>(j % w), static_cast<int>(j / w)}; };

  for (std::size_t p = 0; p < n; ++p) {
    KnnList l = list(p);
    for (int i = 0; i < kk; ++i) {
      l.idx[i] = std::numeric_limits<std::uint32_t>::max();
      l.cost[i] = kReject;
    }
    const Coord pc = coord(static_cast<std::uint32_t>(p));
    int filled = 0;
    while (filled < kk) {
      const auto j = static_cast<std::uint32_t>(rng() % n);
      if (j == p || l.contains(j)) continue;
      l.insert(j, pm_distance(a, pc, a, coord(j), half));
      ++filled;
    }
  }

  auto offer = [&](std::size_t p, KnnList& l, Coord pc, Coord cand) {
    if (cand.x < 0 || cand.y < 0 || cand.x >= w || cand.y >= h) return;
    const auto j = static_cast<std::uint32_t>(cand.y * w + cand.x);
    if (j == p || l.contains(j)) return;
    const double c = pm_distance(a, pc, a, cand, half, l.worst());
    if (c < l.worst()) l.insert(j, c);
  };

  const int max_radius = std::max(w, h);
  for (int it = 1; it <= params.iterations; ++it) {
    const bool forward = (it % 2) == 1;
    const int step = forward ? 1 : -1;
    for (int yi = 0; yi < h; ++yi) {
      const int y = forward ? yi : h - 1 - yi;
      for (int xi = 0; xi < w; ++xi) {
        const int x = forward ? xi : w - 1 - xi;
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        const Coord pc{x, y};
        KnnList l = list(p);
        const int nx = x - step;
        if (nx >= 0 && nx < w) {
          const KnnList nl = list(p - step);
          for (int i = 0; i < kk; ++i) {
            Coord c = coord(nl.idx[i]);
            c.x += step;
            offer(p, l, pc, c);
          }
        }
        const int ny = y - step;
        if (ny >= 0 && ny < h) {
          const KnnList nl = list(static_cast<std::size_t>(ny) * w + x);
          for (int i = 0; i < kk; ++i) {
            Coord c = coord(nl.idx[i]);
            c.y += step;
            offer(p, l, pc, c);
          }
        }
        for (int i = 0; i < kk; ++i) {
          const Coord centre = coord(l.idx[i]);
          for (double r = max_radius; r >= 1.0; r *= params.search_radius_decay) {
            offer(p, l, pc, sample_window(rng, centre, static_cast<int>(r), w, h));
          }
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Voting

FloatImage bds_vote(const FloatImage& ref, const NNField& fwd, const NNField& bwd, int patch_size) {
  if (ref.width() != fwd.tgt_width || ref.height() != fwd.tgt_height)
    throw Error("bds_vote: reference colours do not match the forward field's target grid");
  if (bwd.src_width != ref.width() || bwd.src_height != ref.height())
    throw Error("bds_vote: backward field must cover the reference grid");
  if (bwd.tgt_width != fwd.src_width || bwd.tgt_height != fwd.src_height)
    throw Error("bds_vote: backward field must point into the source grid");
  if (patch_size < 1 || patch_size % 2 == 0) throw Error("bds_vote: patch_size must be odd");

  const int sw = fwd.src_width;
  const int sh = fwd.src_height;
  const int rw = ref.width();
  const int rh = ref.height();
  const int half = patch_size / 2;
  const std::size_t n = static_cast<std::size_t>(sw) * sh;

  // Coherence: every reference patch is pasted where bwd places it.
  std::vector<double> coh(n * 3, 0.0);
  std::vector<int> coh_count(n, 0);
  for (int ry = 0; ry < rh; ++ry)
    for (int rx = 0; rx < rw; ++rx) {
      const Coord t = bwd.at(rx, ry);
      for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx) {
          const int px = t.x + dx, py = t.y + dy;
          const int qx = rx + dx, qy = ry + dy;
          if (px < 0 || py < 0 || px >= sw || py >= sh) continue;
          if (qx < 0 || qy < 0 || qx >= rw || qy >= rh) continue;
          const std::size_t p = static_cast<std::size_t>(py) * sw + px;
          for (int c = 0; c < 3; ++c) coh[p * 3 + c] += ref.at(qx, qy, c);
          ++coh_count[p];
        }
    }

  FloatImage out(sw, sh);
  for (int py = 0; py < sh; ++py)
    for (int px = 0; px < sw; ++px) {
      // Completeness: every source patch covering p votes the colour its
      // match puts on p.
      double comp[3] = {0, 0, 0};
      int comp_count = 0;
      for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx) {
          const int qx = px - dx, qy = py - dy;
          if (qx < 0 || qy < 0 || qx >= sw || qy >= sh) continue;
          const Coord m = fwd.at(qx, qy);
          const int rx = m.x + dx, ry = m.y + dy;
          if (rx < 0 || ry < 0 || rx >= rw || ry >= rh) continue;
          for (int c = 0; c < 3; ++c) comp[c] += ref.at(rx, ry, c);
          ++comp_count;
        }
      assert(comp_count > 0);
      const std::size_t p = static_cast<std::size_t>(py) * sw + px;
      for (int c = 0; c < 3; ++c) {
        const double completeness = comp[c] / comp_count;
        double v = completeness;
        if (coh_count[p] > 0) v = 0.5 * completeness + 0.5 * (coh[p * 3 + c] / coh_count[p]);
        out.at(px, py, c) = static_cast<float>(v);
      }
    }
  return out;
}

FeatureMap nnf_to_fmap(const NNField& field) {
  FeatureMap out(2, field.src_width, field.src_height);
  for (std::size_t i = 0; i < field.mapping.size(); ++i) {
    out.channel(0)[i] = static_cast<float>(field.mapping[i].x);
    out.channel(1)[i] = static_cast<float>(field.mapping[i].y);
  }
  return out;
}

}  // namespace stainform
