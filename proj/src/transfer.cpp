#include "stainform/transfer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "detail/parallel.hpp"
#include "stainform/error.hpp"
#include "stainform/resample.hpp"

namespace stainform {

AbField::AbField(int w, int h, float a_fill, float b_fill) : width(w), height(h) {
  for (int c = 0; c < 3; ++c) {
    a[c] = Plane(w, h, a_fill);
    b[c] = Plane(w, h, b_fill);
  }
}

FeatureMap AbField::to_fmap() const {
  FeatureMap out(6, width, height);
  for (int c = 0; c < 3; ++c) {
    std::copy(a[c].values.begin(), a[c].values.end(), out.channel(c).begin());
    std::copy(b[c].values.begin(), b[c].values.end(), out.channel(3 + c).begin());
  }
  return out;
}

AbField AbField::from_fmap(const FeatureMap& fmap) {
  if (fmap.channels() != 6) throw Error("AbField expects a 6-channel map");
  AbField out(fmap.width(), fmap.height());
  for (int c = 0; c < 3; ++c) {
    auto ca = fmap.channel(c);
    auto cb = fmap.channel(3 + c);
    std::copy(ca.begin(), ca.end(), out.a[c].values.begin());
    std::copy(cb.begin(), cb.end(), out.b[c].values.begin());
  }
  return out;
}

AbField upsample_nearest(const AbField& field, int width, int height) {
  AbField out;
  out.width = width;
  out.height = height;
  for (int c = 0; c < 3; ++c) {
    out.a[c] = upsample_nearest(field.a[c], width, height);
    out.b[c] = upsample_nearest(field.b[c], width, height);
  }
  return out;
}

void EnergyParams::validate() const {
  if (!(lambda_l >= 0.0) || !(lambda_nl >= 0.0)) throw Error("lambda_l and lambda_nl must be >= 0");
  if (!(cg_tol > 0.0)) throw Error("cg_tol must be > 0");
  if (cg_max_iter < 1) throw Error("cg_max_iter must be >= 1");
  if (nl_neighbors < 0) throw Error("nl_neighbors must be >= 0");
  if (!(wls_eps > 0.0)) throw Error("wls_eps must be > 0");
  if (threads < 1) throw Error("threads must be >= 1");
}

void GuidedFilterParams::validate() const {
  if (radius < 1) throw Error("guided filter radius must be >= 1");
  if (!(eps > 0.0)) throw Error("guided filter eps must be > 0");
  if (subsample < 1) throw Error("guided filter subsample must be >= 1");
}

// ---------------------------------------------------------------------------
// Energy

namespace {

// Right and down edge weights in double precision; missing neighbours get 0.
struct WlsWeights {
  std::vector<double> right;
  std::vector<double> down;
};

WlsWeights compute_wls(const FloatImage& source, const EnergyParams& params) {
  const int w = source.width();
  const int h = source.height();
  const std::size_t n = source.pixel_count();
  std::vector<double> lum(n);
  auto px = source.data();
  for (std::size_t i = 0; i < n; ++i)
    lum[i] = luminance(px[3 * i], px[3 * i + 1], px[3 * i + 2], params.luminance);
  auto weight = [&](std::size_t p, std::size_t q) {
    return 1.0 / (std::pow(std::abs(lum[p] - lum[q]), params.wls_alpha) + params.wls_eps);
  };
  WlsWeights out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      if (x + 1 < w) out.right[p] = weight(p, p + 1);
      if (y + 1 < h) out.down[p] = weight(p, p + w);
    }
  return out;
}

}  // namespace

std::array<Plane, 2> wls_weights(const FloatImage& source, const EnergyParams& params) {
  const WlsWeights wls = compute_wls(source, params);
  std::array<Plane, 2> out{Plane(source.width(), source.height()), Plane(source.width(), source.height())};
  for (std::size_t i = 0; i < wls.right.size(); ++i) {
    out[0].values[i] = static_cast<float>(wls.right[i]);
    out[1].values[i] = static_cast<float>(wls.down[i]);
  }
  return out;
}

namespace {

void check_problem(const EnergyProblem& problem) {
  if (!problem.source || !problem.guidance) throw Error("energy problem needs source and guidance");
  const FloatImage& s = *problem.source;
  const FloatImage& g = *problem.guidance;
  if (s.width() != g.width() || s.height() != g.height())
    throw Error("solve_ab: source and guidance dimensions differ");
  if (problem.nonlocal && problem.nonlocal->k > 0 &&
      (problem.nonlocal->width != s.width() || problem.nonlocal->height != s.height()))
    throw Error("solve_ab: non-local neighbour field dimensions differ");
  problem.params.validate();
}

// Symmetric smoothness graph in compressed-row form. Row p lists every
// (q, weight) pair of the combined local and non-local terms; the Hessian of
// the smoothness part is the weighted graph Laplacian.
struct Graph {
  std::vector<std::size_t> row;  // n + 1
  std::vector<std::uint32_t> col;
  std::vector<double> weight;
  std::vector<double> degree;
};

Graph build_graph(const EnergyProblem& problem) {
  const FloatImage& s = *problem.source;
  const int w = s.width();
  const int h = s.height();
  const std::size_t n = s.pixel_count();
  const EnergyParams& ep = problem.params;

  struct Edge {
    std::uint32_t p, q;
    double w;
  };
  std::vector<Edge> edges;
  if (ep.lambda_l > 0.0) {
    const WlsWeights wls = compute_wls(s, ep);
    // E_L sums over ordered neighbour pairs, so each undirected edge is seen
    // twice.
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const auto p = static_cast<std::uint32_t>(y * w + x);
        if (x + 1 < w) edges.push_back({p, p + 1, 2.0 * ep.lambda_l * wls.right[p]});
        if (y + 1 < h) edges.push_back({p, p + static_cast<std::uint32_t>(w), 2.0 * ep.lambda_l * wls.down[p]});
      }
  }
  if (ep.lambda_nl > 0.0 && problem.nonlocal && problem.nonlocal->k > 0) {
    const KnnField& knn = *problem.nonlocal;
    for (std::size_t p = 0; p < n; ++p)
      for (int i = 0; i < knn.k; ++i)
        edges.push_back({static_cast<std::uint32_t>(p), knn.neighbors[p * knn.k + i], ep.lambda_nl});
  }

  Graph g;
  g.row.assign(n + 1, 0);
  g.degree.assign(n, 0.0);
  for (const Edge& e : edges) {
    ++g.row[e.p + 1];
    ++g.row[e.q + 1];
  }
  for (std::size_t i = 0; i < n; ++i) g.row[i + 1] += g.row[i];
  g.col.resize(g.row[n]);
  g.weight.resize(g.row[n]);
  std::vector<std::size_t> fill(g.row.begin(), g.row.end() - 1);
  for (const Edge& e : edges) {
    g.col[fill[e.p]] = e.q;
    g.weight[fill[e.p]++] = e.w;
    g.col[fill[e.q]] = e.p;
    g.weight[fill[e.q]++] = e.w;
    g.degree[e.p] += e.w;
    g.degree[e.q] += e.w;
  }
  return g;
}

double dot(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

// Unknowns are interleaved per pixel: x[2p] = a_p, x[2p + 1] = b_p.
struct ChannelSystem {
  const Graph& graph;
  std::vector<double> s;
  std::vector<double> g;
  int threads;

  std::size_t size() const { return s.size(); }

  void apply(const std::vector<double>& x, std::vector<double>& y) const {
    detail::parallel_for(size(), threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t p = begin; p < end; ++p) {
        const double a = x[2 * p];
        const double b = x[2 * p + 1];
        double la = graph.degree[p] * a;
        double lb = graph.degree[p] * b;
        for (std::size_t e = graph.row[p]; e < graph.row[p + 1]; ++e) {
          const std::size_t q = graph.col[e];
          la -= graph.weight[e] * x[2 * q];
          lb -= graph.weight[e] * x[2 * q + 1];
        }
        y[2 * p] = s[p] * s[p] * a + s[p] * b + la;
        y[2 * p + 1] = s[p] * a + b + lb;
      }
    });
  }

  void rhs(std::vector<double>& out) const {
    for (std::size_t p = 0; p < size(); ++p) {
      out[2 * p] = s[p] * g[p];
      out[2 * p + 1] = g[p];
    }
  }

  // Inverse of each pixel's 2x2 diagonal block.
  void precondition(const std::vector<double>& r, std::vector<double>& z) const {
    for (std::size_t p = 0; p < size(); ++p) {
      const double d = graph.degree[p];
      const double m00 = s[p] * s[p] + d + 1e-12;
      const double m01 = s[p];
      const double m11 = 1.0 + d + 1e-12;
      const double det = m00 * m11 - m01 * m01;
      z[2 * p] = (m11 * r[2 * p] - m01 * r[2 * p + 1]) / det;
      z[2 * p + 1] = (m00 * r[2 * p + 1] - m01 * r[2 * p]) / det;
    }
  }
};

struct CgResult {
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

CgResult pcg(const ChannelSystem& sys, std::vector<double>& x, double tol, int max_iter) {
  const std::size_t m = x.size();
  std::vector<double> b(m), r(m), z(m), p(m), ap(m);
  sys.rhs(b);
  sys.apply(x, ap);
  for (std::size_t i = 0; i < m; ++i) r[i] = b[i] - ap[i];
  double ref = std::sqrt(dot(b, b));
  if (ref == 0.0) ref = 1.0;

  CgResult res;
  res.residual = std::sqrt(dot(r, r)) / ref;
  if (res.residual <= tol) {
    res.converged = true;
    return res;
  }
  sys.precondition(r, z);
  p = z;
  double rz = dot(r, z);
  for (int it = 1; it <= max_iter; ++it) {
    sys.apply(p, ap);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) break;  // direction in the null space of a singular system
    const double alpha = rz / pap;
    for (std::size_t i = 0; i < m; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    res.iterations = it;
    res.residual = std::sqrt(dot(r, r)) / ref;
    if (res.residual <= tol) {
      res.converged = true;
      return res;
    }
    sys.precondition(r, z);
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < m; ++i) p[i] = z[i] + beta * p[i];
  }
  return res;
}

}  // namespace

double total_energy(const EnergyProblem& problem, const AbField& ab) {
  check_problem(problem);
  const FloatImage& s = *problem.source;
  const FloatImage& g = *problem.guidance;
  const int w = s.width();
  const int h = s.height();
  const EnergyParams& ep = problem.params;
  const WlsWeights wls = compute_wls(s, ep);

  double data = 0.0, local = 0.0, nonlocal = 0.0;
  for (int c = 0; c < 3; ++c) {
    const Plane& a = ab.a[c];
    const Plane& b = ab.b[c];
    auto sq_pair = [&](std::size_t p, std::size_t q) {
      const double da = static_cast<double>(a.values[p]) - a.values[q];
      const double db = static_cast<double>(b.values[p]) - b.values[q];
      return da * da + db * db;
    };
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        const double r = static_cast<double>(a.values[p]) * s.at(x, y, c) + b.values[p] - g.at(x, y, c);
        data += r * r;
        // Ordered pairs: each of the four neighbours of p.
        if (x + 1 < w) local += wls.right[p] * sq_pair(p, p + 1);
        if (x > 0) local += wls.right[p - 1] * sq_pair(p, p - 1);
        if (y + 1 < h) local += wls.down[p] * sq_pair(p, p + w);
        if (y > 0) local += wls.down[p - w] * sq_pair(p, p - w);
      }
    if (problem.nonlocal && problem.nonlocal->k > 0) {
      const KnnField& knn = *problem.nonlocal;
      const std::size_t n = static_cast<std::size_t>(w) * h;
      for (std::size_t p = 0; p < n; ++p)
        for (int i = 0; i < knn.k; ++i) nonlocal += sq_pair(p, knn.neighbors[p * knn.k + i]);
    }
  }
  return data + ep.lambda_l * local + ep.lambda_nl * nonlocal;
}

AbField solve_ab(const EnergyProblem& problem, SolveReport* report) {
  check_problem(problem);
  const FloatImage& src = *problem.source;
  const FloatImage& guide = *problem.guidance;
  const std::size_t n = src.pixel_count();
  const Graph graph = build_graph(problem);

  AbField out(src.width(), src.height());
  SolveReport local_report;
  for (int c = 0; c < 3; ++c) {
    ChannelSystem sys{graph, std::vector<double>(n), std::vector<double>(n), problem.params.threads};
    double smin = 1e300, smax = -1e300, smean = 0.0, gmean = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      sys.s[p] = src.data()[3 * p + c];
      sys.g[p] = guide.data()[3 * p + c];
      smin = std::min(smin, sys.s[p]);
      smax = std::max(smax, sys.s[p]);
      smean += sys.s[p];
      gmean += sys.g[p];
    }
    smean /= static_cast<double>(n);
    gmean /= static_cast<double>(n);

    if (smax - smin < 1e-9) {
      // Gain and offset are not separable on a flat channel: shift the mean.
      local_report.fallback[c] = true;
      std::fill(out.a[c].values.begin(), out.a[c].values.end(), 1.0f);
      std::fill(out.b[c].values.begin(), out.b[c].values.end(), static_cast<float>(gmean - smean));
      continue;
    }

    std::vector<double> x(2 * n);
    for (std::size_t p = 0; p < n; ++p) {
      x[2 * p] = 1.0;
      x[2 * p + 1] = 0.0;
    }
    const CgResult cg = pcg(sys, x, problem.params.cg_tol, problem.params.cg_max_iter);
    local_report.iterations[c] = cg.iterations;
    local_report.residual[c] = cg.residual;
    if (!cg.converged)
      throw ConvergenceError("solve_ab: conjugate gradient did not converge on channel " +
                                 std::to_string(c) + " after " + std::to_string(cg.iterations) +
                                 " iterations (relative residual " + std::to_string(cg.residual) + ")",
                             cg.residual);
    for (std::size_t p = 0; p < n; ++p) {
      out.a[c].values[p] = static_cast<float>(x[2 * p]);
      out.b[c].values[p] = static_cast<float>(x[2 * p + 1]);
    }
  }
  if (report) *report = local_report;
  return out;
}

namespace {

PatchMatchParams nonlocal_search_params(const EnergyParams& params) {
  PatchMatchParams pm;
  pm.patch_size = 1;
  pm.iterations = 5;
  pm.rng_seed = params.nl_seed;
  return pm;
}

}  // namespace

AbField solve_ab(const FloatImage& source, const FloatImage& guidance, const FeatureMap& feats,
                 const EnergyParams& params, SolveReport* report) {
  if (feats.width() != source.width() || feats.height() != source.height())
    throw Error("solve_ab: feature map dimensions differ from the source");
  KnnField knn;
  if (params.lambda_nl > 0.0 && params.nl_neighbors > 0)
    knn = self_knn(feats, params.nl_neighbors, nonlocal_search_params(params));
  EnergyProblem problem{&source, &guidance, &knn, params};
  return solve_ab(problem, report);
}

// ---------------------------------------------------------------------------
// Guided filter

namespace {

// Mean over the (2r+1)^2 window clipped to the grid, via a summed-area table.
std::vector<double> box_mean(const std::vector<double>& v, int w, int h, int r) {
  std::vector<double> sat(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
  for (int y = 0; y < h; ++y) {
    double row = 0.0;
    for (int x = 0; x < w; ++x) {
      row += v[static_cast<std::size_t>(y) * w + x];
      sat[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] =
          sat[static_cast<std::size_t>(y) * (w + 1) + x + 1] + row;
    }
  }
  std::vector<double> out(v.size());
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - r), y1 = std::min(h, y + r + 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - r), x1 = std::min(w, x + r + 1);
      const double sum = sat[static_cast<std::size_t>(y1) * (w + 1) + x1] -
                         sat[static_cast<std::size_t>(y0) * (w + 1) + x1] -
                         sat[static_cast<std::size_t>(y1) * (w + 1) + x0] +
                         sat[static_cast<std::size_t>(y0) * (w + 1) + x0];
      out[static_cast<std::size_t>(y) * w + x] = sum / static_cast<double>((y1 - y0) * (x1 - x0));
    }
  }
  return out;
}

// Area-average reduction by an arbitrary integer factor.
std::vector<double> reduce(const Plane& p, int s, int& ow, int& oh) {
  ow = (p.width + s - 1) / s;
  oh = (p.height + s - 1) / s;
  std::vector<double> out(static_cast<std::size_t>(ow) * oh, 0.0);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      double sum = 0.0;
      int count = 0;
      for (int y = oy * s; y < std::min(p.height, (oy + 1) * s); ++y)
        for (int x = ox * s; x < std::min(p.width, (ox + 1) * s); ++x) {
          sum += p.at(x, y);
          ++count;
        }
      out[static_cast<std::size_t>(oy) * ow + ox] = sum / count;
    }
  return out;
}

// Bilinear sample of a coarse grid whose cell i covers fine pixels
// [i*s, (i+1)*s).
double sample_bilinear(const std::vector<double>& v, int w, int h, double fx, double fy) {
  fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
  fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double tx = fx - x0, ty = fy - y0;
  auto at = [&](int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; };
  const double top = at(x0, y0) + (at(x1, y0) - at(x0, y0)) * tx;
  const double bottom = at(x0, y1) + (at(x1, y1) - at(x0, y1)) * tx;
  return top + (bottom - top) * ty;
}

}  // namespace

Plane fast_guided_filter(const Plane& guide, const Plane& input, const GuidedFilterParams& params) {
  params.validate();
  if (guide.width != input.width || guide.height != input.height)
    throw Error("guided filter: guide and input dimensions differ");
  const int w = guide.width;
  const int h = guide.height;
  const int s = std::min({params.subsample, w, h});
  const int r = std::max(1, static_cast<int>(std::lround(static_cast<double>(params.radius) / s)));

  int lw = 0, lh = 0;
  const std::vector<double> I = reduce(guide, s, lw, lh);
  const std::vector<double> p = reduce(input, s, lw, lh);
  const std::size_t ln = I.size();

  std::vector<double> ii(ln), ip(ln);
  for (std::size_t i = 0; i < ln; ++i) {
    ii[i] = I[i] * I[i];
    ip[i] = I[i] * p[i];
  }
  const auto mean_i = box_mean(I, lw, lh, r);
  const auto mean_p = box_mean(p, lw, lh, r);
  const auto corr_ii = box_mean(ii, lw, lh, r);
  const auto corr_ip = box_mean(ip, lw, lh, r);

  std::vector<double> a(ln), b(ln);
  for (std::size_t i = 0; i < ln; ++i) {
    const double var = std::max(0.0, corr_ii[i] - mean_i[i] * mean_i[i]);
    const double cov = corr_ip[i] - mean_i[i] * mean_p[i];
    a[i] = cov / (var + params.eps);
    b[i] = mean_p[i] - a[i] * mean_i[i];
  }
  const auto mean_a = box_mean(a, lw, lh, r);
  const auto mean_b = box_mean(b, lw, lh, r);

  const auto [lo_it, hi_it] = std::minmax_element(input.values.begin(), input.values.end());
  const float lo = *lo_it;
  const float hi = *hi_it;

  Plane out(w, h);
  for (int y = 0; y < h; ++y) {
    const double fy = (y + 0.5) / s - 0.5;
    for (int x = 0; x < w; ++x) {
      const double fx = (x + 0.5) / s - 0.5;
      const double qa = s == 1 ? mean_a[static_cast<std::size_t>(y) * w + x]
                               : sample_bilinear(mean_a, lw, lh, fx, fy);
      const double qb = s == 1 ? mean_b[static_cast<std::size_t>(y) * w + x]
                               : sample_bilinear(mean_b, lw, lh, fx, fy);
      const double q = qa * guide.at(x, y) + qb;
      out.at(x, y) = std::clamp(static_cast<float>(q), lo, hi);
    }
  }
  return out;
}

AbField guided_filter_upscale(const AbField& ab, const FloatImage& src_full,
                              const GuidedFilterParams& params, LuminanceMode mode) {
  params.validate();
  const int w = src_full.width();
  const int h = src_full.height();
  if (w < ab.width || h < ab.height)
    throw Error("guided_filter_upscale: full image is smaller than the coefficient field");
  const Plane guide = luminance_plane(src_full, mode);
  AbField out;
  out.width = w;
  out.height = h;
  for (int c = 0; c < 3; ++c) {
    out.a[c] = fast_guided_filter(guide, upsample_nearest(ab.a[c], w, h), params);
    out.b[c] = fast_guided_filter(guide, upsample_nearest(ab.b[c], w, h), params);
  }
  return out;
}

Image apply_ab(const Image& src, const AbField& ab) {
  if (src.width() != ab.width || src.height() != ab.height)
    throw Error("apply_ab: coefficient field dimensions differ from the image");
  Image out(src.width(), src.height());
  auto in = src.data();
  auto dst = out.data();
  const std::size_t n = src.pixel_count();
  for (std::size_t p = 0; p < n; ++p)
    for (int c = 0; c < 3; ++c) {
      const float s = static_cast<float>(in[3 * p + c]) / 255.0f;
      dst[3 * p + c] = quantize(ab.a[c].values[p] * s + ab.b[c].values[p]);
    }
  return out;
}

// ---------------------------------------------------------------------------
// End-to-end

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

FeatureMap concat_pixels(const FeatureMap& a, const FeatureMap& b) {
  const std::size_t na = a.plane_size();
  const std::size_t nb = b.plane_size();
  FeatureMap out(a.channels(), static_cast<int>(na + nb), 1);
  for (int c = 0; c < a.channels(); ++c) {
    auto dst = out.channel(c);
    std::copy(a.channel(c).begin(), a.channel(c).end(), dst.begin());
    std::copy(b.channel(c).begin(), b.channel(c).end(), dst.begin() + static_cast<std::ptrdiff_t>(na));
  }
  return out;
}

LabelMap slice_labels(const LabelMap& joint, std::size_t offset, int w, int h) {
  LabelMap out;
  out.width = w;
  out.height = h;
  out.num_classes = joint.num_classes;
  const auto begin = joint.labels.begin() + static_cast<std::ptrdiff_t>(offset);
  out.labels.assign(begin, begin + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(w) * h));
  return out;
}

FeatureMap layer_features(const FloatImage& full, const FloatImage& layer_img, const FeatureConfig& cfg,
                          const FeatureMap* external, const char* which) {
  if (cfg.source == FeatureSource::kBuiltin) return builtin_features(full, cfg.layer, cfg.luminance);
  if (!external)
    throw Error(std::string("external feature source selected but no ") + which + " feature map given");
  return resize_nearest(*external, layer_img.width(), layer_img.height());
}

}  // namespace

Image transfer_single_layer(const Image& src, const Image& ref, const FeatureConfig& cfg,
                            const PatchMatchParams& pm, const EnergyParams& ep,
                            const GuidedFilterParams& gf, TransferExtras* extras) {
  cfg.validate();
  pm.validate();
  ep.validate();
  gf.validate();
  TransferExtras scratch;
  TransferExtras& x = extras ? *extras : scratch;
  const auto t_start = Clock::now();

  const FloatImage src_f = to_float(src);
  const FloatImage ref_f = to_float(ref);
  const FloatImage src_l = downsample(src_f, cfg.layer);
  const FloatImage ref_l = downsample(ref_f, cfg.layer);

  auto t0 = Clock::now();
  FeatureMap fs = standardize(layer_features(src_f, src_l, cfg, x.src_features, "source")).map;
  FeatureMap fr = standardize(layer_features(ref_f, ref_l, cfg, x.ref_features, "reference")).map;
  if (fs.channels() != fr.channels()) throw Error("source and reference feature channel counts differ");

  switch (cfg.enhancement) {
    case Enhancement::kNone:
      break;
    case Enhancement::kCluster: {
      // One joint clustering so that class ids agree between the two images.
      const FeatureMap joint = concat_pixels(fs, fr);
      const int k = static_cast<int>(std::min<std::size_t>(cfg.cluster_k, joint.plane_size()));
      const LabelMap labels = kmeans_labels(joint, k, cfg.seed);
      fs = enhance(fs, slice_labels(labels, 0, fs.width(), fs.height()), cfg.enhancement_weight);
      fr = enhance(fr, slice_labels(labels, fs.plane_size(), fr.width(), fr.height()),
                   cfg.enhancement_weight);
      break;
    }
    case Enhancement::kSegmap: {
      if (!x.src_labels || !x.ref_labels)
        throw Error("segmentation enhancement selected but label maps are missing");
      LabelMap ls = resize_nearest(*x.src_labels, fs.width(), fs.height());
      LabelMap lr = resize_nearest(*x.ref_labels, fr.width(), fr.height());
      ls.num_classes = lr.num_classes = std::max(ls.num_classes, lr.num_classes);
      fs = enhance(fs, ls, cfg.enhancement_weight);
      fr = enhance(fr, lr, cfg.enhancement_weight);
      break;
    }
  }
  x.timings.features = seconds_since(t0);

  t0 = Clock::now();
  x.forward = patchmatch(fs, fr, pm);
  PatchMatchParams pm_back = pm;
  pm_back.rng_seed = pm.rng_seed + 1;
  x.backward = patchmatch(fr, fs, pm_back);
  x.timings.patchmatch = seconds_since(t0);

  t0 = Clock::now();
  x.guidance = bds_vote(ref_l, x.forward, x.backward, pm.patch_size);
  x.timings.vote = seconds_since(t0);

  t0 = Clock::now();
  x.ab_layer = solve_ab(src_l, x.guidance, fs, ep, &x.solve);
  x.timings.solve = seconds_since(t0);

  t0 = Clock::now();
  x.ab_full = guided_filter_upscale(x.ab_layer, src_f, gf, ep.luminance);
  Image out = apply_ab(src, x.ab_full);
  x.timings.upscale = seconds_since(t0);
  x.timings.total = seconds_since(t_start);
  return out;
}

}  // namespace stainform
