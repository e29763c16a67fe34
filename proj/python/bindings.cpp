#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <cstring>

#include "stainform/color.hpp"
#include "stainform/correspondence.hpp"
#include "stainform/error.hpp"
#include "stainform/feature_map.hpp"
#include "stainform/features.hpp"
#include "stainform/io.hpp"
#include "stainform/pipeline.hpp"
#include "stainform/resample.hpp"
#include "stainform/transfer.hpp"

namespace py = pybind11;
using namespace stainform;

namespace {

template <typename T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

// (H, W, 3) uint8 <-> Image
Image to_image(const Array<std::uint8_t>& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw Error("expected an (H, W, 3) uint8 array");
  const auto h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  return Image(w, h, std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

py::array_t<std::uint8_t> from_image(const Image& img) {
  py::array_t<std::uint8_t> out({img.height(), img.width(), 3});
  std::memcpy(out.mutable_data(), img.data().data(), img.data().size());
  return out;
}

// (H, W, 3) float in [0,1] <-> FloatImage
FloatImage to_float_image(const Array<float>& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw Error("expected an (H, W, 3) float array");
  FloatImage img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), img.data().begin());
  return img;
}

py::array_t<float> from_float_image(const FloatImage& img) {
  py::array_t<float> out({img.height(), img.width(), 3});
  std::copy(img.data().begin(), img.data().end(), out.mutable_data());
  return out;
}

// (C, H, W) float32 <-> FeatureMap
FeatureMap to_fmap(const Array<float>& a) {
  if (a.ndim() != 3) throw Error("expected a (C, H, W) float32 array");
  return FeatureMap(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(2)), static_cast<int>(a.shape(1)),
                    std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> from_fmap(const FeatureMap& f) {
  py::array_t<float> out({f.channels(), f.height(), f.width()});
  std::copy(f.values().begin(), f.values().end(), out.mutable_data());
  return out;
}

// (H, W, 2) int32 of (x, y) target coordinates -> NNField (costs left at 0)
NNField to_nnf(const Array<std::int32_t>& m, int tgt_w, int tgt_h) {
  if (m.ndim() != 3 || m.shape(2) != 2) throw Error("expected an (H, W, 2) int32 mapping");
  NNField f;
  f.src_height = static_cast<int>(m.shape(0));
  f.src_width = static_cast<int>(m.shape(1));
  f.tgt_width = tgt_w;
  f.tgt_height = tgt_h;
  const std::int32_t* p = m.data();
  for (py::ssize_t i = 0; i < m.shape(0) * m.shape(1); ++i) {
    const Coord c{p[2 * i], p[2 * i + 1]};
    if (c.x < 0 || c.y < 0 || c.x >= tgt_w || c.y >= tgt_h) throw Error("mapping points outside the target");
    f.mapping.push_back(c);
  }
  f.cost.assign(f.mapping.size(), 0.0);
  return f;
}

py::tuple from_nnf(const NNField& f) {
  py::array_t<std::int32_t> m({f.src_height, f.src_width, 2});
  py::array_t<double> cost({f.src_height, f.src_width});
  auto* mp = m.mutable_data();
  for (std::size_t i = 0; i < f.mapping.size(); ++i) {
    mp[2 * i] = f.mapping[i].x;
    mp[2 * i + 1] = f.mapping[i].y;
  }
  std::copy(f.cost.begin(), f.cost.end(), cost.mutable_data());
  return py::make_tuple(m, cost);
}

// AbField <-> pair of (3, H, W) float32 arrays
AbField to_ab(const Array<float>& a, const Array<float>& b) {
  if (a.ndim() != 3 || a.shape(0) != 3 || b.ndim() != 3 || b.shape(0) != 3 || a.shape(1) != b.shape(1) ||
      a.shape(2) != b.shape(2))
    throw Error("expected two (3, H, W) coefficient arrays of equal shape");
  const int h = static_cast<int>(a.shape(1)), w = static_cast<int>(a.shape(2));
  AbField ab(w, h);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  for (int c = 0; c < 3; ++c) {
    std::copy(a.data() + c * n, a.data() + (c + 1) * n, ab.a[c].values.begin());
    std::copy(b.data() + c * n, b.data() + (c + 1) * n, ab.b[c].values.begin());
  }
  return ab;
}

py::tuple from_ab(const AbField& ab) {
  py::array_t<float> a({3, ab.height, ab.width}), b({3, ab.height, ab.width});
  const std::size_t n = static_cast<std::size_t>(ab.width) * ab.height;
  for (int c = 0; c < 3; ++c) {
    std::copy(ab.a[c].values.begin(), ab.a[c].values.end(), a.mutable_data() + c * n);
    std::copy(ab.b[c].values.begin(), ab.b[c].values.end(), b.mutable_data() + c * n);
  }
  return py::make_tuple(a, b);
}

Enhancement parse_enhancement(const std::string& s) {
  if (s == "none") return Enhancement::kNone;
  if (s == "cluster") return Enhancement::kCluster;
  throw Error("enhance must be 'none' or 'cluster'");
}

}  // namespace

PYBIND11_MODULE(_stainform, m) {
  m.doc() = "Reference-based stain normalization: PatchMatch guidance plus local affine colour transfer.";

  static py::exception<Error> base(m, "StainformError", PyExc_ValueError);
  static py::exception<ConvergenceError> conv(m, "ConvergenceError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConvergenceError& e) {
      py::set_error(conv, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def(
      "luminance",
      [](double r, double g, double b, const std::string& mode) {
        return luminance(r, g, b, parse_luminance_mode(mode));
      },
      py::arg("r"), py::arg("g"), py::arg("b"), py::arg("mode") = "bt601",
      "Luminance of an RGB triple on the [0, 255] scale.");

  m.def(
      "standardize",
      [](const Array<float>& fmap) {
        const Standardized s = standardize(to_fmap(fmap));
        return py::make_tuple(from_fmap(s.map), s.stats.mean, s.stats.std);
      },
      py::arg("fmap"), "Per-channel zero mean, unit population std. Returns (map, means, stds).");

  m.def(
      "downsample", [](const Array<std::uint8_t>& img, int layer) { return from_image(downsample(to_image(img), layer)); },
      py::arg("image"), py::arg("layer"));

  m.def(
      "builtin_features",
      [](const Array<std::uint8_t>& img, int layer) { return from_fmap(builtin_features(to_image(img), layer)); },
      py::arg("image"), py::arg("layer") = 1, "14-channel (C, H, W) hand-crafted descriptor.");

  m.def(
      "patchmatch",
      [](const Array<float>& src, const Array<float>& tgt, int patch_size, int iterations, std::uint64_t seed,
         double decay) {
        PatchMatchParams p;
        p.patch_size = patch_size;
        p.iterations = iterations;
        p.rng_seed = seed;
        p.search_radius_decay = decay;
        const FeatureMap a = to_fmap(src), b = to_fmap(tgt);
        NNField f;
        {
          py::gil_scoped_release release;
          f = patchmatch(a, b, p);
        }
        return from_nnf(f);
      },
      py::arg("src"), py::arg("tgt"), py::arg("patch_size") = 3, py::arg("iterations") = 5,
      py::arg("seed") = PatchMatchParams{}.rng_seed, py::arg("search_radius_decay") = 0.5,
      "Returns (mapping (H, W, 2) int32 of x, y; cost (H, W) float64).");

  m.def(
      "bds_vote",
      [](const Array<float>& ref, const Array<std::int32_t>& fwd, const Array<std::int32_t>& bwd, int patch_size) {
        const FloatImage r = to_float_image(ref);
        const NNField f = to_nnf(fwd, r.width(), r.height());
        const NNField b = to_nnf(bwd, f.src_width, f.src_height);
        return from_float_image(bds_vote(r, f, b, patch_size));
      },
      py::arg("ref_colors"), py::arg("forward"), py::arg("backward"), py::arg("patch_size") = 3);

  m.def(
      "solve_ab",
      [](const Array<float>& source, const Array<float>& guidance, const Array<float>& feats, double lambda_l,
         double lambda_nl, double cg_tol, int cg_max_iter) {
        EnergyParams p;
        p.lambda_l = lambda_l;
        p.lambda_nl = lambda_nl;
        p.cg_tol = cg_tol;
        p.cg_max_iter = cg_max_iter;
        const FloatImage s = to_float_image(source), g = to_float_image(guidance);
        const FeatureMap f = to_fmap(feats);
        AbField ab;
        {
          py::gil_scoped_release release;
          ab = solve_ab(s, g, f, p);
        }
        return from_ab(ab);
      },
      py::arg("source"), py::arg("guidance"), py::arg("features"), py::arg("lambda_l") = 0.001,
      py::arg("lambda_nl") = 0.4, py::arg("cg_tol") = 1e-4, py::arg("cg_max_iter") = 500,
      "Minimise the transfer energy. Returns (a, b), each (3, H, W).");

  m.def(
      "guided_filter_upscale",
      [](const Array<float>& a, const Array<float>& b, const Array<float>& src_full, int radius, double eps,
         int subsample) {
        GuidedFilterParams p{radius, eps, subsample};
        return from_ab(guided_filter_upscale(to_ab(a, b), to_float_image(src_full), p));
      },
      py::arg("a"), py::arg("b"), py::arg("source"), py::arg("radius") = 8, py::arg("eps") = 1e-3,
      py::arg("subsample") = 4);

  m.def(
      "apply_ab",
      [](const Array<std::uint8_t>& img, const Array<float>& a, const Array<float>& b) {
        return from_image(apply_ab(to_image(img), to_ab(a, b)));
      },
      py::arg("image"), py::arg("a"), py::arg("b"));

  m.def(
      "transfer",
      [](const Array<std::uint8_t>& src, const Array<std::uint8_t>& ref, int layer, const std::string& enhance,
         int cluster_k, const std::string& preset, std::uint64_t seed) {
        FeatureConfig cfg;
        cfg.layer = layer;
        cfg.enhancement = parse_enhancement(enhance);
        cfg.cluster_k = cluster_k;
        cfg.seed = seed ^ 0x5eedULL;
        PatchMatchParams pm;
        pm.rng_seed = seed;
        if (preset != "he" && preset != "paper") throw Error("preset must be 'paper' or 'he'");
        EnergyParams ep = preset == "he" ? EnergyParams::he_preset() : EnergyParams::paper_preset();
        ep.nl_seed = seed ^ 0x4e4cULL;
        const Image s = to_image(src), r = to_image(ref);
        Image out;
        {
          py::gil_scoped_release release;
          out = transfer_single_layer(s, r, cfg, pm, ep, GuidedFilterParams{});
        }
        return from_image(out);
      },
      py::arg("source"), py::arg("reference"), py::arg("layer") = 1, py::arg("enhance") = "cluster",
      py::arg("cluster_k") = 5, py::arg("preset") = "paper", py::arg("seed") = PatchMatchParams{}.rng_seed,
      "Recolour `source` after `reference`; both (H, W, 3) uint8.");

  m.def(
      "gray_world",
      [](const Array<std::uint8_t>& img) {
        const BalanceResult r = gray_world(to_image(img));
        return py::make_tuple(from_image(r.image), r.degenerate);
      },
      py::arg("image"), "Returns (balanced image, degenerate flag).");

  m.def(
      "luminance_histogram",
      [](const Array<std::uint8_t>& img, const std::string& mode) {
        const Histogram h = luminance_histogram(to_image(img), parse_luminance_mode(mode));
        return std::vector<double>(h.begin(), h.end());
      },
      py::arg("image"), py::arg("mode") = "bt601");

  m.def(
      "chi_square",
      [](const Array<std::uint8_t>& a, const Array<std::uint8_t>& b, const std::string& mode) {
        return compare_images(to_image(a), to_image(b), parse_luminance_mode(mode)).chi2;
      },
      py::arg("a"), py::arg("b"), py::arg("mode") = "bt601", "Chi-square distance of 32-bin luminance histograms.");

  m.def("read_image", [](const std::string& path) { return from_image(read_image(path)); }, py::arg("path"));
  m.def(
      "write_image", [](const std::string& path, const Array<std::uint8_t>& img) { write_image(path, to_image(img)); },
      py::arg("path"), py::arg("image"));
  m.def("load_fmap", [](const std::string& path) { return from_fmap(load_fmap(path)); }, py::arg("path"));
  m.def(
      "save_fmap", [](const std::string& path, const Array<float>& f) { save_fmap(path, to_fmap(f)); },
      py::arg("path"), py::arg("fmap"));
}
