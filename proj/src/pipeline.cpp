#include "stainform/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "stainform/error.hpp"
#include "stainform/io.hpp"

namespace stainform {

Histogram luminance_histogram(const Image& image, LuminanceMode mode) {
  Histogram h{};
  auto px = image.data();
  const std::size_t n = image.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    const double l = luminance(px[3 * i], px[3 * i + 1], px[3 * i + 2], mode);
    const int bin = std::clamp(static_cast<int>(l * kHistogramBins / 256.0), 0, kHistogramBins - 1);
    h[bin] += 1.0;
  }
  for (double& v : h) v /= static_cast<double>(n);
  return h;
}

double chi_square(const Histogram& h, const Histogram& g) {
  double d = 0.0;
  for (int i = 0; i < kHistogramBins; ++i) {
    const double s = h[i] + g[i];
    if (s > 0.0) d += (h[i] - g[i]) * (h[i] - g[i]) / s;
  }
  return d;
}

Histogram pool_histogram(const std::vector<Histogram>& refs) {
  if (refs.empty()) throw Error("reference pool is empty");
  Histogram out{};
  for (const auto& r : refs)
    for (int i = 0; i < kHistogramBins; ++i) out[i] += r[i];
  for (double& v : out) v /= static_cast<double>(refs.size());
  return out;
}

std::size_t select_reference(const Histogram& source, const std::vector<Histogram>& refs) {
  if (refs.empty()) throw Error("reference pool is empty");
  std::size_t best = 0;
  double best_d = chi_square(source, refs[0]);
  for (std::size_t i = 1; i < refs.size(); ++i) {
    const double d = chi_square(source, refs[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

ImageStats image_stats(const Image& image) {
  ImageStats st;
  auto px = image.data();
  const std::size_t n = image.pixel_count();
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += px[3 * i + c];
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (px[3 * i + c] - mean) * (px[3 * i + c] - mean);
    st.mean[c] = mean;
    st.std[c] = std::sqrt(ss / static_cast<double>(n));
  }
  return st;
}

BalanceResult gray_world(const Image& image) {
  const ImageStats st = image_stats(image);
  if (st.mean[0] <= 0.0 || st.mean[1] <= 0.0 || st.mean[2] <= 0.0) return {image, true};
  const double gray = (st.mean[0] + st.mean[1] + st.mean[2]) / 3.0;
  const double gain[3] = {gray / st.mean[0], gray / st.mean[1], gray / st.mean[2]};
  Image out(image.width(), image.height());
  auto src = image.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double v = std::floor(src[i] * gain[i % 3] + 0.5);
    dst[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return {std::move(out), false};
}

// ---------------------------------------------------------------------------
// Configuration

void JobConfig::validate() const {
  if (references.empty() || references.size() > 3)
    throw Error("between 1 and 3 reference images are required, got " +
                std::to_string(references.size()));
  if (out_dir.empty()) throw Error("an output directory is required");
  if (threads < 1) throw Error("threads must be >= 1");
  features.validate();
  patchmatch.validate();
  energy.validate();
  guided.validate();
  if (features.source == FeatureSource::kExternalFmap && fmap_dir.empty())
    throw Error("external features need a feature-map directory");
  if (features.enhancement == Enhancement::kSegmap && segmap_dir.empty())
    throw Error("segmentation enhancement needs a label-map directory");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last)
    throw Error("config key '" + key + "': cannot parse '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw Error("config key '" + key + "': expected a boolean, got '" + value + "'");
}

}  // namespace

std::map<std::string, std::string> parse_config(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw Error("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return kv;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  return parse_config(in);
}

void JobConfig::apply(const std::map<std::string, std::string>& kv) {
  // A preset is a starting point; explicit lambdas in the same set win.
  if (auto it = kv.find("preset"); it != kv.end()) {
    if (it->second == "paper") {
      energy.lambda_l = EnergyParams::paper_preset().lambda_l;
      energy.lambda_nl = EnergyParams::paper_preset().lambda_nl;
    } else if (it->second == "he") {
      energy.lambda_l = EnergyParams::he_preset().lambda_l;
      energy.lambda_nl = EnergyParams::he_preset().lambda_nl;
    } else {
      throw Error("config key 'preset': expected paper or he");
    }
  }
  for (const auto& [key, value] : kv) {
    if (key == "preset") {
      continue;
    } else if (key == "layer") {
      features.layer = parse_number<int>(key, value);
    } else if (key == "features") {
      if (value == "builtin") {
        features.source = FeatureSource::kBuiltin;
      } else if (value.rfind("fmap:", 0) == 0) {
        features.source = FeatureSource::kExternalFmap;
        fmap_dir = value.substr(5);
      } else {
        throw Error("config key 'features': expected builtin or fmap:<dir>");
      }
    } else if (key == "enhance") {
      if (value == "none") {
        features.enhancement = Enhancement::kNone;
      } else if (value == "cluster") {
        features.enhancement = Enhancement::kCluster;
      } else if (value.rfind("segmap:", 0) == 0) {
        features.enhancement = Enhancement::kSegmap;
        segmap_dir = value.substr(7);
      } else {
        throw Error("config key 'enhance': expected none, cluster or segmap:<dir>");
      }
    } else if (key == "cluster_k") {
      features.cluster_k = parse_number<int>(key, value);
    } else if (key == "enhancement_weight") {
      features.enhancement_weight = parse_number<float>(key, value);
    } else if (key == "lambda_l") {
      energy.lambda_l = parse_number<double>(key, value);
    } else if (key == "lambda_nl") {
      energy.lambda_nl = parse_number<double>(key, value);
    } else if (key == "wls_alpha") {
      energy.wls_alpha = parse_number<double>(key, value);
    } else if (key == "wls_eps") {
      energy.wls_eps = parse_number<double>(key, value);
    } else if (key == "nl_neighbors") {
      energy.nl_neighbors = parse_number<int>(key, value);
    } else if (key == "cg_tol") {
      energy.cg_tol = parse_number<double>(key, value);
    } else if (key == "cg_max_iter") {
      energy.cg_max_iter = parse_number<int>(key, value);
    } else if (key == "luminance") {
      features.luminance = energy.luminance = parse_luminance_mode(value);
    } else if (key == "patch_size") {
      patchmatch.patch_size = parse_number<int>(key, value);
    } else if (key == "pm_iters") {
      patchmatch.iterations = parse_number<int>(key, value);
    } else if (key == "search_radius_decay") {
      patchmatch.search_radius_decay = parse_number<double>(key, value);
    } else if (key == "gf_radius") {
      guided.radius = parse_number<int>(key, value);
    } else if (key == "gf_eps") {
      guided.eps = parse_number<double>(key, value);
    } else if (key == "gf_subsample") {
      guided.subsample = parse_number<int>(key, value);
    } else if (key == "seed") {
      const auto seed = parse_number<std::uint64_t>(key, value);
      patchmatch.rng_seed = seed;
      features.seed = seed ^ 0x5eedULL;
      energy.nl_seed = seed ^ 0x4e4cULL;
    } else if (key == "threads") {
      threads = parse_number<int>(key, value);
    } else if (key == "dump_guidance") {
      dump_guidance = parse_bool(key, value);
    } else if (key == "dump_ab") {
      dump_ab = parse_bool(key, value);
    } else if (key == "dump_nnf") {
      dump_nnf = parse_bool(key, value);
    } else {
      throw Error("unknown config key '" + key + "'");
    }
  }
  if (threads < 1) throw Error("threads must be >= 1");
  features.validate();
  patchmatch.validate();
  energy.validate();
  guided.validate();
}

std::vector<std::filesystem::path> expand_inputs(const std::vector<std::filesystem::path>& paths) {
  std::vector<std::filesystem::path> out;
  for (const auto& p : paths) {
    if (std::filesystem::is_directory(p)) {
      std::vector<std::filesystem::path> entries;
      for (const auto& e : std::filesystem::directory_iterator(p))
        if (e.is_regular_file() && is_image_path(e.path())) entries.push_back(e.path());
      std::sort(entries.begin(), entries.end());
      out.insert(out.end(), entries.begin(), entries.end());
    } else {
      out.push_back(p);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

bool MetricsReport::all_ok() const {
  return std::all_of(rows.begin(), rows.end(), [](const MetricsRow& r) { return r.ok; });
}

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols = {
      "image",        "reference",    "reference_index", "status",       "chi2_before",
      "chi2_after",   "mean_r_before", "mean_g_before",  "mean_b_before", "std_r_before",
      "std_g_before", "std_b_before", "mean_r_after",    "mean_g_after", "mean_b_after",
      "std_r_after",  "std_g_after",  "std_b_after",     "error"};
  return cols;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

void write_header(std::ostream& out, const std::vector<std::string>& cols) {
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
}

}  // namespace

void write_metrics_csv(std::ostream& out, const MetricsReport& report) {
  out.imbue(std::locale::classic());
  write_header(out, metrics_columns());
  out << std::setprecision(8);
  for (const auto& r : report.rows) {
    out << csv_field(r.image) << ',' << csv_field(r.reference) << ',' << r.reference_index << ','
        << (r.ok ? "ok" : "error") << ',' << r.chi2_before << ',' << r.chi2_after;
    for (const ImageStats* st : {&r.before, &r.after}) {
      for (double v : st->mean) out << ',' << v;
      for (double v : st->std) out << ',' << v;
    }
    out << ',' << csv_field(r.error) << '\n';
  }
}

void write_timings_csv(std::ostream& out, const MetricsReport& report) {
  out.imbue(std::locale::classic());
  write_header(out, {"image", "features_s", "patchmatch_s", "vote_s", "solve_s", "upscale_s", "total_s"});
  out << std::fixed << std::setprecision(4);
  for (const auto& r : report.rows) {
    const auto& t = r.timings;
    out << csv_field(r.image) << ',' << t.features << ',' << t.patchmatch << ',' << t.vote << ','
        << t.solve << ',' << t.upscale << ',' << t.total << '\n';
  }
}

PairMetrics compare_images(const Image& a, const Image& b, LuminanceMode mode) {
  return {chi_square(luminance_histogram(a, mode), luminance_histogram(b, mode)), image_stats(a),
          image_stats(b)};
}

void write_pair_metrics_csv(std::ostream& out, const std::string& name_a, const std::string& name_b,
                            const PairMetrics& m) {
  out.imbue(std::locale::classic());
  write_header(out, {"image_a", "image_b", "chi2", "mean_r_a", "mean_g_a", "mean_b_a", "std_r_a",
                     "std_g_a", "std_b_a", "mean_r_b", "mean_g_b", "mean_b_b", "std_r_b", "std_g_b",
                     "std_b_b"});
  out << std::setprecision(8) << csv_field(name_a) << ',' << csv_field(name_b) << ',' << m.chi2;
  for (const ImageStats* st : {&m.a, &m.b}) {
    for (double v : st->mean) out << ',' << v;
    for (double v : st->std) out << ',' << v;
  }
  out << '\n';
}

// ---------------------------------------------------------------------------
// Batch commands

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers pulling indices in order.
template <typename Fn>
void run_batch(std::size_t n, int threads, Fn&& fn) {
  const int workers = static_cast<int>(std::min<std::size_t>(std::max(threads, 1), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

std::filesystem::path sibling_file(const std::filesystem::path& dir, const std::filesystem::path& image,
                                   const char* ext) {
  return dir / (image.stem().string() + ext);
}

}  // namespace

MetricsReport run_transfer(const JobConfig& config, Diagnostics* diag) {
  config.validate();
  std::filesystem::create_directories(config.out_dir);
  const auto sources = expand_inputs(config.sources);
  const auto refs_paths = expand_inputs(config.references);
  if (refs_paths.empty() || refs_paths.size() > 3)
    throw Error("between 1 and 3 reference images are required, got " +
                std::to_string(refs_paths.size()));

  const LuminanceMode mode = config.features.luminance;
  std::vector<Image> refs;
  std::vector<Histogram> ref_hists;
  for (const auto& p : refs_paths) {
    refs.push_back(read_image(p));
    ref_hists.push_back(luminance_histogram(refs.back(), mode));
  }
  const Histogram pool = pool_histogram(ref_hists);

  // External inputs that belong to the references are loaded once.
  std::vector<FeatureMap> ref_fmaps;
  std::vector<LabelMap> ref_labels;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (config.features.source == FeatureSource::kExternalFmap)
      ref_fmaps.push_back(load_fmap(sibling_file(config.fmap_dir, refs_paths[i], ".fmap")));
    if (config.features.enhancement == Enhancement::kSegmap)
      ref_labels.push_back(load_label_map(sibling_file(config.segmap_dir, refs_paths[i], ".png"),
                                          refs[i].width(), refs[i].height()));
  }

  MetricsReport report;
  report.rows.resize(sources.size());
  std::mutex diag_mutex;

  // Batch-level threads go to independent images; a single image gets them
  // for its own stages instead.
  const bool batch_parallel = sources.size() > 1;
  PatchMatchParams pm = config.patchmatch;
  EnergyParams ep = config.energy;
  if (!batch_parallel) pm.threads = ep.threads = config.threads;

  run_batch(sources.size(), batch_parallel ? config.threads : 1, [&](std::size_t i) {
    MetricsRow& row = report.rows[i];
    const auto& path = sources[i];
    row.image = path.filename().string();
    try {
      const Image src = read_image(path);
      const Histogram h_src = luminance_histogram(src, mode);
      const std::size_t ri = select_reference(h_src, ref_hists);
      row.reference_index = static_cast<int>(ri);
      row.reference = refs_paths[ri].filename().string();

      TransferExtras extras;
      FeatureMap src_fmap;
      LabelMap src_labels;
      if (config.features.source == FeatureSource::kExternalFmap) {
        src_fmap = load_fmap(sibling_file(config.fmap_dir, path, ".fmap"));
        extras.src_features = &src_fmap;
        extras.ref_features = &ref_fmaps[ri];
      }
      if (config.features.enhancement == Enhancement::kSegmap) {
        src_labels = load_label_map(sibling_file(config.segmap_dir, path, ".png"), src.width(),
                                    src.height());
        extras.src_labels = &src_labels;
        extras.ref_labels = &ref_labels[ri];
      }

      const Image out = transfer_single_layer(src, refs[ri], config.features, pm, ep,
                                              config.guided, &extras);
      const std::string stem = path.stem().string();
      write_png(config.out_dir / (stem + ".nct.png"), out);
      if (config.dump_guidance) write_png(config.out_dir / (stem + ".guidance.png"), to_8bit(extras.guidance));
      if (config.dump_ab) {
        save_fmap(config.out_dir / (stem + ".ab_layer.fmap"), extras.ab_layer.to_fmap());
        save_fmap(config.out_dir / (stem + ".ab.fmap"), extras.ab_full.to_fmap());
      }
      if (config.dump_nnf) {
        save_fmap(config.out_dir / (stem + ".nnf_fwd.fmap"), nnf_to_fmap(extras.forward));
        save_fmap(config.out_dir / (stem + ".nnf_bwd.fmap"), nnf_to_fmap(extras.backward));
      }

      row.chi2_before = chi_square(h_src, pool);
      row.chi2_after = chi_square(luminance_histogram(out, mode), pool);
      row.before = image_stats(src);
      row.after = image_stats(out);
      row.timings = extras.timings;
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
      if (diag) {
        std::lock_guard lock(diag_mutex);
        diag->messages.push_back(path.string() + ": " + e.what());
      }
    }
  });

  {
    std::ofstream csv(config.out_dir / "metrics.csv");
    write_metrics_csv(csv, report);
  }
  {
    std::ofstream csv(config.out_dir / "timings.csv");
    write_timings_csv(csv, report);
  }
  return report;
}

BalanceSummary run_balance(const JobConfig& config) {
  if (config.out_dir.empty()) throw Error("an output directory is required");
  std::filesystem::create_directories(config.out_dir);
  BalanceSummary summary;
  for (const auto& path : expand_inputs(config.sources)) {
    try {
      const BalanceResult r = gray_world(read_image(path));
      if (r.degenerate)
        summary.warnings.push_back(path.string() + ": a channel mean is zero; copied unchanged");
      const auto out = config.out_dir / (path.stem().string() + ".cb.png");
      write_png(out, r.image);
      summary.written.push_back(out);
    } catch (const std::exception& e) {
      summary.errors.push_back(path.string() + ": " + e.what());
    }
  }
  return summary;
}

}  // namespace stainform
