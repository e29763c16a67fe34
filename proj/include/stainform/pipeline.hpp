#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stainform/color.hpp"
#include "stainform/features.hpp"
#include "stainform/image.hpp"
#include "stainform/transfer.hpp"

namespace stainform {

inline constexpr int kHistogramBins = 32;
using Histogram = std::array<double, kHistogramBins>;

/// Normalised 32-bin histogram of 8-bit luminance.
Histogram luminance_histogram(const Image& image, LuminanceMode mode = LuminanceMode::kRec601);

/// sum (h - g)^2 / (h + g) over bins where h + g > 0; in [0, 2] for
/// normalised histograms.
double chi_square(const Histogram& h, const Histogram& g);

/// Bin-wise mean of the reference histograms.
Histogram pool_histogram(const std::vector<Histogram>& refs);

/// Index of the closest reference; ties go to the lowest index.
std::size_t select_reference(const Histogram& source, const std::vector<Histogram>& refs);

struct ImageStats {
  std::array<double, 3> mean{};  // [0,255]
  std::array<double, 3> std{};
};

ImageStats image_stats(const Image& image);

struct BalanceResult {
  Image image;
  bool degenerate = false;  // a channel mean was zero; image returned unchanged
};

/// Gray-world balance: channel c is scaled by mean(channel means) / mean_c.
BalanceResult gray_world(const Image& image);

struct JobConfig {
  std::vector<std::filesystem::path> sources;
  std::vector<std::filesystem::path> references;
  std::filesystem::path out_dir;

  FeatureConfig features;
  PatchMatchParams patchmatch;
  EnergyParams energy;
  GuidedFilterParams guided;

  /// Directory of <stem>.fmap files when features.source is external.
  std::filesystem::path fmap_dir;
  /// Directory of <stem>.png label maps when features.enhancement is segmap.
  std::filesystem::path segmap_dir;

  int threads = 1;
  bool dump_guidance = false;
  bool dump_ab = false;
  bool dump_nnf = false;

  /// Throws Error on a violated range.
  void validate() const;

  /// Applies `key = value` pairs; unknown keys and bad values throw.
  void apply(const std::map<std::string, std::string>& kv);
};

/// Parses a `key = value` config file (`#` starts a comment).
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);
std::map<std::string, std::string> parse_config(std::istream& in);

/// Files directly inside directories (sorted) plus plain file paths, in order.
std::vector<std::filesystem::path> expand_inputs(const std::vector<std::filesystem::path>& paths);

struct MetricsRow {
  std::string image;
  std::string reference;
  int reference_index = -1;
  double chi2_before = 0;
  double chi2_after = 0;
  ImageStats before;
  ImageStats after;
  TransferTimings timings;
  bool ok = false;
  std::string error;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;
  bool all_ok() const;
};

/// Column order of metrics.csv; stable across releases.
const std::vector<std::string>& metrics_columns();
void write_metrics_csv(std::ostream& out, const MetricsReport& report);
/// Per-stage wall-clock seconds, kept apart so metrics.csv stays reproducible.
void write_timings_csv(std::ostream& out, const MetricsReport& report);

struct Diagnostics {
  std::vector<std::string> messages;
};

/// Runs the full transfer over every source; writes <stem>.nct.png,
/// metrics.csv and timings.csv into out_dir.
MetricsReport run_transfer(const JobConfig& config, Diagnostics* diag = nullptr);

struct BalanceSummary {
  std::vector<std::filesystem::path> written;
  std::vector<std::string> warnings;
  std::vector<std::string> errors;
};

/// Writes <stem>.cb.png for every source.
BalanceSummary run_balance(const JobConfig& config);

/// CSV header + one row comparing two images.
struct PairMetrics {
  double chi2 = 0;
  ImageStats a;
  ImageStats b;
};
PairMetrics compare_images(const Image& a, const Image& b,
                           LuminanceMode mode = LuminanceMode::kRec601);
void write_pair_metrics_csv(std::ostream& out, const std::string& name_a,
                            const std::string& name_b, const PairMetrics& m);

}  // namespace stainform
