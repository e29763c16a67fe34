// Batch front end: transfer, balance, metrics.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <map>
#include <string>

#include "stainform/error.hpp"
#include "stainform/io.hpp"
#include "stainform/pipeline.hpp"

namespace {

using stainform::JobConfig;

int threads_from_env() {
  if (const char* env = std::getenv("STAINFORM_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring invalid STAINFORM_THREADS='" << env << "'\n";
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stainform: reference-based stain normalization"};
  app.require_subcommand(1);

  // transfer ---------------------------------------------------------------
  auto* transfer = app.add_subcommand("transfer", "Transfer reference colours onto source images");
  std::vector<std::string> sources, references;
  std::string out_dir, config_file;
  std::map<std::string, std::string> flags;
  auto flag = [&](CLI::App* sub, const std::string& name, const std::string& key,
                  const std::string& help) {
    sub->add_option_function<std::string>(
        name, [&flags, key](const std::string& v) { flags[key] = v; }, help);
  };

  transfer->add_option("--source", sources, "Source image or directory")->required();
  transfer->add_option("--reference", references, "Reference image(s), 1 to 3")
      ->required()
      ->expected(1, 3);
  transfer->add_option("--out", out_dir, "Output directory")->required();
  transfer->add_option("--config", config_file, "key = value configuration file");
  flag(transfer, "--layer", "layer", "Working layer 1..5");
  flag(transfer, "--features", "features", "builtin | fmap:<dir>");
  flag(transfer, "--enhance", "enhance", "none | cluster | segmap:<dir>");
  flag(transfer, "--cluster-k", "cluster_k", "Number of clusters");
  flag(transfer, "--lambda-l", "lambda_l", "Local smoothness weight");
  flag(transfer, "--lambda-nl", "lambda_nl", "Non-local smoothness weight");
  flag(transfer, "--preset", "preset", "paper | he");
  flag(transfer, "--luminance", "luminance", "bt601 | bt709");
  flag(transfer, "--patch-size", "patch_size", "PatchMatch patch size (odd)");
  flag(transfer, "--pm-iters", "pm_iters", "PatchMatch iterations");
  flag(transfer, "--seed", "seed", "Random seed (u64)");
  flag(transfer, "--threads", "threads", "Worker threads");
  bool dump_guidance = false, dump_ab = false, dump_nnf = false;
  transfer->add_flag("--dump-guidance", dump_guidance, "Write the guidance image");
  transfer->add_flag("--dump-ab", dump_ab, "Write a/b coefficient planes as FMAP");
  transfer->add_flag("--dump-nnf", dump_nnf, "Write both nearest-neighbour fields as FMAP");

  // balance ----------------------------------------------------------------
  auto* balance = app.add_subcommand("balance", "Gray-world colour balance");
  std::vector<std::string> balance_sources;
  std::string balance_out;
  balance->add_option("--source", balance_sources, "Source image or directory")->required();
  balance->add_option("--out", balance_out, "Output directory")->required();

  // metrics ----------------------------------------------------------------
  auto* metrics = app.add_subcommand("metrics", "Histogram distance and channel statistics");
  std::string image_a, image_b, metrics_lum = "bt601";
  metrics->add_option("a", image_a, "First image")->required();
  metrics->add_option("b", image_b, "Second image")->required();
  metrics->add_option("--luminance", metrics_lum, "bt601 | bt709");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*transfer) {
      JobConfig cfg;
      cfg.threads = threads_from_env();
      for (const auto& s : sources) cfg.sources.emplace_back(s);
      for (const auto& r : references) cfg.references.emplace_back(r);
      cfg.out_dir = out_dir;
      // Precedence: flag > config file > default.
      if (!config_file.empty()) cfg.apply(stainform::read_config_file(config_file));
      cfg.apply(flags);
      cfg.dump_guidance = cfg.dump_guidance || dump_guidance;
      cfg.dump_ab = cfg.dump_ab || dump_ab;
      cfg.dump_nnf = cfg.dump_nnf || dump_nnf;

      stainform::Diagnostics diag;
      const auto report = stainform::run_transfer(cfg, &diag);
      for (const auto& m : diag.messages) std::cerr << "error: " << m << '\n';
      std::cout << "processed " << report.rows.size() << " image(s), metrics in "
                << (cfg.out_dir / "metrics.csv").string() << '\n';
      return report.all_ok() ? 0 : 1;
    }
    if (*balance) {
      JobConfig cfg;
      for (const auto& s : balance_sources) cfg.sources.emplace_back(s);
      cfg.out_dir = balance_out;
      const auto summary = stainform::run_balance(cfg);
      for (const auto& w : summary.warnings) std::cerr << "warning: " << w << '\n';
      for (const auto& e : summary.errors) std::cerr << "error: " << e << '\n';
      std::cout << "wrote " << summary.written.size() << " image(s)\n";
      return summary.errors.empty() ? 0 : 1;
    }
    if (*metrics) {
      const auto mode = stainform::parse_luminance_mode(metrics_lum);
      const auto m = stainform::compare_images(stainform::read_image(image_a),
                                               stainform::read_image(image_b), mode);
      stainform::write_pair_metrics_csv(std::cout, image_a, image_b, m);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
