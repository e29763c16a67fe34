#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "stainform/error.hpp"
#include "stainform/io.hpp"
#include "stainform/pipeline.hpp"
#include "support.hpp"

namespace stainform {
namespace {

namespace fs = std::filesystem;
using testing::random_image;

Image solid(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(x, y, 0) = r;
      img.at(x, y, 1) = g;
      img.at(x, y, 2) = b;
    }
  return img;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string l;
  while (std::getline(ss, l)) out.push_back(l);
  return out;
}

// --- histograms ------------------------------------------------------------------

TEST(Histogram, MatchesDirectCount) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Image img = random_image(31, 17, seed);
    const Histogram h = luminance_histogram(img);
    const auto oracle = testing::naive_histogram(img);
    for (int i = 0; i < kHistogramBins; ++i) EXPECT_NEAR(h[i], oracle[i], 1e-12);
  }
}

TEST(Histogram, ShiftedPairDistance) {
  // Two images whose luminances sit in bins 4 and 5: disjoint support.
  const Image a = solid(8, 8, 40, 40, 40);
  const Image b = solid(8, 8, 45, 45, 45);
  const auto ha = testing::naive_histogram(a), hb = testing::naive_histogram(b);
  double oracle = 0;
  for (int i = 0; i < 32; ++i)
    if (ha[i] + hb[i] > 0) oracle += (ha[i] - hb[i]) * (ha[i] - hb[i]) / (ha[i] + hb[i]);
  EXPECT_NEAR(compare_images(a, b).chi2, oracle, 1e-12);
}

TEST(ChiSquare, Bounds) {
  const Image img = random_image(20, 20, 1);
  EXPECT_EQ(chi_square(luminance_histogram(img), luminance_histogram(img)), 0.0);
  EXPECT_DOUBLE_EQ(
      chi_square(luminance_histogram(solid(4, 4, 0, 0, 0)), luminance_histogram(solid(4, 4, 255, 255, 255))),
      2.0);
}

TEST(ReferenceSelection, ArgminWithLowestIndexTies) {
  const Histogram src = luminance_histogram(solid(4, 4, 100, 100, 100));
  const Histogram far = luminance_histogram(solid(4, 4, 250, 250, 250));
  const Histogram near = luminance_histogram(solid(4, 4, 101, 101, 101));
  EXPECT_EQ(select_reference(src, {far, near, far}), 1u);
  EXPECT_EQ(select_reference(src, {far, near, near}), 1u);
  EXPECT_EQ(select_reference(src, {far, far, far}), 0u);
  const Histogram pool = pool_histogram({far, near});
  EXPECT_DOUBLE_EQ(pool[31], 0.5);
  EXPECT_DOUBLE_EQ(pool[12], 0.5);
}

// --- gray world ------------------------------------------------------------------

TEST(GrayWorld, EqualisesKnownMeans) {
  const BalanceResult r = gray_world(solid(6, 6, 100, 120, 140));
  for (double m : image_stats(r.image).mean) EXPECT_NEAR(m, 120.0, 0.5);
  EXPECT_FALSE(r.degenerate);
}

TEST(GrayWorld, RandomImagesHaveEqualMeans) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Image out = gray_world(random_image(40, 30, seed)).image;
    const auto m = image_stats(out).mean;
    EXPECT_LE(std::max({m[0], m[1], m[2]}) - std::min({m[0], m[1], m[2]}), 0.5);
  }
}

TEST(GrayWorld, IdempotentAndNeutralOnGray) {
  const Image gray = solid(5, 5, 77, 77, 77);
  EXPECT_EQ(gray_world(gray).image, gray);
  const Image once = gray_world(random_image(30, 30, 9)).image;
  const Image twice = gray_world(once).image;
  for (std::size_t i = 0; i < once.data().size(); ++i)
    EXPECT_LE(std::abs(int(once.data()[i]) - int(twice.data()[i])), 1);
}

TEST(GrayWorld, ZeroChannelIsLeftAlone) {
  const Image img = solid(3, 3, 0, 50, 60);
  const BalanceResult r = gray_world(img);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.image, img);
}

// --- configuration ---------------------------------------------------------------

TEST(Config, ParsesKeyValueWithComments) {
  std::istringstream in("# comment\nlayer = 2\n\n  lambda_nl=0.5  # trailing\npreset = he\n");
  const auto kv = parse_config(in);
  EXPECT_EQ(kv.at("layer"), "2");
  EXPECT_EQ(kv.at("lambda_nl"), "0.5");
  JobConfig cfg;
  cfg.apply(kv);
  EXPECT_EQ(cfg.features.layer, 2);
  EXPECT_DOUBLE_EQ(cfg.energy.lambda_l, 0.125);
  EXPECT_DOUBLE_EQ(cfg.energy.lambda_nl, 0.5);  // explicit value beats the preset
}

TEST(Config, FlagsOverrideFile) {
  JobConfig cfg;
  cfg.apply({{"lambda_l", "0.3"}, {"patch_size", "5"}});
  cfg.apply({{"lambda_l", "0.7"}});
  EXPECT_DOUBLE_EQ(cfg.energy.lambda_l, 0.7);
  EXPECT_EQ(cfg.patchmatch.patch_size, 5);
  EXPECT_DOUBLE_EQ(cfg.energy.lambda_nl, 0.4);
}

TEST(Config, RejectsBadInput) {
  JobConfig cfg;
  EXPECT_THROW(cfg.apply({{"nonsense", "1"}}), Error);
  EXPECT_THROW(cfg.apply({{"layer", "abc"}}), Error);
  EXPECT_THROW(cfg.apply({{"layer", "9"}}), Error);
  EXPECT_THROW(cfg.apply({{"preset", "fast"}}), Error);
  EXPECT_THROW(cfg.apply({{"patch_size", "4"}}), Error);
  std::istringstream bad("no equals sign\n");
  EXPECT_THROW(parse_config(bad), Error);
  cfg = JobConfig{};
  cfg.out_dir = "x";
  cfg.references = {"a", "b", "c", "d"};
  EXPECT_THROW(cfg.validate(), Error);
  cfg.references.clear();
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Config, ExternalSourcesTakeDirectories) {
  JobConfig cfg;
  cfg.apply({{"features", "fmap:/tmp/f"}, {"enhance", "segmap:/tmp/s"}});
  EXPECT_EQ(cfg.features.source, FeatureSource::kExternalFmap);
  EXPECT_EQ(cfg.fmap_dir, fs::path("/tmp/f"));
  EXPECT_EQ(cfg.features.enhancement, Enhancement::kSegmap);
  EXPECT_EQ(cfg.segmap_dir, fs::path("/tmp/s"));
}

// --- batch runs --------------------------------------------------------------------

struct Batch {
  fs::path dir, src_dir, ref;
};

Batch make_batch(const std::string& name) {
  Batch b;
  b.dir = testing::temp_dir(name);
  b.src_dir = b.dir / "src";
  fs::create_directories(b.src_dir);
  write_png(b.src_dir / "a.png", testing::synthetic_smear(48, 48, testing::light_stain(), 1));
  write_png(b.src_dir / "b.png", testing::synthetic_smear(48, 48, testing::light_stain(), 2));
  b.ref = b.dir / "ref.png";
  write_png(b.ref, testing::synthetic_smear(48, 48, testing::dark_stain(), 5));
  return b;
}

TEST(RunTransfer, BatchImprovesHistogramDistance) {
  const Batch b = make_batch("batch");
  JobConfig cfg;
  cfg.sources = {b.src_dir};
  cfg.references = {b.ref};
  cfg.out_dir = b.dir / "out";
  const MetricsReport rep = run_transfer(cfg);
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_TRUE(rep.all_ok());
  EXPECT_EQ(rep.rows[0].image, "a.png");
  for (const auto& r : rep.rows) EXPECT_LT(r.chi2_after, r.chi2_before);
  EXPECT_TRUE(fs::exists(cfg.out_dir / "a.nct.png"));
  EXPECT_TRUE(fs::exists(cfg.out_dir / "timings.csv"));
  const auto lines = lines_of(slurp(cfg.out_dir / "metrics.csv"));
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(split_line(lines[0]), metrics_columns());
  EXPECT_EQ(split_line(lines[1]).size(), metrics_columns().size());
}

TEST(RunTransfer, IdentityReference) {
  const fs::path dir = testing::temp_dir("identity");
  const Image img = testing::synthetic_scene(0, 40, 40);
  write_png(dir / "s.png", img);
  JobConfig cfg;
  cfg.sources = {dir / "s.png"};
  cfg.references = {dir / "s.png"};
  cfg.out_dir = dir / "out";
  const MetricsReport rep = run_transfer(cfg);
  ASSERT_TRUE(rep.all_ok());
  EXPECT_EQ(rep.rows[0].chi2_before, 0.0);
  EXPECT_LE(rep.rows[0].chi2_after, 1e-2);
  const Image out = read_png(cfg.out_dir / "s.nct.png");
  for (std::size_t i = 0; i < img.data().size(); ++i)
    EXPECT_LE(std::abs(int(out.data()[i]) - int(img.data()[i])), 2);
}

TEST(RunTransfer, PicksClosestReferenceAndDumps) {
  const fs::path dir = testing::temp_dir("pick");
  write_png(dir / "s.png", solid(16, 16, 200, 180, 190));
  write_png(dir / "r0.png", solid(16, 16, 20, 20, 20));
  write_png(dir / "r1.png", solid(16, 16, 190, 185, 200));
  write_png(dir / "r2.png", solid(16, 16, 190, 185, 200));
  JobConfig cfg;
  cfg.sources = {dir / "s.png"};
  cfg.references = {dir / "r0.png", dir / "r1.png", dir / "r2.png"};
  cfg.out_dir = dir / "out";
  cfg.dump_guidance = cfg.dump_ab = cfg.dump_nnf = true;
  const MetricsReport rep = run_transfer(cfg);
  ASSERT_TRUE(rep.all_ok()) << rep.rows[0].error;
  EXPECT_EQ(rep.rows[0].reference_index, 1);
  for (const char* f : {"s.guidance.png", "s.ab.fmap", "s.ab_layer.fmap", "s.nnf_fwd.fmap", "s.nnf_bwd.fmap"})
    EXPECT_TRUE(fs::exists(cfg.out_dir / f)) << f;
  EXPECT_EQ(load_fmap(cfg.out_dir / "s.ab.fmap").channels(), 6);
}

TEST(RunTransfer, BadFileIsRecordedAndBatchContinues) {
  const Batch b = make_batch("badfile");
  { std::ofstream(b.src_dir / "broken.png") << "not a png"; }
  JobConfig cfg;
  cfg.sources = {b.src_dir};
  cfg.references = {b.ref};
  cfg.out_dir = b.dir / "out";
  Diagnostics diag;
  const MetricsReport rep = run_transfer(cfg, &diag);
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_FALSE(rep.all_ok());
  EXPECT_TRUE(rep.rows[0].ok);
  EXPECT_TRUE(rep.rows[1].ok);
  EXPECT_FALSE(rep.rows[2].ok);
  EXPECT_EQ(diag.messages.size(), 1u);
  EXPECT_TRUE(fs::exists(cfg.out_dir / "b.nct.png"));
}

TEST(RunTransfer, ParallelBatchMatchesSequential) {
  const Batch b = make_batch("parallel");
  JobConfig cfg;
  cfg.sources = {b.src_dir};
  cfg.references = {b.ref};
  cfg.out_dir = b.dir / "seq";
  run_transfer(cfg);
  cfg.out_dir = b.dir / "par";
  cfg.threads = 2;
  run_transfer(cfg);
  EXPECT_EQ(slurp(b.dir / "seq" / "metrics.csv"), slurp(b.dir / "par" / "metrics.csv"));
  EXPECT_EQ(slurp(b.dir / "seq" / "a.nct.png"), slurp(b.dir / "par" / "a.nct.png"));
}

TEST(RunBalance, WritesAndWarns) {
  const fs::path dir = testing::temp_dir("balance");
  write_png(dir / "x.png", random_image(10, 10, 3));
  write_png(dir / "k.png", solid(4, 4, 0, 0, 0));
  JobConfig cfg;
  cfg.sources = {dir / "x.png", dir / "k.png", dir / "missing.png"};
  cfg.out_dir = dir / "out";
  const BalanceSummary s = run_balance(cfg);
  EXPECT_EQ(s.written.size(), 2u);
  EXPECT_EQ(s.warnings.size(), 1u);
  EXPECT_EQ(s.errors.size(), 1u);
  EXPECT_TRUE(fs::exists(cfg.out_dir / "x.cb.png"));
}

// --- command line ------------------------------------------------------------------

int run_cli(const std::string& args, const fs::path& capture) {
  const std::string cmd = std::string(STAINFORM_CLI) + " " + args + " > " + capture.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

TEST(Cli, MetricsPrintsOneRow) {
  const fs::path dir = testing::temp_dir("cli_metrics");
  write_png(dir / "a.png", solid(4, 4, 0, 0, 0));
  write_png(dir / "b.png", solid(4, 4, 255, 255, 255));
  ASSERT_EQ(run_cli("metrics " + (dir / "a.png").string() + " " + (dir / "b.png").string(),
                    dir / "out.txt"),
            0);
  const auto lines = lines_of(slurp(dir / "out.txt"));
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(split_line(lines[1])[2], "2");
  EXPECT_NE(run_cli("metrics " + (dir / "nope.png").string() + " " + (dir / "b.png").string(),
                    dir / "err.txt"),
            0);
}

TEST(Cli, TransferConfigAndFlags) {
  const Batch b = make_batch("cli_transfer");
  { std::ofstream(b.dir / "job.cfg") << "layer = 2\npm_iters = 3\n"; }
  const std::string base = "transfer --source " + b.src_dir.string() + " --reference " +
                           b.ref.string() + " --config " + (b.dir / "job.cfg").string();
  ASSERT_EQ(run_cli(base + " --out " + (b.dir / "o1").string() + " --layer 1", b.dir / "log1"), 0)
      << slurp(b.dir / "log1");
  EXPECT_TRUE(fs::exists(b.dir / "o1" / "a.nct.png"));
  EXPECT_NE(run_cli(base + " --out " + (b.dir / "o2").string() + " --layer 7", b.dir / "log2"), 0);
  EXPECT_NE(run_cli("transfer --source x --out y", b.dir / "log3"), 0);
}

TEST(Cli, BalanceCommand) {
  const fs::path dir = testing::temp_dir("cli_balance");
  write_png(dir / "x.png", random_image(10, 10, 3));
  ASSERT_EQ(run_cli("balance --source " + dir.string() + " --out " + (dir / "o").string(), dir / "log"), 0);
  EXPECT_TRUE(fs::exists(dir / "o" / "x.cb.png"));
}

}  // namespace
}  // namespace stainform
