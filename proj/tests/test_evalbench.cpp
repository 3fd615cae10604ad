#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <opencv2/imgproc.hpp>

#include "ivp/error.hpp"
#include "ivp/evalbench.hpp"
#include "support.hpp"

using namespace ivp;

namespace {

Image noise_image(int w, int h, std::uint64_t seed) {
  Image img(h, w);
  cv::RNG rng(seed);
  rng.fill(img, cv::RNG::UNIFORM, 0.0, 1.0);
  return img;
}

Mask full(int w, int h) { return Mask(h, w, uchar(255)); }

CorpusOptions small_options(int n, std::vector<int> frames) {
  CorpusOptions o;
  o.seed = 17;
  o.n_scenes = n;
  o.width = 128;
  o.height = 128;
  o.focal = 48.0;
  o.sequence_frames = std::move(frames);
  return o;
}

}  // namespace

TEST(Ncc, TrivialValues) {
  const Image a = noise_image(32, 24, 1);
  const Mask m = full(32, 24);
  EXPECT_NEAR(ncc(a, a, m), 1.0, 1e-12);
  cv::Scalar mean = cv::mean(a);
  Image neg = 2.0 * cv::Mat(a.size(), a.type(), mean) - a;
  EXPECT_NEAR(ncc(a, neg, m), -1.0, 1e-9);
  EXPECT_EQ(ncc(a, Image(24, 32, cv::Vec3f(0.3f, 0.3f, 0.3f)), m), 0.0);
}

TEST(Ncc, MatchesReference) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Image a = noise_image(40, 30, s), b = noise_image(40, 30, s + 100);
    Mask m(30, 40, uchar(0));
    cv::circle(m, {20, 15}, 10, 255, -1);
    EXPECT_NEAR(ncc(a, b, m), test::reference_ncc(a, b, m), 1e-9);
  }
}

TEST(Ncc, SymmetricBoundedAffineInvariant) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> gain(0.1, 5.0), bias(-2.0, 2.0);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Image a = noise_image(24, 24, s);
    Image b = 0.5 * a + 0.5 * noise_image(24, 24, s + 50);
    const Mask m = full(24, 24);
    const double e = ncc(a, b, m);
    EXPECT_NEAR(e, ncc(b, a, m), 1e-12);
    EXPECT_GE(e, -1.0);
    EXPECT_LE(e, 1.0);
    // Per-channel gain and offset.
    std::vector<cv::Mat> ch;
    cv::split(b, ch);
    for (auto& c : ch) c = c * gain(rng) + bias(rng);
    Image b2;
    cv::merge(ch, b2);
    EXPECT_NEAR(ncc(a, b2, m), e, 1e-5);
  }
}

TEST(Ncc, Errors) {
  const Image a = noise_image(8, 8, 1);
  Mask m(8, 8, uchar(0));
  EXPECT_THROW(ncc(a, a, m), Error);
  m(3, 3) = 255;
  EXPECT_THROW(ncc(a, a, m), Error);
  EXPECT_THROW(ncc(a, noise_image(9, 8, 1), full(8, 8)), Error);
}

TEST(Masks, DiskAndRangeFractions) {
  const TrialMask d = disk_mask(128, 128, 0.3);
  EXPECT_NEAR(d.fraction, 0.3, 0.01);
  EXPECT_EQ(d.mask(64, 64), 255);
  EXPECT_EQ(d.mask(0, 0), 0);

  CorpusOptions o;
  const SceneBundle b = render_scene(random_scene_spec(4, TurnClass::kStraight, o), 0);
  const TrialMask r = range_mask(b, 0.65);
  EXPECT_LE(r.fraction, 0.65 + 1e-12);
  EXPECT_GT(r.fraction, 0.3);
  // Everything masked is farther than e^R on the ground.
  const cv::Mat1d range = ground_range(b);
  for (int y = 0; y < range.rows; ++y)
    for (int x = 0; x < range.cols; ++x)
      if (r.mask(y, x)) ASSERT_GT(range(y, x), std::exp(r.R));
  EXPECT_THROW(range_mask(b, 0.0), Error);
  EXPECT_THROW(disk_mask(10, 10, 1.0), Error);
}

TEST(Reconstruct, SameFramePasteIsPerfect) {
  CorpusOptions o;
  const SceneBundle b = render_scene(random_scene_spec(6, TurnClass::kLeft, o), 0);
  const Mask m = disk_mask(b.rgb.cols, b.rgb.rows, 0.4).mask;
  const Image r = reconstruct(Method::kPaste2d, b, b, m);
  EXPECT_NEAR(ncc(r, b.rgb_float(), m), 1.0, 1e-9);
}

TEST(Reconstruct, StaticCameraPasteIsPerfect) {
  // Two renders of the same frame: the camera did not move.
  CorpusOptions o;
  const SceneSpec s = random_scene_spec(7, TurnClass::kRight, o);
  const SceneBundle a = render_scene(s, 2), b = render_scene(s, 2);
  const Mask m = make_mask(MaskPolicy::kTunnelBand, a, 0.65).mask;
  EXPECT_NEAR(ncc(reconstruct(Method::kPaste2d, a, b, m), a.rgb_float(), m), 1.0, 1e-9);
}

TEST(Reconstruct, KnownPixelsUntouchedForEveryMethod) {
  CorpusOptions o;
  SceneSpec s = random_scene_spec(8, TurnClass::kStraight, o);
  s.width = s.height = 128;
  s.focal = 48.0;
  const SceneBundle a = render_scene(s, 0), b = render_scene(s, 4);
  const Mask m = make_mask(MaskPolicy::kTunnelBand, a, 0.65).mask;
  const Image present = a.rgb_float();
  for (const Method meth : kAllMethods) {
    const Image r = reconstruct(meth, a, b, m);
    cv::Mat diff;
    // Outside the mask the reconstruction is the present image.
    Image outside = r.clone();
    present.copyTo(outside, m);
    cv::absdiff(outside, present, diff);
    EXPECT_EQ(cv::norm(diff, cv::NORM_INF), 0.0) << to_string(meth);
  }
}

TEST(Sweep, OneMethodOneOffsetTenScenes) {
  test::TempDir dir("sweep");
  make_corpus(dir.path(), small_options(10, {0, 2}));
  const EvalCorpus c = load_eval_corpus(dir.path());
  ASSERT_EQ(c.sequences.size(), 10u);
  EvalConfig cfg;
  cfg.methods = {Method::kPaste2d};
  cfg.dts = {2};
  cfg.policy = MaskPolicy::kCenteredDisk;
  const SweepReport r = run_sweep(c, cfg);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].n, 10);
  EXPECT_EQ(r.param_name, "dt");

  // Deterministic.
  const SweepReport again = run_sweep(c, cfg);
  EXPECT_EQ(again.rows[0].median, r.rows[0].median);
  EXPECT_EQ(again.rows[0].stddev, r.rows[0].stddev);

  // Missing offset: every trial skipped, so no rows.
  cfg.dts = {6};
  EXPECT_THROW(run_sweep(c, cfg), Error);
}

TEST(Sweep, MissingDataRowsAndCsv) {
  test::TempDir dir("missing");
  make_corpus(dir.path(), small_options(3, {0, 4}));
  const EvalCorpus c = load_eval_corpus(dir.path());
  EvalConfig cfg;
  cfg.methods = {Method::kPaste2d, Method::kFill2d};
  cfg.fractions = {0.05, 0.2};
  const SweepReport r = missing_data_sweep(c, cfg);
  EXPECT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(r.param_name, "fraction");
  for (const auto& row : r.rows) EXPECT_EQ(row.n, 3);

  const std::string csv = to_csv(r);
  std::istringstream ss(csv);
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "method,fraction,median,std,n");
  int rows = 0;
  while (std::getline(ss, line)) ++rows;
  EXPECT_EQ(rows, 4);
  write_csv(r, dir / "out.csv");
  EXPECT_TRUE(std::filesystem::exists(dir / "out.csv"));
  EXPECT_NE(format_table(r).find("fill2d"), std::string::npos);

  cfg.fractions.clear();
  EXPECT_THROW(missing_data_sweep(c, cfg), Error);
}

TEST(Report, CellFormat) {
  EXPECT_EQ(format_cell(0.55, 0.19), "0.55(0.19)");
  EXPECT_EQ(format_cell(0.5549, 0.191), "0.55(0.19)");
  EXPECT_EQ(format_cell(1.0, 0.0), "1.00(0.00)");
}

TEST(Config, Validation) {
  EvalConfig c;
  EXPECT_NO_THROW(c.validate());
  c.fractions = {0.0};
  EXPECT_THROW(c.validate(), Error);
  c = EvalConfig{};
  c.methods.clear();
  EXPECT_THROW(c.validate(), Error);
  EXPECT_EQ(parse_methods("paste2d,ours").size(), 2u);
  EXPECT_EQ(parse_methods("all").size(), 6u);
  EXPECT_THROW(parse_methods("bogus"), Error);
  for (const Method m : kAllMethods) EXPECT_EQ(method_from_string(to_string(m)), m);
}
