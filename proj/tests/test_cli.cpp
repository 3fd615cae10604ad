#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "ivp/cli.hpp"
#include "ivp/image_io.hpp"
#include "support.hpp"

using namespace ivp;

namespace {

struct CliRun {
  int code = -1;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "ivp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = cli_main(int(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

int lines(const std::string& s) { return int(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"compose", "--corpus"}).code, 1);
  EXPECT_EQ(run({"eval", "--corpus", "x", "--sweep", "sideways"}).code, 1);
}

TEST(Cli, HelpOnEverySubcommand) {
  const CliRun top = run({"--help"});
  EXPECT_EQ(top.code, 0);
  for (const char* sub : {"synth", "rectify", "heightmap", "tunnel", "compose", "pairs", "index", "retrieve", "eval", "serve"}) {
    EXPECT_NE(top.out.find(sub), std::string::npos) << sub;
    EXPECT_EQ(run({sub, "--help"}).code, 0) << sub;
  }
}

TEST(Cli, RuntimeErrorExitsTwo) {
  test::TempDir dir("cli_err");
  const CliRun r = run({"rectify", "--corpus", dir.path().string(), "--id", "nope", "--out", (dir / "x.png").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nope"), std::string::npos);
  EXPECT_EQ(lines(r.err), 1);
}

TEST(Cli, SynthEvalComposeRetrieve) {
  test::TempDir dir("cli");
  const std::string root = (dir / "corpus").string();
  ASSERT_EQ(run({"synth", "--out", root, "--n", "3", "--frames", "0,2", "--width", "128", "--height", "128"}).code, 0);

  const CliRun ev = run({"eval", "--corpus", root, "--dt", "2", "--methods", "paste2d,fill2d,paste3d,ours", "--policy",
                      "centered-disk"});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_EQ(lines(ev.out), 5);  // header + one row per method
  EXPECT_EQ(ev.out.rfind("method,dt,median,std,n", 0), 0u);

  const std::string out = (dir / "comp").string();
  const CliRun cp = run({"compose", "--corpus", root, "s0000_f00", "s0001_f00", "--out", out});
  ASSERT_EQ(cp.code, 0) << cp.err;
  const Image comp = to_float(read_png_rgb(dir / "comp" / "composite.png"));
  const Image filled = to_float(read_png_rgb(dir / "comp" / "filled.png"));
  const Mask mask = cv::imread((dir / "comp" / "mask.png").string(), cv::IMREAD_GRAYSCALE);
  ASSERT_GT(cv::countNonZero(mask), 0);
  EXPECT_GT(cv::norm(comp, filled, cv::NORM_L1), 0.0);
  EXPECT_TRUE(std::filesystem::exists(dir / "comp" / "provenance.png"));

  const CliRun rt = run({"retrieve", "--corpus", root, "--id", "s0002_f02", "--k", "2"});
  ASSERT_EQ(rt.code, 0) << rt.err;
  EXPECT_EQ(lines(rt.out), 3);
  EXPECT_NE(rt.out.find("s0002_f02"), std::string::npos);

  const CliRun pr = run({"pairs", "--corpus", root, "--out", (dir / "pairs").string()});
  ASSERT_EQ(pr.code, 0) << pr.err;
  for (const char* f : {"masked.png", "target.png", "mask.png"})
    EXPECT_TRUE(std::filesystem::exists(dir / "pairs" / "s0000_f00_0" / f)) << f;

  const CliRun ix = run({"index", "--corpus", root, "--out", (dir / "corpus.idx").string()});
  ASSERT_EQ(ix.code, 0) << ix.err;
  const CliRun rt2 = run({"retrieve", "--corpus", root, "--id", "s0000_f00", "--k", "1", "--json", "--index",
                       (dir / "corpus.idx").string()});
  ASSERT_EQ(rt2.code, 0) << rt2.err;
  EXPECT_NE(rt2.out.find("\"matches\""), std::string::npos);
}
