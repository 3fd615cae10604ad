#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "ivp/compose.hpp"
#include "ivp/egomap.hpp"
#include "ivp/error.hpp"
#include "ivp/synthgen.hpp"
#include "support.hpp"

using namespace ivp;

namespace {

HeightMap flat_map() {
  HeightMap m;
  m.spec.r_min = std::log(0.1);
  m.spec.r_max = std::log(50.0);
  m.spec.theta_max = std::numbers::pi;
  m.spec.n_r = 64;
  m.spec.n_theta = 64;
  m.cells = cv::Mat1f(64, 64, 0.0f);
  return m;
}

ActionTunnel along_y(const std::vector<double>& ranges, double x_offset = 0.0) {
  std::vector<Vec2> pts;
  for (double r : ranges) pts.emplace_back(x_offset, std::exp(r));
  return build_sections(flat_map(), Trajectory::from_ground_points(pts), GroundFrame{}, TunnelParams{});
}

struct Scene {
  SceneBundle bundle;
  ActionTunnel tunnel;
};

const Scene& corridor() {
  static const Scene s = [] {
    Scene out;
    out.bundle = render_scene(test::corridor_spec(), 0);
    out.tunnel = build_tunnel(out.bundle, build_height_map(out.bundle));
    return out;
  }();
  return s;
}

}  // namespace

TEST(Split, HandWorkedIndices) {
  const ActionTunnel t = along_y({0.5, 1.0, 1.5, 2.0});
  // t^r is exact up to log/exp round trip.
  EXPECT_EQ(split_indices(t, 1.3, 0.1, Side::kNear), (std::vector<int>{0, 1}));
  EXPECT_EQ(split_indices(t, 1.3, 0.1, Side::kFar), (std::vector<int>{2, 3}));
  EXPECT_EQ(split_tunnel(t, 5.0, 0.1, Side::kNear).sections.size(), 4u);
  EXPECT_EQ(split_tunnel(t, 5.0, 0.1, Side::kNear).segments.size(), 3u);
  EXPECT_TRUE(split_tunnel(t, 0.3, 0.1, Side::kNear).sections.empty());
  const ActionTunnel near = split_tunnel(t, 1.3, 0.1, Side::kNear);
  ASSERT_EQ(near.segments.size(), 1u);
  EXPECT_EQ(near.segments[0].first, 0);
  EXPECT_EQ(near.segments[0].second, 1);
}

TEST(Split, NearBandFarPartition) {
  const ActionTunnel t = along_y({0.2, 0.4, 0.7, 0.9, 1.2, 1.5, 1.6, 2.0, 2.3});
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> ur(0.0, 2.5), ud(0.0, 0.6);
  for (int k = 0; k < 200; ++k) {
    const double R = ur(rng), dR = ud(rng);
    const auto n = split_indices(t, R, dR, Side::kNear);
    const auto f = split_indices(t, R, dR, Side::kFar);
    std::set<int> seen;
    for (int i : n) EXPECT_TRUE(seen.insert(i).second);
    for (int i : f) EXPECT_TRUE(seen.insert(i).second);
    for (std::size_t i = 0; i < t.path.size(); ++i) {
      const double r = t.path[i].r;
      const bool in_band = r >= R - dR && r <= R + dR;
      EXPECT_EQ(seen.count(int(i)) == 0, in_band) << R << " " << dR << " " << i;
    }
  }
}

TEST(Align, IdentityOnSameTunnel) {
  const ActionTunnel t = along_y({0.5, 0.8, 1.1, 1.4, 1.7});
  const Alignment a = align_tunnels(t, t, 1.1);
  EXPECT_TRUE(a.transform.is_identity() || (std::abs(a.transform.dtheta) < 1e-12 &&
                                            a.transform.dx.norm() < 1e-12));
  EXPECT_NEAR(a.residual, 0.0, 1e-20);
}

TEST(Align, PureTranslation) {
  const ActionTunnel t1 = along_y({0.5, 0.8, 1.1, 1.4, 1.7});
  const ActionTunnel t2 = along_y({0.5, 0.8, 1.1, 1.4, 1.7}, 1.0);
  const Alignment a = align_tunnels(t1, t2, 1.1);
  EXPECT_NEAR(a.transform.dtheta, 0.0, 1e-12);
  EXPECT_NEAR(a.transform.dx.x(), -1.0, 1e-9);
  EXPECT_NEAR(a.transform.dx.y(), 0.0, 1e-9);
}

TEST(Align, ExactRigidMotionHasZeroResidual) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ua(-0.6, 0.6), ux(-1.0, 1.0);
  std::vector<Vec2> base;
  for (int k = 0; k < 12; ++k) base.emplace_back(0.3 * std::sin(0.4 * k), 1.0 + 0.5 * k);
  const ActionTunnel t1 =
      build_sections(flat_map(), Trajectory::from_ground_points(base), GroundFrame{}, TunnelParams{});
  for (int trial = 0; trial < 20; ++trial) {
    const RigidGround m{ua(rng), Vec2(ux(rng), ux(rng))};
    std::vector<Vec2> moved;
    for (const auto& p : base) moved.push_back(m.apply(p));
    const ActionTunnel t2 = build_sections(flat_map(), Trajectory::from_ground_points(moved),
                                           GroundFrame{}, TunnelParams{});
    const Alignment a = align_tunnels(t1, t2, t1.path[5].r);
    EXPECT_NEAR(a.residual, 0.0, 1e-18);
    // Applying the recovered motion brings t2's path back onto t1's.
    for (std::size_t i = 0; i < base.size(); ++i)
      EXPECT_NEAR((a.transform.apply(moved[i]) - base[i]).norm(), 0.0, 1e-9);
  }
}

TEST(Align, NoPointNearTransition) {
  const ActionTunnel t = along_y({0.5, 0.8, 1.1});
  EXPECT_THROW(align_tunnels(t, t, 3.0, 0.5), Error);
}

TEST(Compose, SelfCompositionIsProjection) {
  const ActionTunnel& t = corridor().tunnel;
  const auto [lo, hi] = path_range(t);
  const Projection p = project_tunnel(t, t.source);
  for (double R : {lo + 0.25 * (hi - lo), 0.5 * (lo + hi), lo + 0.8 * (hi - lo)}) {
    const CompositeResult c = compose(t, t, {R, 0.0, {}});
    int diff = 0, covered = 0;
    for (int y = 0; y < p.image.rows; ++y)
      for (int x = 0; x < p.image.cols; ++x) {
        if (!p.coverage(y, x)) continue;
        ++covered;
        if (c.image(y, x) != p.image(y, x)) ++diff;
      }
    EXPECT_GT(covered, 0);
    EXPECT_EQ(diff, 0) << "R = " << R;
  }
}

TEST(Compose, SelfCompositionOnTurningPaths) {
  CorpusOptions o;
  int scenes = 0;
  for (int k = 0; k < 12; ++k) {
    const SceneBundle b = render_scene(random_scene_spec(500 + k, k % 2 ? TurnClass::kRight : TurnClass::kLeft, o), 0);
    const ActionTunnel t = build_tunnel(b, build_height_map(b));
    if (t.empty()) continue;
    ++scenes;
    const Projection p = project_tunnel(t, t.source);
    const auto [lo, hi] = path_range(t);
    const CompositeResult c = compose(t, t, {0.5 * (lo + hi), 0.0, {}});
    int diff = 0;
    for (int y = 0; y < p.image.rows; ++y)
      for (int x = 0; x < p.image.cols; ++x)
        if (p.coverage(y, x) && c.image(y, x) != p.image(y, x)) ++diff;
    EXPECT_EQ(diff, 0) << "scene " << k;
  }
  EXPECT_GT(scenes, 8);
}

TEST(Compose, ProvenancePartition) {
  const ActionTunnel& t = corridor().tunnel;
  const auto [lo, hi] = path_range(t);
  const CompositeResult c = compose(t, t, {0.5 * (lo + hi), 0.15, {}});
  int counts[4] = {0, 0, 0, 0};
  for (int y = 0; y < c.provenance.rows; ++y)
    for (int x = 0; x < c.provenance.cols; ++x) {
      const int p = c.provenance(y, x);
      ASSERT_LE(p, 3);
      ++counts[p];
      EXPECT_EQ(c.missing(y, x) == 255, p == int(Provenance::kMissing));
      EXPECT_TRUE(c.missing(y, x) == 0 || c.missing(y, x) == 255);
    }
  EXPECT_GT(counts[1], 0);
  EXPECT_GT(counts[2], 0);
  EXPECT_GT(counts[3], 0);
}

TEST(Compose, BandMatchesAnalyticFloorRange) {
  // Straight path along g_y at X = 0: a floor pixel at (X, Y) sits at path
  // range ln Y, so the band on the floor is {ln Y in (R - dR, R + dR)}.
  const Scene& s = corridor();
  const ActionTunnel& t = s.tunnel;
  const double R = std::log(4.0), dR = 0.1;
  const CompositeResult c = compose(t, t, {R, dR, {}});
  const RectifiedCamera& cam = t.source;
  const Mat3 kinv = cam.K.inverse();
  const Vec3 c_local = t.frame.to_local(cam.C);
  double lam = 1e9;
  for (const auto& cs : t.sections) lam = std::min({lam, cs.lambda1, cs.lambda2});
  ASSERT_GT(lam, 1.0);
  int inside = 0, outside = 0;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const Vec3 dir_world = cam.R.transpose() * (kinv * Vec3(x, y, 1.0));
      const Vec3 d = Vec3(t.frame.gx.dot(dir_world), t.frame.gy.dot(dir_world), t.frame.gz.dot(dir_world));
      if (d.z() >= -1e-9) continue;
      const Vec3 g = c_local - (c_local.z() / d.z()) * d;
      if (std::abs(g.x()) > lam - 0.3 || g.y() < 2.0) continue;
      const double r = std::log(g.y());
      if (r > R - dR + 0.03 && r < R + dR - 0.03) {
        ++inside;
        EXPECT_EQ(c.missing(y, x), 255) << x << "," << y;
      } else if ((r < R - dR - 0.03 || r > R + dR + 0.03) && c.provenance(y, x) != 0) {
        ++outside;
        EXPECT_EQ(c.missing(y, x), 0) << x << "," << y;
      }
    }
  EXPECT_GT(inside, 50);
  EXPECT_GT(outside, 50);
}

TEST(Compose, MissingGrowsFasterThanLinearTowardCamera) {
  const ActionTunnel& t = corridor().tunnel;
  const double dR = 0.1;
  std::vector<int> counts;
  for (double R : {2.0, 1.75, 1.5, 1.25}) {
    const CompositeResult c = compose(t, t, {R, dR, {}});
    counts.push_back(cv::countNonZero(c.missing));
  }
  for (std::size_t k = 1; k < counts.size(); ++k) EXPECT_GT(counts[k], counts[k - 1]);
  // Increments grow: convex in the distance moved toward the camera.
  for (std::size_t k = 2; k < counts.size(); ++k)
    EXPECT_GT(counts[k] - counts[k - 1], counts[k - 1] - counts[k - 2]);
}

TEST(Compose, BothSegmentsEmptyFails) {
  const ActionTunnel& t = corridor().tunnel;
  const auto [lo, hi] = path_range(t);
  EXPECT_THROW(compose(t, t, {0.5 * (lo + hi), 10.0, {}}), Error);
}

TEST(TrainingPair, ZeroBandIsFullProjection) {
  const ActionTunnel& t = corridor().tunnel;
  const auto [lo, hi] = path_range(t);
  const TrainingPair p = make_training_pair(t, 0.5 * (lo + hi), 0.0);
  const Projection proj = project_tunnel(t, t.source);
  EXPECT_EQ(cv::countNonZero(p.band), 0);
  int diff = 0;
  for (int y = 0; y < proj.image.rows; ++y)
    for (int x = 0; x < proj.image.cols; ++x)
      if (proj.coverage(y, x) && p.masked(y, x) != proj.image(y, x)) ++diff;
  EXPECT_EQ(diff, 0);
  EXPECT_EQ(cv::norm(p.target, t.source_image, cv::NORM_INF), 0.0);
  EXPECT_EQ(cv::norm(p.valid, t.source_valid, cv::NORM_INF), 0.0);
}

TEST(TrainingPair, SeededSamplingIsDeterministic) {
  const ActionTunnel& t = corridor().tunnel;
  const auto a = sample_transition(t, 42);
  const auto b = sample_transition(t, 42);
  EXPECT_EQ(a, b);
  const auto [lo, hi] = path_range(t);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto [R, dR] = sample_transition(t, seed);
    EXPECT_GE(R, lo + 0.2 * (hi - lo) - 1e-12);
    EXPECT_LE(R, hi - 0.2 * (hi - lo) + 1e-12);
    EXPECT_GE(dR, 0.05);
    EXPECT_LE(dR, 0.4);
  }
}

TEST(TrainingPair, ExportWritesDatasetSchema) {
  test::TempDir dir("pair");
  const ActionTunnel& t = corridor().tunnel;
  const auto [R, dR] = sample_transition(t, 3);
  export_training_pair(make_training_pair(t, R, dR), dir.path());
  for (const char* f : {"masked.png", "target.png", "mask.png"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
}

TEST(TrainingPair, BandFractionsAreDiverse) {
  CorpusOptions o;
  double lo = 1.0, hi = 0.0;
  for (int k = 0; k < 6; ++k) {
    const SceneBundle b = render_scene(random_scene_spec(300 + k, TurnClass(k % 3), o), 0);
    const ActionTunnel t = build_tunnel(b, build_height_map(b));
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto [R, dR] = sample_transition(t, seed * 7919 + k);
      const double f = band_fraction(t, R, dR, t.source);
      lo = std::min(lo, f);
      hi = std::max(hi, f);
    }
  }
  EXPECT_LE(lo, 0.01);
  EXPECT_GE(hi, 0.40);
}
