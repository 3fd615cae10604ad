#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ivp/egomap.hpp"
#include "ivp/error.hpp"
#include "ivp/synthgen.hpp"
#include "support.hpp"

using namespace ivp;

namespace {

SceneSpec floor_only() {
  SceneSpec s;
  s.has_walls = false;
  s.width = 160;
  s.height = 160;
  s.focal = 80.0;
  return s;
}

// Frame rotated about g_z by `a`: a point at angle theta appears at theta - a.
GroundFrame rotated(const GroundFrame& f, double a) {
  GroundFrame g = f;
  g.gx = std::cos(a) * f.gx + std::sin(a) * f.gy;
  g.gy = -std::sin(a) * f.gx + std::cos(a) * f.gy;
  return g;
}

}  // namespace

TEST(HeightMap, FlatGroundIsZero) {
  const SceneBundle b = render_scene(floor_only(), 0);
  const HeightMap m = build_height_map(b);
  int known = 0;
  double worst = 0.0;
  for (int i = 0; i < m.spec.n_r; ++i)
    for (int j = 0; j < m.spec.n_theta; ++j)
      if (m.known(i, j)) {
        ++known;
        worst = std::max(worst, double(std::abs(m.cells(i, j))));
      }
  EXPECT_GT(known, 1000);
  EXPECT_LT(worst, 0.02);
}

TEST(HeightMap, BoxTopHeight) {
  SceneSpec s = floor_only();
  const GroundFrame f0 = frame_at(s, 0);
  // 1 m box, 4 m ahead of the wearer.
  const Vec3 centre = f0.origin + 4.0 * f0.gy;
  s.boxes.push_back({centre + Vec3(-0.3, -0.3, 0.0), centre + Vec3(0.3, 0.3, 1.0)});
  const SceneBundle b = render_scene(s, 0);
  const HeightMap m = build_height_map(b);
  // Oracle: cells whose centres fall inside the analytic footprint.
  float top = -1.0f;
  int inside = 0;
  for (int i = 0; i < m.spec.n_r; ++i)
    for (int j = 0; j < m.spec.n_theta; ++j) {
      const double rho = std::exp(m.spec.r_at(i));
      const double th = m.spec.theta_at(j);
      const Vec3 w = b.frame.to_world({rho * std::cos(th), rho * std::sin(th), 0.0});
      if (std::abs(w.x() - centre.x()) > 0.3 || std::abs(w.y() - centre.y()) > 0.3) continue;
      ++inside;
      if (m.known(i, j)) top = std::max(top, m.cells(i, j));
    }
  ASSERT_GT(inside, 0);
  EXPECT_NEAR(top, 1.0, 0.02);
}

TEST(HeightMap, AllInvalidDepthFails) {
  SceneBundle b = render_scene(floor_only(), 0);
  b.depth.setTo(0.0f);
  try {
    build_height_map(b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerate);
  }
}

TEST(HeightMap, QueryHeight) {
  HeightMap m;
  m.spec.n_r = 4;
  m.spec.n_theta = 4;
  m.cells = cv::Mat1f(4, 4, 0.0f);
  m.cells(1, 2) = 1.0f;
  const auto& s = m.spec;
  EXPECT_DOUBLE_EQ(query_height(m, s.r_at(1), s.theta_at(2)), 1.0);
  EXPECT_DOUBLE_EQ(query_height(m, s.r_at(1), s.theta_at(1)), 0.0);
  EXPECT_NEAR(query_height(m, s.r_at(1), 0.5 * (s.theta_at(1) + s.theta_at(2))), 0.5, 1e-9);
  EXPECT_NEAR(query_height(m, 0.5 * (s.r_at(1) + s.r_at(2)), s.theta_at(2)), 0.5, 1e-9);
  EXPECT_TRUE(std::isinf(query_height(m, s.r_max + 0.1, s.theta_at(1))));
  EXPECT_TRUE(std::isinf(query_height(m, s.r_min - 0.1, s.theta_at(1))));
  m.cells(2, 2) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_TRUE(std::isinf(query_height(m, 0.5 * (s.r_at(1) + s.r_at(2)), s.theta_at(2))));
}

TEST(HeightMap, QueryStaysWithinNeighbourRange) {
  std::mt19937_64 rng(4);
  HeightMap m;
  m.spec.n_r = 8;
  m.spec.n_theta = 8;
  m.cells = cv::Mat1f(8, 8);
  cv::randu(m.cells, 0.0f, 1.0f);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto& s = m.spec;
  for (int k = 0; k < 1000; ++k) {
    const double fi = 0.5 + u(rng) * 6.0, fj = 0.5 + u(rng) * 6.0;
    const int i = int(fi - 0.5), j = int(fj - 0.5);
    const double r = s.r_min + fi * s.dr();
    const double th = normalize_angle(s.theta_center - s.theta_max + fj * s.dtheta());
    const double q = query_height(m, r, th);
    const float lo = std::min({m.cells(i, j), m.cells(i + 1, j), m.cells(i, j + 1), m.cells(i + 1, j + 1)});
    const float hi = std::max({m.cells(i, j), m.cells(i + 1, j), m.cells(i, j + 1), m.cells(i + 1, j + 1)});
    EXPECT_GE(q, lo - 1e-6);
    EXPECT_LE(q, hi + 1e-6);
  }
}

TEST(HeightMap, MaxAggregationIsMonotone) {
  SceneSpec s = test::corridor_spec();
  s.width = 128;
  s.height = 128;
  s.focal = 64.0;
  const GroundFrame f0 = frame_at(s, 0);
  const Vec3 c = f0.origin + 3.0 * f0.gy + 0.8 * f0.gx;
  s.boxes.push_back({c + Vec3(-0.3, -0.3, 0.0), c + Vec3(0.3, 0.3, 0.7)});
  const SceneBundle b = render_scene(s, 0);
  const HeightMap full = build_height_map(b);
  DepthMap sub = b.depth.clone();
  cv::RNG rng(9);
  for (int y = 0; y < sub.rows; ++y)
    for (int x = 0; x < sub.cols; ++x)
      if (rng.uniform(0, 2)) sub(y, x) = 0.0f;
  const HeightMap part = build_height_map(sub, b.camera, b.frame, full.spec);
  for (int i = 0; i < full.spec.n_r; ++i)
    for (int j = 0; j < full.spec.n_theta; ++j)
      if (part.known(i, j)) {
        ASSERT_TRUE(full.known(i, j));
        EXPECT_LE(part.cells(i, j), full.cells(i, j));
      }
}

TEST(HeightMap, RotationShiftsThetaColumns) {
  SceneSpec s = test::corridor_spec();
  s.width = 160;
  s.height = 160;
  s.focal = 80.0;
  const GroundFrame f0 = frame_at(s, 0);
  const Vec3 c = f0.origin + 3.0 * f0.gy - 0.6 * f0.gx;
  s.boxes.push_back({c + Vec3(-0.3, -0.3, 0.0), c + Vec3(0.3, 0.3, 0.9)});
  const SceneBundle b = render_scene(s, 0);
  HeightGridSpec spec;
  const int k = 5;
  const HeightMap a = build_height_map(b.depth, b.camera, b.frame, spec);
  const HeightMap r = build_height_map(b.depth, b.camera, rotated(b.frame, k * spec.dtheta()), spec);
  int same = 0, compared = 0;
  for (int i = 0; i < spec.n_r; ++i)
    for (int j = 0; j + k < spec.n_theta; ++j) {
      const bool ka = a.known(i, j + k), kr = r.known(i, j);
      if (!ka && !kr) continue;
      ++compared;
      if (ka && kr && std::abs(a.cells(i, j + k) - r.cells(i, j)) < 1e-4) ++same;
    }
  ASSERT_GT(compared, 1000);
  EXPECT_GT(double(same) / compared, 0.98);
}

TEST(GroundPlane, NoiselessGround) {
  const SceneBundle b = render_scene(floor_only(), 0);
  const GroundPlaneEstimate e = estimate_ground_plane(b.depth, b.camera);
  EXPECT_NEAR(e.height, b.frame.height, 0.01);
  const double ang = std::acos(std::clamp(e.up.dot(Vec3::UnitZ()), -1.0, 1.0));
  EXPECT_LT(ang * 180.0 / std::numbers::pi, 0.5);
}

TEST(GroundPlane, NoisyGround) {
  SceneSpec s = floor_only();
  s.depth_noise = 0.01;
  const SceneBundle b = render_scene(s, 0);
  const GroundPlaneEstimate e = estimate_ground_plane(b.depth, b.camera);
  EXPECT_NEAR(e.height, b.frame.height, 0.03);
}

TEST(GroundPlane, WallsOnlyFails) {
  SceneSpec s = test::corridor_spec(1.0);
  s.has_floor = false;
  s.width = 128;
  s.height = 128;
  s.focal = 64.0;
  const SceneBundle b = render_scene(s, 0);
  try {
    estimate_ground_plane(b.depth, b.camera);
    FAIL() << "wall-only scene produced a ground plane";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerate);
  }
}
