#include "ivp/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ivp/error.hpp"

namespace ivp {

void Trajectory::validate() const {
  if (points.size() < 2) {
    throw Error(ErrorCode::kValidation, "trajectory needs at least 2 points, got " +
                                            std::to_string(points.size()));
  }
  for (const auto& p : points) {
    if (!std::isfinite(p.r) || !std::isfinite(p.theta) || !std::isfinite(p.h)) {
      throw Error(ErrorCode::kValidation, "trajectory contains non-finite values");
    }
    if (p.h != 0.0) throw Error(ErrorCode::kValidation, "trajectory points must have h = 0");
  }
  const auto g = ground_points();
  for (std::size_t i = 1; i < g.size(); ++i) {
    if ((g[i] - g[i - 1]).norm() <= 1e-4) {
      throw Error(ErrorCode::kValidation,
                  "consecutive trajectory points coincide at index " + std::to_string(i));
    }
  }
}

std::vector<Vec2> Trajectory::ground_points() const {
  std::vector<Vec2> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    const double rho = std::exp(p.r);
    out.emplace_back(rho * std::cos(p.theta), rho * std::sin(p.theta));
  }
  return out;
}

Trajectory Trajectory::from_ground_points(const std::vector<Vec2>& pts) {
  Trajectory t;
  t.points.reserve(pts.size());
  for (const auto& p : pts) {
    ProxemicPoint q = local_to_proxemic(Vec3(p.x(), p.y(), 0.0));
    q.h = 0.0;
    t.points.push_back(q);
  }
  return t;
}

Trajectory resample_by_arc_length(const Trajectory& traj, std::size_t count) {
  if (traj.size() < 2 || count < 2) {
    throw Error(ErrorCode::kInvalidArgument, "resampling needs >= 2 input and output points");
  }
  const auto g = traj.ground_points();
  std::vector<double> cum(g.size(), 0.0);
  for (std::size_t i = 1; i < g.size(); ++i) cum[i] = cum[i - 1] + (g[i] - g[i - 1]).norm();
  const double total = cum.back();
  std::vector<Vec2> out;
  out.reserve(count);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const double s = total * static_cast<double>(k) / static_cast<double>(count - 1);
    while (seg + 2 < g.size() && cum[seg + 1] < s) ++seg;
    const double len = cum[seg + 1] - cum[seg];
    const double a = len > 0.0 ? std::clamp((s - cum[seg]) / len, 0.0, 1.0) : 0.0;
    out.push_back(g[seg] + a * (g[seg + 1] - g[seg]));
  }
  return Trajectory::from_ground_points(out);
}

}  // namespace ivp
