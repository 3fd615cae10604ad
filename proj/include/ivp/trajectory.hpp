#pragma once

#include <vector>

#include "ivp/proxemic.hpp"

namespace ivp {

/// Future foot points t_1..t_F in proxemic coordinates (h = 0), one per frame.
struct Trajectory {
  std::vector<ProxemicPoint> points;

  std::size_t size() const { return points.size(); }
  const ProxemicPoint& operator[](std::size_t i) const { return points[i]; }

  /// F >= 2, finite, h == 0, consecutive points > 1e-4 m apart on the ground.
  void validate() const;

  /// Metric ground positions (X, Y) in the owning frame's local coordinates.
  std::vector<Vec2> ground_points() const;

  static Trajectory from_ground_points(const std::vector<Vec2>& pts);
};

/// Uniform arc-length resampling in metric ground space.
Trajectory resample_by_arc_length(const Trajectory& traj, std::size_t count);

}  // namespace ivp
