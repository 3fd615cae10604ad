#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>

#include "ivp/scene_io.hpp"

namespace ivp {

/// Discretization of the height map over (r, theta). The theta span is
/// centred on `theta_center`; the default centre pi/2 is the walking
/// direction (g_y), so the default grid covers the forward half-plane.
struct HeightGridSpec {
  double r_min = -0.6931471805599453;  // ln 0.5
  double r_max = 2.995732273553991;    // ln 20
  double theta_center = std::numbers::pi / 2.0;
  double theta_max = std::numbers::pi / 2.0;
  int n_r = 128;
  int n_theta = 128;

  void validate() const;
  double dr() const { return (r_max - r_min) / n_r; }
  double dtheta() const { return 2.0 * theta_max / n_theta; }
  /// Cell-centre coordinates.
  double r_at(int i) const { return r_min + (i + 0.5) * dr(); }
  double theta_at(int j) const;

  bool operator==(const HeightGridSpec&) const = default;
};

/// EgoRetinal height map phi(r, theta): maximum height above ground per
/// cell in meters. Rows index r, columns index theta; NaN marks UNKNOWN.
struct HeightMap {
  HeightGridSpec spec;
  cv::Mat1f cells;

  bool known(int i, int j) const { return !std::isnan(cells(i, j)); }
};

struct HeightMapOptions {
  // Extra bilinear depth samples per pixel side inside continuous 2x2 depth
  // patches; 1 disables. Far ground otherwise leaves gaps between rows.
  int supersample = 4;
  double max_depth_ratio = 1.25;  // continuity test for supersampling
};

HeightMap build_height_map(const SceneBundle& bundle, const HeightGridSpec& spec = {},
                           const HeightMapOptions& options = {});

/// Lower-level entry: depth, camera pose and frame only.
HeightMap build_height_map(const DepthMap& depth, const CameraModel& camera,
                           const GroundFrame& frame, const HeightGridSpec& spec,
                           const HeightMapOptions& options = {});

/// Bilinear over cell centres; +inf outside the grid or when any cell with
/// non-zero weight is UNKNOWN.
double query_height(const HeightMap& map, double r, double theta);

inline constexpr double kDefaultMaxWalkableHeight = 0.3;  // meters

struct GroundPlaneEstimate {
  Vec3 up;
  double height = 0.0;  // camera distance to the plane
  double inlier_fraction = 0.0;
};

struct GroundPlaneOptions {
  int iterations = 500;
  double inlier_threshold = 0.05;  // meters
  double min_inlier_fraction = 0.2;
  // Hypotheses whose normal is farther than this from the camera's up axis
  // are rejected; walls and ceilings are planes too.
  double max_tilt_deg = 45.0;
  int max_samples = 6000;
  std::uint64_t seed = 7;
};

GroundPlaneEstimate estimate_ground_plane(const DepthMap& depth, const CameraModel& camera,
                                          const GroundPlaneOptions& options = {});

/// phi as a PFM plus `<path>.json` with the grid spec.
void export_height_map(const HeightMap& map, const std::filesystem::path& pfm_path);

}  // namespace ivp
