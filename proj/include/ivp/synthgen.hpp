#pragma once

// Deterministic ray-cast RGBD corridors with optional side branches and
// box obstacles. Every bundle carries the exact pose, frame and future path.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ivp/scene_io.hpp"

namespace ivp {

enum class TurnClass { kStraight = 0, kLeft = 1, kRight = 2 };
const char* to_string(TurnClass c);
TurnClass turn_class_from_string(const std::string& s);

struct Box {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();
};

struct SceneSpec {
  std::string name = "scene";

  // Layout: corridor along +y with walls at x = +/- half_width.
  double half_width = 2.0;
  double start_y = -3.0;
  double length = 40.0;
  double wall_height = 3.0;
  bool has_floor = true;
  bool has_walls = true;
  TurnClass branch = TurnClass::kStraight;  // side branch opening, if any
  double branch_y = 6.0;                     // branch centre line
  double branch_half_width = 1.5;
  double branch_length = 12.0;
  std::vector<Box> boxes;

  // Textures.
  double checker = 0.25;  // meters
  std::uint64_t palette_seed = 0;

  // Camera.
  int width = 256;
  int height = 256;
  double focal = 96.0;
  double cam_height = 1.6;
  double pitch_deg = 10.0;  // downward
  double jitter_deg = 0.0;  // per-frame yaw/pitch jitter amplitude

  // Path: straight along x = path_x, or a turn into the branch.
  TurnClass path = TurnClass::kStraight;
  double path_x = 0.0;
  double turn_start_y = 3.0;
  double turn_radius = 1.5;
  double step = 0.5;   // meters between frames
  int future = 16;     // trajectory length F
  int lead = 3;        // first future frame on the trajectory; nearer feet are off-screen

  // Appearance.
  double fog_distance = 30.0;  // meters
  int antialias = 2;
  double depth_noise = 0.0;    // sigma, meters
  std::uint64_t seed = 0;

  void validate() const;
};

/// Foot point (z = 0) and unit heading at arc length s along the path.
struct PathSample {
  Vec3 foot;
  Vec3 heading;
};
PathSample path_at(const SceneSpec& spec, double s);

/// Camera at frame k (no jitter applied when `with_jitter` is false).
CameraModel camera_at(const SceneSpec& spec, int frame_index, bool with_jitter = true);
GroundFrame frame_at(const SceneSpec& spec, int frame_index);

SceneBundle render_scene(const SceneSpec& spec, int frame_index);

/// Net heading change (radians, left positive) between the first and last
/// segment of a trajectory.
double net_heading_change(const Trajectory& traj);
/// left > +30 deg, right < -30 deg, straight |change| < 10 deg; otherwise
/// the nearer class by sign.
TurnClass classify_trajectory(const Trajectory& traj);

struct CorpusOptions {
  std::uint64_t seed = 1;
  int n_scenes = 9;
  std::array<double, 3> mix = {1.0, 1.0, 1.0};  // straight, left, right
  std::vector<int> sequence_frames;              // empty: one bundle per scene
  int width = 256;
  int height = 256;
  double focal = 96.0;
  double jitter_deg = 1.0;
  double depth_noise = 0.0;
  int antialias = 2;
};

/// Randomized scene of the requested class, fully determined by `seed`.
SceneSpec random_scene_spec(std::uint64_t seed, TurnClass cls, const CorpusOptions& options);

/// Per-class counts for n scenes under `mix` (largest remainder).
std::array<int, 3> class_counts(int n, const std::array<double, 3>& mix);

/// Writes bundles, manifest.json and labels.json under `root`.
CorpusManifest make_corpus(const std::filesystem::path& root, const CorpusOptions& options);

}  // namespace ivp
