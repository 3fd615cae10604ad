#pragma once

// ActionTunnel: cross-sections swept along the future trajectory, with image
// texture lifted onto four surfaces per segment, and the painter's-order
// rasterizer that projects tunnels back into rectified views.

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include "ivp/egomap.hpp"
#include "ivp/proxemic.hpp"
#include "ivp/scene_io.hpp"
#include "ivp/trajectory.hpp"

namespace ivp {

struct TunnelParams {
  double h_max = kDefaultMaxWalkableHeight;  // meters
  double alpha = 1.5;                        // ceiling factor
  double lambda_cap = 5.0;                   // meters
  double lambda_step = 0.05;                 // meters
  int tex_u = 32;                            // texels along the path
  int tex_v = 256;                           // texels across a surface

  void validate() const;
};

/// b1/c1 lie to the left of the walking direction, b2/c2 to the right.
struct CrossSection {
  ProxemicPoint b1, b2, c1, c2;
  int index = 0;
  bool degenerate = false;  // t_i itself not walkable
  double lambda1 = 0.0;     // metric lateral extents
  double lambda2 = 0.0;
};

enum class Surface : int { kFloor = 0, kCeiling = 1, kLeft = 2, kRight = 3 };
inline constexpr std::array<Surface, 4> kSurfaces = {Surface::kFloor, Surface::kCeiling,
                                                     Surface::kLeft, Surface::kRight};
const char* to_string(Surface s);

/// Node-sampled texture: nu x nv colour samples on the surface grid, node
/// (u, v) at fractions (u / (nu-1), v / (nv-1)) between the corners.
struct SurfaceTexture {
  int nu = 0;
  int nv = 0;
  std::vector<cv::Vec3f> color;
  std::vector<std::uint8_t> valid;

  std::size_t at(int u, int v) const { return static_cast<std::size_t>(u) * nv + v; }
  std::size_t valid_count() const;
};

/// One tunnel segment between two cross-sections (indices into `sections`).
struct TunnelSegment {
  int first = 0;
  int second = 0;
  std::array<SurfaceTexture, 4> textures;
};

struct ActionTunnel {
  std::vector<CrossSection> sections;
  std::vector<ProxemicPoint> path;  // t_i for each section, same frame
  std::vector<TunnelSegment> segments;
  GroundFrame frame;                // coordinates of sections and path
  RectifiedCamera source;           // P-bar the textures were lifted from
  Image source_image;               // rectified source, shared (cv::Mat refcount)
  Mask source_valid;

  bool empty() const;  // no valid texel anywhere
};

/// A segment touching a degenerate section has no walkable extent: it gets
/// no texture and is never painted.
bool collapsed(const ActionTunnel& tunnel, const TunnelSegment& seg);

/// Metric corner positions of one surface quad in ground-local coordinates:
/// [a0, b0, a1, b1] where a/b are the two edges of section `first` (0) and
/// `second` (1).
std::array<Vec3, 4> surface_corners(const ActionTunnel& tunnel, const TunnelSegment& seg,
                                    Surface s);

CrossSection cross_section(const HeightMap& map, const Trajectory& traj, std::size_t i,
                           const GroundFrame& frame, const TunnelParams& params);

/// Geometry only (no textures).
ActionTunnel build_sections(const HeightMap& map, const Trajectory& traj,
                            const GroundFrame& frame, const TunnelParams& params);

ActionTunnel build_tunnel(const SceneBundle& bundle, const HeightMap& map,
                          const TunnelParams& params = {});

/// Lifts texture from an already rectified image.
ActionTunnel build_tunnel(const Image& rectified, const Mask& rectified_valid,
                          const CameraModel& camera, const GroundFrame& frame,
                          const Trajectory& traj, const HeightMap& map,
                          const TunnelParams& params);

/// f_PROJ^-1: the inverse projection is texture lifting onto tunnel geometry.
inline ActionTunnel lift_from_image(const SceneBundle& bundle, const HeightMap& map,
                                    const TunnelParams& params = {}) {
  return build_tunnel(bundle, map, params);
}

/// Moves `tunnel` by `motion` (tunnel-local -> target-local ground
/// coordinates) and re-anchors it in `target`. Identity motion keeps the
/// proxemic coordinates untouched.
ActionTunnel transform_tunnel(const ActionTunnel& tunnel, const RigidGround& motion,
                              const GroundFrame& target);

/// Raster output of a painter pass.
struct Raster {
  Image image;
  Mask coverage;             // 255 where a paint item landed
  cv::Mat1b tag;             // caller-defined tag of the winning item (0 = none)
  cv::Mat1i item;            // index of the winning item, -1 = none
};

/// One segment to paint. Textured items draw valid texels only; untextured
/// items draw their whole geometry with `tag` (used for masks).
struct PaintItem {
  const ActionTunnel* tunnel = nullptr;
  int segment = 0;
  std::uint8_t tag = 1;
  bool textured = true;
  double range = 0.0;  // painter key: far first
  int priority = 0;    // higher paints later at equal range
  // Only pixels whose path range, interpolated along the segment, lies in
  // the open interval (clip_lo, clip_hi) are painted.
  double clip_lo = -std::numeric_limits<double>::infinity();
  double clip_hi = std::numeric_limits<double>::infinity();
};

/// Mean path range of a segment, the painter key.
double segment_range(const ActionTunnel& tunnel, const TunnelSegment& seg);

/// `texel_stride` > 1 coarsens the node grid of untextured items.
Raster paint(const std::vector<PaintItem>& items, const RectifiedCamera& target,
             int texel_stride = 1);

struct Projection {
  Image image;
  Mask coverage;
};

/// f_PROJ: far segments first so near geometry overwrites.
Projection project_tunnel(const ActionTunnel& tunnel, const RectifiedCamera& target);

/// Wavefront OBJ with one group per surface label.
void export_tunnel_obj(const ActionTunnel& tunnel, const std::filesystem::path& path);

}  // namespace ivp
