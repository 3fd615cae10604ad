#pragma once

// Log-cylindrical proxemic space anchored at the wearer's ground frame, and
// the rectification that aligns a first-person camera with that frame.

#include <utility>

#include "ivp/camera.hpp"
#include "ivp/types.hpp"

namespace ivp {

inline constexpr double kAxisEpsilon = 1e-6;  // meters, min distance to the cylinder axis

struct GroundFrame {
  Vec3 origin = Vec3::Zero();  // G_o, on the ground plane
  Vec3 gx = Vec3::UnitX();
  Vec3 gy = Vec3::UnitY();     // walking direction
  Vec3 gz = Vec3::UnitZ();     // ground normal
  double height = 1.0;         // H, camera height above ground

  void validate() const;

  Vec3 to_local(const Vec3& world) const;
  Vec3 to_world(const Vec3& local) const;
};

/// (r, theta, h): r = ln(rho), theta = atan2(Y, X), h = Z / rho.
struct ProxemicPoint {
  double r = 0.0;
  double theta = 0.0;
  double h = 0.0;

  double rho() const;
};

double normalize_angle(double a);

GroundFrame ground_frame_from_motion(const Vec3& c_now, const Vec3& c_next,
                                     const Vec3& up, double height);

/// Frame whose g_y follows an arbitrary ground heading instead of the
/// walking velocity (used by the rectification-only baselines).
GroundFrame ground_frame_from_heading(const Vec3& center, const Vec3& heading,
                                      const Vec3& up, double height);

ProxemicPoint local_to_proxemic(const Vec3& local);
Vec3 proxemic_to_local(const ProxemicPoint& p);

ProxemicPoint world_to_proxemic(const Vec3& x, const GroundFrame& frame);
Vec3 proxemic_to_world(const ProxemicPoint& p, const GroundFrame& frame);

/// Rows g_x, -g_z, g_y.
Mat3 rectifying_rotation(const GroundFrame& frame);

/// Camera with the same K and C as the source, oriented by the rectifying
/// rotation. This is the P-bar every tunnel projection targets.
struct RectifiedCamera {
  Mat3 K = Mat3::Identity();
  Mat3 R = Mat3::Identity();
  Vec3 C = Vec3::Zero();
  int width = 0;
  int height = 0;

  /// Homogeneous image point (lambda * u, lambda * v, lambda).
  Vec3 project(const Vec3& world) const { return K * (R * (world - C)); }
};

RectifiedCamera rectified_camera(const CameraModel& camera, const GroundFrame& frame);

/// Destination (rectified) pixel -> source pixel: K R Rbar^T K^-1.
Mat3 rectifying_homography(const CameraModel& camera, const GroundFrame& frame);

struct WarpResult {
  Image image;
  Mask valid;
};

/// Inverse warp, bilinear for color.
WarpResult rectify_image(const Image& image, const CameraModel& camera,
                         const GroundFrame& frame);
WarpResult unrectify_image(const Image& rectified, const CameraModel& camera,
                           const GroundFrame& frame);

/// Nearest-neighbour variants for masks and label images. Pixels whose
/// source falls outside the image get `fill`.
Mask rectify_mask(const Mask& mask, const CameraModel& camera,
                  const GroundFrame& frame, uchar fill = 0);
Mask unrectify_mask(const Mask& mask, const CameraModel& camera,
                    const GroundFrame& frame, uchar fill = 0);

/// Generic homography warps; `h_dst_to_src` maps destination pixels to source.
WarpResult warp_bilinear(const Image& src, const Mat3& h_dst_to_src, int width,
                         int height);
Mask warp_nearest(const Mask& src, const Mat3& h_dst_to_src, int width, int height,
                  uchar fill = 0);

/// Rigid motion on the ground plane: p' = Rot(dtheta) p + dx, heights kept.
struct RigidGround {
  double dtheta = 0.0;
  Vec2 dx = Vec2::Zero();

  bool is_identity() const { return dtheta == 0.0 && dx.isZero(0.0); }
  Vec3 apply(const Vec3& local) const;
  Vec2 apply(const Vec2& p) const;
};

/// Transform mapping local coordinates of `from` into local coordinates of `to`.
/// Both frames must share the ground plane and normal.
RigidGround relative_ground_transform(const GroundFrame& from, const GroundFrame& to);

}  // namespace ivp
