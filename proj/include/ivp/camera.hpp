#pragma once

#include "ivp/types.hpp"

namespace ivp {

/// Pinhole camera, P = K R [I | -C]. R maps world to camera; camera axes are
/// x right, y down, z forward.
struct CameraModel {
  Mat3 K = Mat3::Identity();
  Mat3 R = Mat3::Identity();
  Vec3 C = Vec3::Zero();
  int width = 0;
  int height = 0;

  /// Throws Error(kValidation) on any invariant violation.
  void validate() const;

  Vec3 to_camera(const Vec3& world) const { return R * (world - C); }
  /// World-space unit ray through pixel (u, v).
  Vec3 pixel_ray(double u, double v) const;
};

/// Checks that R is a proper rotation within `tol`.
bool is_rotation(const Mat3& R, double tol = 1e-9);

}  // namespace ivp
