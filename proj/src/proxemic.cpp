#include "ivp/proxemic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "ivp/error.hpp"

namespace ivp {

namespace {

bool finite(const Vec3& v) { return v.allFinite(); }

void check_unit(const Vec3& v, const char* name) {
  if (!finite(v) || std::abs(v.norm() - 1.0) > 1e-9) {
    throw Error(ErrorCode::kValidation, std::string("ground frame axis ") + name +
                                            " is not a unit vector");
  }
}

Mat3 safe_inverse(const Mat3& K) {
  const double det = K.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-12) {
    throw Error(ErrorCode::kDegenerate, "intrinsic matrix is near singular");
  }
  return K.inverse();
}

}  // namespace

void GroundFrame::validate() const {
  if (!finite(origin)) throw Error(ErrorCode::kValidation, "ground frame origin is not finite");
  check_unit(gx, "g_x");
  check_unit(gy, "g_y");
  check_unit(gz, "g_z");
  if ((gx.cross(gy) - gz).norm() > 1e-9) {
    throw Error(ErrorCode::kValidation, "ground frame is not right-handed orthonormal");
  }
  if (!(height > 0.0) || !std::isfinite(height)) {
    throw Error(ErrorCode::kValidation, "ground frame height must be positive");
  }
}

Vec3 GroundFrame::to_local(const Vec3& world) const {
  const Vec3 d = world - origin;
  return {gx.dot(d), gy.dot(d), gz.dot(d)};
}

Vec3 GroundFrame::to_world(const Vec3& local) const {
  return origin + local.x() * gx + local.y() * gy + local.z() * gz;
}

double ProxemicPoint::rho() const { return std::exp(r); }

double normalize_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  a = std::fmod(a, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

GroundFrame ground_frame_from_heading(const Vec3& center, const Vec3& heading,
                                      const Vec3& up, double height) {
  if (!finite(center) || !finite(heading) || !finite(up) || !std::isfinite(height)) {
    throw Error(ErrorCode::kInvalidArgument, "non-finite input to ground frame");
  }
  if (!(height > 0.0)) throw Error(ErrorCode::kInvalidArgument, "height must be positive");
  const double up_norm = up.norm();
  if (up_norm < 1e-12) throw Error(ErrorCode::kInvalidArgument, "up vector is zero");
  GroundFrame f;
  f.gz = up / up_norm;
  const Vec3 planar = heading - heading.dot(f.gz) * f.gz;
  if (planar.norm() <= kAxisEpsilon) {
    throw Error(ErrorCode::kDegenerate, "heading has no ground-plane component");
  }
  f.gy = planar.normalized();
  f.gx = f.gy.cross(f.gz).normalized();
  // Re-orthogonalize so gx x gy == gz to machine precision.
  f.gy = f.gz.cross(f.gx).normalized();
  f.height = height;
  f.origin = center - height * f.gz;
  return f;
}

GroundFrame ground_frame_from_motion(const Vec3& c_now, const Vec3& c_next,
                                     const Vec3& up, double height) {
  return ground_frame_from_heading(c_now, c_next - c_now, up, height);
}

ProxemicPoint local_to_proxemic(const Vec3& local) {
  if (!finite(local)) throw Error(ErrorCode::kInvalidArgument, "non-finite point");
  const double rho = std::hypot(local.x(), local.y());
  if (rho <= kAxisEpsilon) {
    throw Error(ErrorCode::kSingularity, "point lies on the proxemic cylinder axis");
  }
  return {std::log(rho), std::atan2(local.y(), local.x()), local.z() / rho};
}

Vec3 proxemic_to_local(const ProxemicPoint& p) {
  if (!std::isfinite(p.r) || !std::isfinite(p.theta) || !std::isfinite(p.h)) {
    throw Error(ErrorCode::kInvalidArgument, "non-finite proxemic point");
  }
  const double rho = std::exp(p.r);
  return {rho * std::cos(p.theta), rho * std::sin(p.theta), p.h * rho};
}

ProxemicPoint world_to_proxemic(const Vec3& x, const GroundFrame& frame) {
  return local_to_proxemic(frame.to_local(x));
}

Vec3 proxemic_to_world(const ProxemicPoint& p, const GroundFrame& frame) {
  return frame.to_world(proxemic_to_local(p));
}

Mat3 rectifying_rotation(const GroundFrame& frame) {
  Mat3 r;
  r.row(0) = frame.gx.transpose();
  r.row(1) = -frame.gz.transpose();
  r.row(2) = frame.gy.transpose();
  return r;
}

RectifiedCamera rectified_camera(const CameraModel& camera, const GroundFrame& frame) {
  return {camera.K, rectifying_rotation(frame), camera.C, camera.width, camera.height};
}

Mat3 rectifying_homography(const CameraModel& camera, const GroundFrame& frame) {
  return camera.K * camera.R * rectifying_rotation(frame).transpose() *
         safe_inverse(camera.K);
}

namespace {

Mat3 unrectifying_homography(const CameraModel& camera, const GroundFrame& frame) {
  return camera.K * rectifying_rotation(frame) * camera.R.transpose() *
         safe_inverse(camera.K);
}

bool map_point(const Mat3& h, int x, int y, double& sx, double& sy) {
  const Vec3 s = h * Vec3(x, y, 1.0);
  if (!(s.z() > 1e-12)) return false;
  sx = s.x() / s.z();
  sy = s.y() / s.z();
  return true;
}

}  // namespace

WarpResult warp_bilinear(const Image& src, const Mat3& h, int width, int height) {
  WarpResult out{Image(height, width, cv::Vec3f(0, 0, 0)), Mask(height, width, uchar{0})};
  const double max_x = src.cols - 1;
  const double max_y = src.rows - 1;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double sx = 0, sy = 0;
      if (!map_point(h, x, y, sx, sy)) continue;
      if (sx < -1e-9 || sy < -1e-9 || sx > max_x + 1e-9 || sy > max_y + 1e-9) continue;
      sx = std::clamp(sx, 0.0, max_x);
      sy = std::clamp(sy, 0.0, max_y);
      const int x0 = std::min(static_cast<int>(sx), src.cols - 1);
      const int y0 = std::min(static_cast<int>(sy), src.rows - 1);
      const int x1 = std::min(x0 + 1, src.cols - 1);
      const int y1 = std::min(y0 + 1, src.rows - 1);
      const float ax = static_cast<float>(sx - x0);
      const float ay = static_cast<float>(sy - y0);
      const cv::Vec3f top = src(y0, x0) * (1.0f - ax) + src(y0, x1) * ax;
      const cv::Vec3f bot = src(y1, x0) * (1.0f - ax) + src(y1, x1) * ax;
      out.image(y, x) = top * (1.0f - ay) + bot * ay;
      out.valid(y, x) = 255;
    }
  }
  return out;
}

Mask warp_nearest(const Mask& src, const Mat3& h, int width, int height, uchar fill) {
  Mask out(height, width, fill);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double sx = 0, sy = 0;
      if (!map_point(h, x, y, sx, sy)) continue;
      const long ix = std::lround(sx);
      const long iy = std::lround(sy);
      if (ix < 0 || iy < 0 || ix >= src.cols || iy >= src.rows) continue;
      out(y, x) = src(static_cast<int>(iy), static_cast<int>(ix));
    }
  }
  return out;
}

WarpResult rectify_image(const Image& image, const CameraModel& camera,
                         const GroundFrame& frame) {
  return warp_bilinear(image, rectifying_homography(camera, frame), camera.width,
                       camera.height);
}

WarpResult unrectify_image(const Image& rectified, const CameraModel& camera,
                           const GroundFrame& frame) {
  return warp_bilinear(rectified, unrectifying_homography(camera, frame), camera.width,
                       camera.height);
}

Mask rectify_mask(const Mask& mask, const CameraModel& camera, const GroundFrame& frame,
                  uchar fill) {
  return warp_nearest(mask, rectifying_homography(camera, frame), camera.width,
                      camera.height, fill);
}

Mask unrectify_mask(const Mask& mask, const CameraModel& camera,
                    const GroundFrame& frame, uchar fill) {
  return warp_nearest(mask, unrectifying_homography(camera, frame), camera.width,
                      camera.height, fill);
}

Vec3 RigidGround::apply(const Vec3& local) const {
  const Vec2 p = apply(Vec2(local.x(), local.y()));
  return {p.x(), p.y(), local.z()};
}

Vec2 RigidGround::apply(const Vec2& p) const {
  if (is_identity()) return p;
  const double c = std::cos(dtheta);
  const double s = std::sin(dtheta);
  return {c * p.x() - s * p.y() + dx.x(), s * p.x() + c * p.y() + dx.y()};
}

RigidGround relative_ground_transform(const GroundFrame& from, const GroundFrame& to) {
  if ((from.gz - to.gz).norm() > 1e-6) {
    throw Error(ErrorCode::kInvalidArgument, "frames do not share a ground normal");
  }
  // Direction of from.gx expressed in `to`.
  const double cx = to.gx.dot(from.gx);
  const double cy = to.gy.dot(from.gx);
  RigidGround t;
  t.dtheta = std::atan2(cy, cx);
  const Vec3 o = to.to_local(from.origin);
  t.dx = Vec2(o.x(), o.y());
  return t;
}

}  // namespace ivp
