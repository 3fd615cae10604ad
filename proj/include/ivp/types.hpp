#pragma once

#include <Eigen/Dense>
#include <opencv2/core.hpp>

namespace ivp {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Images are RGB (not BGR) float in [0, 1]; conversion happens only at file
// boundaries.
using Image = cv::Mat3f;
using Mask = cv::Mat1b;     // 0 / 255
using DepthMap = cv::Mat1f; // meters; <= 0 or NaN = invalid

inline bool depth_valid(float d) noexcept { return d > 0.0f && d == d; }

}  // namespace ivp
