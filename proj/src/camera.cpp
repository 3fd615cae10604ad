#include "ivp/camera.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "ivp/error.hpp"

namespace ivp {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kMissingFile: return "missing file";
    case ErrorCode::kMalformed: return "malformed";
    case ErrorCode::kDegenerate: return "degenerate";
    case ErrorCode::kSingularity: return "singularity";
    case ErrorCode::kNotFound: return "not found";
    case ErrorCode::kTimeout: return "timeout";
    case ErrorCode::kConnection: return "connection";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kRemote: return "remote";
  }
  return "unknown";
}

bool is_rotation(const Mat3& R, double tol) {
  if (!R.allFinite()) return false;
  if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(R.determinant() - 1.0) <= tol;
}

void CameraModel::validate() const {
  if (!K.allFinite() || !R.allFinite() || !C.allFinite()) {
    throw Error(ErrorCode::kValidation, "camera contains non-finite values");
  }
  if (K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0) {
    throw Error(ErrorCode::kValidation, "K must be upper triangular");
  }
  if (!(K(0, 0) > 0.0) || !(K(1, 1) > 0.0) || K(2, 2) != 1.0) {
    throw Error(ErrorCode::kValidation, "K must have positive focal lengths and K[2][2] = 1");
  }
  if (!is_rotation(R)) throw Error(ErrorCode::kValidation, "R is not a rotation");
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kValidation, "camera image size must be positive");
  }
}

Vec3 CameraModel::pixel_ray(double u, double v) const {
  return (R.transpose() * (K.inverse() * Vec3(u, v, 1.0))).normalized();
}

}  // namespace ivp
