#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "ivp/synthgen.hpp"

namespace ivp::test {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ivp_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

/// Plain straight corridor, no jitter, no boxes.
inline SceneSpec corridor_spec(double half_width = 2.0) {
  SceneSpec s;
  s.name = "corridor";
  s.half_width = half_width;
  s.path = TurnClass::kStraight;
  s.branch = TurnClass::kStraight;
  return s;
}

/// Textbook masked NCC, written independently of the library version.
inline double reference_ncc(const Image& a, const Image& b, const Mask& m) {
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    double sa = 0, sb = 0;
    long n = 0;
    for (int y = 0; y < a.rows; ++y)
      for (int x = 0; x < a.cols; ++x)
        if (m(y, x)) {
          sa += a(y, x)[c];
          sb += b(y, x)[c];
          ++n;
        }
    if (n == 0) return 0.0;
    sa /= n;
    sb /= n;
    double ab = 0, aa = 0, bb = 0;
    for (int y = 0; y < a.rows; ++y)
      for (int x = 0; x < a.cols; ++x)
        if (m(y, x)) {
          double p = a(y, x)[c] - sa, q = b(y, x)[c] - sb;
          ab += p * q;
          aa += p * p;
          bb += q * q;
        }
    if (aa < 1e-24 || bb < 1e-24) continue;
    total += ab / std::sqrt(aa * bb);
  }
  return total / 3.0;
}

/// Random orthonormal right-handed frame with the given height.
inline GroundFrame random_frame(std::mt19937_64& rng, double height = 1.6) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 up(n(rng), n(rng), n(rng));
  up.normalize();
  Vec3 a(n(rng), n(rng), n(rng));
  Vec3 gy = (a - a.dot(up) * up).normalized();
  GroundFrame f;
  f.gz = up;
  f.gy = gy;
  f.gx = gy.cross(up).normalized();
  f.origin = Vec3(n(rng), n(rng), n(rng)) * 3.0;
  f.height = height;
  return f;
}

}  // namespace ivp::test
