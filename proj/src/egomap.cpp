#include "ivp/egomap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ivp/error.hpp"
#include "ivp/image_io.hpp"

namespace ivp {

void HeightGridSpec::validate() const {
  if (!(r_min < r_max) || !std::isfinite(r_min) || !std::isfinite(r_max)) {
    throw Error(ErrorCode::kValidation, "height grid needs r_min < r_max");
  }
  if (!(theta_max > 0.0) || theta_max > std::numbers::pi) {
    throw Error(ErrorCode::kValidation, "height grid needs 0 < theta_max <= pi");
  }
  if (n_r < 2 || n_theta < 2) throw Error(ErrorCode::kValidation, "height grid needs >= 2 cells per axis");
}

double HeightGridSpec::theta_at(int j) const {
  return normalize_angle(theta_center - theta_max + (j + 0.5) * dtheta());
}

namespace {

class Binner {
 public:
  explicit Binner(HeightMap& map) : map_(map), spec_(map.spec) {}

  void add(const Vec3& local) {
    const double rho = std::hypot(local.x(), local.y());
    if (rho <= kAxisEpsilon) return;
    const double r = std::log(rho);
    const double a = normalize_angle(std::atan2(local.y(), local.x()) - spec_.theta_center);
    const double fi = (r - spec_.r_min) / spec_.dr();
    const double fj = (a + spec_.theta_max) / spec_.dtheta();
    if (fi < 0.0 || fj < 0.0 || fi >= spec_.n_r || fj >= spec_.n_theta) return;
    float& cell = map_.cells(static_cast<int>(fi), static_cast<int>(fj));
    const float z = static_cast<float>(local.z());
    if (std::isnan(cell) || z > cell) cell = z;
  }

 private:
  HeightMap& map_;
  const HeightGridSpec& spec_;
};

}  // namespace

HeightMap build_height_map(const SceneBundle& bundle, const HeightGridSpec& spec,
                           const HeightMapOptions& options) {
  return build_height_map(bundle.depth, bundle.camera, bundle.frame, spec, options);
}

HeightMap build_height_map(const DepthMap& depth, const CameraModel& camera,
                           const GroundFrame& frame, const HeightGridSpec& spec,
                           const HeightMapOptions& options) {
  spec.validate();
  HeightMap map{spec, cv::Mat1f(spec.n_r, spec.n_theta, std::numeric_limits<float>::quiet_NaN())};
  Binner binner(map);

  // Pixel (u, v) with depth d -> ground-local point, as an affine map in d.
  const Mat3 kinv = camera.K.inverse();
  const Mat3 rt = camera.R.transpose();
  Mat3 to_local;
  to_local.row(0) = frame.gx.transpose();
  to_local.row(1) = frame.gy.transpose();
  to_local.row(2) = frame.gz.transpose();
  const Mat3 m = to_local * rt * kinv;
  const Vec3 c_local = frame.to_local(camera.C);
  auto lift = [&](double u, double v, double d) { return Vec3(m * Vec3(u * d, v * d, d) + c_local); };

  bool any = false;
  for (int y = 0; y < depth.rows; ++y) {
    for (int x = 0; x < depth.cols; ++x) {
      const float d = depth(y, x);
      if (!depth_valid(d)) continue;
      any = true;
      binner.add(lift(x, y, d));
    }
  }
  if (!any) throw Error(ErrorCode::kDegenerate, "depth map has no valid pixels");

  const int s = std::max(1, options.supersample);
  if (s > 1) {
    for (int y = 0; y + 1 < depth.rows; ++y) {
      for (int x = 0; x + 1 < depth.cols; ++x) {
        const float d00 = depth(y, x), d01 = depth(y, x + 1);
        const float d10 = depth(y + 1, x), d11 = depth(y + 1, x + 1);
        if (!depth_valid(d00) || !depth_valid(d01) || !depth_valid(d10) || !depth_valid(d11)) continue;
        const float lo = std::min({d00, d01, d10, d11});
        const float hi = std::max({d00, d01, d10, d11});
        if (hi > lo * options.max_depth_ratio) continue;
        for (int a = 0; a < s; ++a) {
          for (int b = 0; b < s; ++b) {
            if (a == 0 && b == 0) continue;  // the pixel itself, already binned
            const double fy = static_cast<double>(a) / s;
            const double fx = static_cast<double>(b) / s;
            // Inverse depth is affine in the image for a plane.
            const double inv = (1 - fy) * ((1 - fx) / d00 + fx / d01) + fy * ((1 - fx) / d10 + fx / d11);
            binner.add(lift(x + fx, y + fy, 1.0 / inv));
          }
        }
      }
    }
  }
  return map;
}

double query_height(const HeightMap& map, double r, double theta) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const auto& spec = map.spec;
  if (!std::isfinite(r) || !std::isfinite(theta)) return kInf;
  const double a = normalize_angle(theta - spec.theta_center);
  if (r < spec.r_min || r > spec.r_max || a < -spec.theta_max || a > spec.theta_max) return kInf;
  const double fi = std::clamp((r - spec.r_min) / spec.dr() - 0.5, 0.0, spec.n_r - 1.0);
  const double fj = std::clamp((a + spec.theta_max) / spec.dtheta() - 0.5, 0.0, spec.n_theta - 1.0);
  const int i0 = static_cast<int>(fi);
  const int j0 = static_cast<int>(fj);
  const int i1 = std::min(i0 + 1, spec.n_r - 1);
  const int j1 = std::min(j0 + 1, spec.n_theta - 1);
  const double wi = fi - i0;
  const double wj = fj - j0;
  const double w[4] = {(1 - wi) * (1 - wj), (1 - wi) * wj, wi * (1 - wj), wi * wj};
  const int ii[4] = {i0, i0, i1, i1};
  const int jj[4] = {j0, j1, j0, j1};
  double acc = 0.0;
  for (int k = 0; k < 4; ++k) {
    if (w[k] <= 0.0) continue;
    const float v = map.cells(ii[k], jj[k]);
    if (std::isnan(v)) return kInf;
    acc += w[k] * v;
  }
  return acc;
}

GroundPlaneEstimate estimate_ground_plane(const DepthMap& depth, const CameraModel& camera,
                                          const GroundPlaneOptions& options) {
  const Mat3 kinv = camera.K.inverse();
  const Mat3 rt = camera.R.transpose();
  std::vector<Vec3> pts;
  for (int y = depth.rows / 2; y < depth.rows; ++y) {
    for (int x = 0; x < depth.cols; ++x) {
      const float d = depth(y, x);
      if (!depth_valid(d)) continue;
      pts.push_back(rt * (kinv * Vec3(x * d, y * d, d)) + camera.C);
    }
  }
  if (pts.size() < 3) {
    throw Error(ErrorCode::kDegenerate, "fewer than 3 valid depth pixels in the lower image half");
  }
  std::mt19937_64 rng(options.seed);
  if (static_cast<int>(pts.size()) > options.max_samples) {
    std::shuffle(pts.begin(), pts.end(), rng);
    pts.resize(options.max_samples);
  }

  const Vec3 cam_up = -camera.R.row(1).transpose();
  const double min_cos = std::cos(options.max_tilt_deg * std::numbers::pi / 180.0);
  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
  std::size_t best_count = 0;
  Vec3 best_n = Vec3::Zero();
  double best_d = 0.0;
  for (int it = 0; it < options.iterations; ++it) {
    const Vec3& a = pts[pick(rng)];
    const Vec3& b = pts[pick(rng)];
    const Vec3& c = pts[pick(rng)];
    Vec3 n = (b - a).cross(c - a);
    const double len = n.norm();
    if (len < 1e-9) continue;
    n /= len;
    if (std::abs(n.dot(cam_up)) < min_cos) continue;
    const double d = -n.dot(a);
    std::size_t count = 0;
    for (const auto& p : pts) count += std::abs(n.dot(p) + d) < options.inlier_threshold;
    if (count > best_count) {
      best_count = count;
      best_n = n;
      best_d = d;
    }
  }
  const double fraction = static_cast<double>(best_count) / static_cast<double>(pts.size());
  if (best_count < 3 || fraction < options.min_inlier_fraction) {
    throw Error(ErrorCode::kDegenerate, "insufficient ground-plane inliers");
  }

  // Least-squares refinement over the inliers.
  Vec3 centroid = Vec3::Zero();
  std::vector<Vec3> inliers;
  for (const auto& p : pts) {
    if (std::abs(best_n.dot(p) + best_d) < options.inlier_threshold) inliers.push_back(p);
  }
  for (const auto& p : inliers) centroid += p;
  centroid /= static_cast<double>(inliers.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : inliers) cov += (p - centroid) * (p - centroid).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  Vec3 n = eig.eigenvectors().col(0).normalized();
  if (n.dot(camera.C - centroid) < 0.0) n = -n;

  return {n, n.dot(camera.C - centroid), fraction};
}

void export_height_map(const HeightMap& map, const std::filesystem::path& pfm_path) {
  write_pfm(pfm_path, map.cells);
  const auto& s = map.spec;
  nlohmann::json j = {{"r_min", s.r_min},         {"r_max", s.r_max},
                      {"theta_center", s.theta_center}, {"theta_max", s.theta_max},
                      {"n_r", s.n_r},             {"n_theta", s.n_theta},
                      {"rows", "r"},              {"cols", "theta"},
                      {"unknown", "NaN"}};
  std::ofstream f(pfm_path.string() + ".json");
  if (!f) throw Error(ErrorCode::kIo, "cannot write height map sidecar");
  f << j.dump(2) << "\n";
}

}  // namespace ivp
