#include "ivp/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ivp/error.hpp"

namespace ivp {

const char* to_string(TurnClass c) {
  switch (c) {
    case TurnClass::kStraight: return "straight";
    case TurnClass::kLeft: return "left";
    case TurnClass::kRight: return "right";
  }
  return "?";
}

TurnClass turn_class_from_string(const std::string& s) {
  if (s == "straight") return TurnClass::kStraight;
  if (s == "left") return TurnClass::kLeft;
  if (s == "right") return TurnClass::kRight;
  throw Error(ErrorCode::kInvalidArgument, "unknown turn class '" + s + "'");
}

void SceneSpec::validate() const {
  if (!(half_width > 0.0)) throw Error(ErrorCode::kValidation, "corridor half-width must be positive");
  if (!(length > 0.0) || !(wall_height > 0.0)) throw Error(ErrorCode::kValidation, "bad corridor size");
  if (width <= 0 || height <= 0 || !(focal > 0.0)) throw Error(ErrorCode::kValidation, "bad camera");
  if (!(cam_height > 0.0) || !(step > 0.0) || future < 2 || lead < 1) {
    throw Error(ErrorCode::kValidation, "bad camera path");
  }
  if (branch != TurnClass::kStraight && !(branch_half_width > 0.0 && branch_length > 0.0)) {
    throw Error(ErrorCode::kValidation, "bad branch");
  }
  if (path != TurnClass::kStraight && !(turn_radius > 0.0)) {
    throw Error(ErrorCode::kValidation, "turn radius must be positive");
  }
  for (const auto& b : boxes) {
    if (!(b.lo.array() < b.hi.array()).all() || b.lo.z() < 0.0) {
      throw Error(ErrorCode::kValidation, "box must be non-empty and above ground");
    }
  }
}

PathSample path_at(const SceneSpec& spec, double s) {
  const Vec3 up = Vec3::UnitZ();
  if (spec.path == TurnClass::kStraight) {
    return {Vec3(spec.path_x, s, 0.0), Vec3::UnitY()};
  }
  const double sign = spec.path == TurnClass::kLeft ? 1.0 : -1.0;  // left turns toward -x
  const double r = spec.turn_radius;
  const double s0 = spec.turn_start_y;
  const double arc = 0.5 * std::numbers::pi * r;
  if (s <= s0) return {Vec3(spec.path_x, s, 0.0), Vec3::UnitY()};
  if (s <= s0 + arc) {
    const double a = (s - s0) / r;
    const Vec3 center(spec.path_x - sign * r, s0, 0.0);
    const Vec3 foot = center + Vec3(sign * r * std::cos(a), r * std::sin(a), 0.0);
    const Vec3 heading(-sign * std::sin(a), std::cos(a), 0.0);
    (void)up;
    return {foot, heading};
  }
  const Vec3 end(spec.path_x - sign * r, s0 + r, 0.0);
  const Vec3 heading(-sign, 0.0, 0.0);
  return {end + (s - s0 - arc) * heading, heading};
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double hash_unit(std::uint64_t a, std::int64_t i, std::int64_t j, int surface) {
  std::uint64_t h = splitmix(a ^ splitmix(static_cast<std::uint64_t>(i) * 73856093ULL ^
                                          static_cast<std::uint64_t>(j) * 19349663ULL ^
                                          static_cast<std::uint64_t>(surface) * 83492791ULL));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::mt19937_64 frame_rng(std::uint64_t seed, int frame, std::uint64_t salt) {
  return std::mt19937_64(splitmix(seed ^ splitmix(static_cast<std::uint64_t>(frame) + salt)));
}

enum SurfaceId { kFloor = 0, kLeftWall, kRightWall, kEndWall, kBranchWall, kBranchEnd, kBoxFace, kCount };

struct Rect {
  int axis;  // 0: plane x = value, 1: plane y = value
  double value;
  double a_lo, a_hi;  // range of the other horizontal coordinate
  double z_lo, z_hi;
  int surface;
};

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  int surface = -1;
  double u = 0, v = 0;   // in-plane texture coordinates, meters
  double shade = 1.0;
};

class Scene {
 public:
  explicit Scene(const SceneSpec& spec) : spec_(spec) {
    const double w = spec.half_width;
    const double y0 = spec.start_y;
    const double y1 = spec.start_y + spec.length;
    const double h = spec.wall_height;
    const double by = spec.branch_y;
    const double bw = spec.branch_half_width;
    auto side_wall = [&](double x, int surface, bool gap) {
      if (!gap) {
        rects_.push_back({0, x, y0, y1, 0, h, surface});
      } else {
        rects_.push_back({0, x, y0, by - bw, 0, h, surface});
        rects_.push_back({0, x, by + bw, y1, 0, h, surface});
      }
    };
    if (spec.has_walls) {
      side_wall(-w, kLeftWall, spec.branch == TurnClass::kLeft);
      side_wall(w, kRightWall, spec.branch == TurnClass::kRight);
      rects_.push_back({1, y1, -w, w, 0, h, kEndWall});
      rects_.push_back({1, y0, -w, w, 0, h, kEndWall});
      if (spec.branch != TurnClass::kStraight) {
        const double sgn = spec.branch == TurnClass::kLeft ? -1.0 : 1.0;
        const double xa = std::min(sgn * w, sgn * (w + spec.branch_length));
        const double xb = std::max(sgn * w, sgn * (w + spec.branch_length));
        rects_.push_back({1, by - bw, xa, xb, 0, h, kBranchWall});
        rects_.push_back({1, by + bw, xa, xb, 0, h, kBranchWall});
        rects_.push_back({0, sgn * (w + spec.branch_length), by - bw, by + bw, 0, h, kBranchEnd});
      }
    }
    std::mt19937_64 rng(splitmix(spec.palette_seed + 17));
    std::uniform_real_distribution<double> c(0.15, 0.9);
    for (auto& p : palette_) p = cv::Vec3f(float(c(rng)), float(c(rng)), float(c(rng)));
  }

  bool inside(const Vec3& p) const {
    const double w = spec_.half_width;
    const bool in_main = std::abs(p.x()) < w && p.y() > spec_.start_y &&
                         p.y() < spec_.start_y + spec_.length;
    bool in_branch = false;
    if (spec_.branch != TurnClass::kStraight) {
      const double sgn = spec_.branch == TurnClass::kLeft ? -1.0 : 1.0;
      const double x = sgn * p.x();
      in_branch = x >= w - 1e-9 && x < w + spec_.branch_length &&
                  std::abs(p.y() - spec_.branch_y) < spec_.branch_half_width;
    }
    return (in_main || in_branch || !spec_.has_walls) && p.z() > 0.0 && p.z() < spec_.wall_height;
  }

  Hit trace(const Vec3& o, const Vec3& d) const {
    Hit best;
    if (spec_.has_floor && d.z() < 0.0) {
      const double t = -o.z() / d.z();
      if (t > 0.0) {
        const Vec3 p = o + t * d;
        best = {t, kFloor, p.x(), p.y(), 1.0};
      }
    }
    for (const auto& r : rects_) {
      const double dn = d[r.axis];
      if (dn == 0.0) continue;
      const double t = (r.value - o[r.axis]) / dn;
      if (!(t > 0.0) || t >= best.t) continue;
      const Vec3 p = o + t * d;
      const double a = p[1 - r.axis];
      if (a < r.a_lo || a > r.a_hi || p.z() < r.z_lo || p.z() > r.z_hi) continue;
      best = {t, r.surface, a, p.z(), r.axis == 0 ? 0.85 : 0.7};
    }
    for (const auto& b : spec_.boxes) {
      double t0 = 0.0, t1 = best.t;
      int axis = -1;
      bool miss = false;
      for (int k = 0; k < 3; ++k) {
        if (d[k] == 0.0) {
          if (o[k] < b.lo[k] || o[k] > b.hi[k]) miss = true;
          continue;
        }
        double ta = (b.lo[k] - o[k]) / d[k];
        double tb = (b.hi[k] - o[k]) / d[k];
        if (ta > tb) std::swap(ta, tb);
        if (ta > t0) {
          t0 = ta;
          axis = k;
        }
        t1 = std::min(t1, tb);
      }
      if (miss || axis < 0 || t0 > t1 || !(t0 < best.t)) continue;
      const Vec3 p = o + t0 * d;
      const double u = axis == 0 ? p.y() : p.x();
      const double v = axis == 2 ? p.y() : p.z();
      best = {t0, kBoxFace, u, v, axis == 2 ? 1.0 : (axis == 0 ? 0.85 : 0.7)};
    }
    return best;
  }

  cv::Vec3f shade(const Hit& h, const Vec3& d) const {
    if (h.surface < 0) return sky(d);
    const double q = spec_.checker;
    const auto i = static_cast<std::int64_t>(std::floor(h.u / q));
    const auto j = static_cast<std::int64_t>(std::floor(h.v / q));
    const cv::Vec3f base = palette_[2 * h.surface + ((i + j) & 1)];
    const double jitter = 0.7 + 0.6 * hash_unit(spec_.palette_seed, i, j, h.surface);
    cv::Vec3f c = base * static_cast<float>(jitter * h.shade);
    for (int k = 0; k < 3; ++k) c[k] = std::clamp(c[k], 0.0f, 1.0f);
    const double dist = h.t * d.norm();
    const float f = static_cast<float>(std::exp(-dist / spec_.fog_distance));
    return c * f + fog_color() * (1.0f - f);
  }

  cv::Vec3f sky(const Vec3& d) const {
    const double e = std::clamp(d.normalized().z(), 0.0, 1.0);
    const cv::Vec3f zenith(0.35f, 0.5f, 0.85f);
    return fog_color() * static_cast<float>(1.0 - e) + zenith * static_cast<float>(e);
  }

  static cv::Vec3f fog_color() { return {0.82f, 0.85f, 0.9f}; }

 private:
  const SceneSpec& spec_;
  std::vector<Rect> rects_;
  std::array<cv::Vec3f, 2 * kCount> palette_;
};

}  // namespace

CameraModel camera_at(const SceneSpec& spec, int frame_index, bool with_jitter) {
  const PathSample ps = path_at(spec, frame_index * spec.step);
  double yaw = std::atan2(ps.heading.y(), ps.heading.x());
  double pitch = spec.pitch_deg * std::numbers::pi / 180.0;
  if (with_jitter && spec.jitter_deg > 0.0) {
    auto rng = frame_rng(spec.seed, frame_index, 101);
    const double a = spec.jitter_deg * std::numbers::pi / 180.0;
    std::uniform_real_distribution<double> j(-a, a);
    yaw += j(rng);
    pitch += j(rng);
  }
  const Vec3 h(std::cos(yaw), std::sin(yaw), 0.0);
  const Vec3 fwd = std::cos(pitch) * h - std::sin(pitch) * Vec3::UnitZ();
  const Vec3 right = h.cross(Vec3::UnitZ()).normalized();
  const Vec3 down = fwd.cross(right);
  CameraModel cam;
  cam.R.row(0) = right.transpose();
  cam.R.row(1) = down.transpose();
  cam.R.row(2) = fwd.transpose();
  cam.K << spec.focal, 0, (spec.width - 1) / 2.0, 0, spec.focal, (spec.height - 1) / 2.0, 0, 0, 1;
  cam.C = ps.foot + spec.cam_height * Vec3::UnitZ();
  cam.width = spec.width;
  cam.height = spec.height;
  return cam;
}

GroundFrame frame_at(const SceneSpec& spec, int frame_index) {
  const Vec3 c0 = path_at(spec, frame_index * spec.step).foot;
  const Vec3 c1 = path_at(spec, (frame_index + 1) * spec.step).foot;
  const Vec3 up = Vec3::UnitZ();
  return ground_frame_from_motion(c0 + spec.cam_height * up, c1 + spec.cam_height * up, up,
                                  spec.cam_height);
}

SceneBundle render_scene(const SceneSpec& spec, int frame_index) {
  spec.validate();
  if (frame_index < 0) throw Error(ErrorCode::kInvalidArgument, "negative frame index");
  const Scene scene(spec);
  SceneBundle b;
  b.id = spec.name;
  b.camera = camera_at(spec, frame_index);
  if (!scene.inside(b.camera.C)) {
    throw Error(ErrorCode::kInvalidArgument, "camera outside the scene volume");
  }
  b.frame = frame_at(spec, frame_index);
  std::vector<Vec2> feet;
  for (int j = spec.lead; j < spec.lead + spec.future; ++j) {
    const Vec3 local = b.frame.to_local(path_at(spec, (frame_index + j) * spec.step).foot);
    feet.emplace_back(local.x(), local.y());
  }
  b.trajectory = Trajectory::from_ground_points(feet);

  const int W = spec.width, H = spec.height;
  b.rgb = cv::Mat3b(H, W);
  b.depth = DepthMap(H, W);
  const Mat3 m = b.camera.R.transpose() * b.camera.K.inverse();
  const int aa = std::max(1, spec.antialias);
  const Vec3 o = b.camera.C;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const Vec3 dc = m * Vec3(x, y, 1.0);
      const Hit hc = scene.trace(o, dc);
      b.depth(y, x) = hc.surface >= 0 ? static_cast<float>(hc.t)
                                      : std::numeric_limits<float>::quiet_NaN();
      cv::Vec3f acc(0, 0, 0);
      for (int sy = 0; sy < aa; ++sy) {
        for (int sx = 0; sx < aa; ++sx) {
          const double px = x + (sx + 0.5) / aa - 0.5;
          const double py = y + (sy + 0.5) / aa - 0.5;
          const Vec3 d = m * Vec3(px, py, 1.0);
          acc += scene.shade(scene.trace(o, d), d);
        }
      }
      acc *= 1.0f / static_cast<float>(aa * aa);
      for (int k = 0; k < 3; ++k) {
        b.rgb(y, x)[k] = static_cast<uchar>(std::lround(std::clamp(acc[k], 0.0f, 1.0f) * 255.0f));
      }
    }
  }
  if (spec.depth_noise > 0.0) {
    auto rng = frame_rng(spec.seed, frame_index, 202);
    std::normal_distribution<double> n(0.0, spec.depth_noise);
    for (auto& d : b.depth) {
      if (depth_valid(d)) d = static_cast<float>(std::max(1e-3, d + n(rng)));
    }
  }
  b.validate();
  return b;
}

double net_heading_change(const Trajectory& traj) {
  const auto g = traj.ground_points();
  if (g.size() < 3) return 0.0;
  const Vec2 a = g[1] - g[0];
  const Vec2 b = g.back() - g[g.size() - 2];
  return normalize_angle(std::atan2(b.y(), b.x()) - std::atan2(a.y(), a.x()));
}

TurnClass classify_trajectory(const Trajectory& traj) {
  const double deg = net_heading_change(traj) * 180.0 / std::numbers::pi;
  if (deg > 30.0) return TurnClass::kLeft;
  if (deg < -30.0) return TurnClass::kRight;
  if (std::abs(deg) < 10.0) return TurnClass::kStraight;
  return deg > 0 ? TurnClass::kLeft : TurnClass::kRight;
}

SceneSpec random_scene_spec(std::uint64_t seed, TurnClass cls, const CorpusOptions& options) {
  std::mt19937_64 rng(splitmix(seed * 2654435761ULL + 12345));
  auto U = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  SceneSpec s;
  s.seed = seed;
  s.palette_seed = splitmix(seed + 99);
  s.half_width = U(1.6, 2.4);
  s.wall_height = U(2.6, 3.4);
  s.cam_height = U(1.5, 1.8);
  s.pitch_deg = U(5.0, 15.0);
  s.width = options.width;
  s.height = options.height;
  s.focal = options.focal;
  s.jitter_deg = options.jitter_deg;
  s.depth_noise = options.depth_noise;
  s.antialias = options.antialias;
  s.path_x = U(-0.3, 0.3);
  s.length = 40.0;
  s.path = cls;
  if (cls != TurnClass::kStraight) {
    s.branch = cls;
    s.turn_start_y = U(2.0, 3.5);
    s.turn_radius = std::min(s.half_width - 0.2 - std::abs(s.path_x), U(1.1, 1.6));
    s.branch_half_width = s.turn_radius + U(0.0, 0.4);
    const double sign = cls == TurnClass::kLeft ? 1.0 : -1.0;
    // Branch centred on the post-turn path line.
    s.branch_y = s.turn_start_y + s.turn_radius;
    (void)sign;
  } else if (U(0.0, 1.0) < 0.5) {
    // Straight scenes sometimes pass a side opening they do not take.
    s.branch = U(0.0, 1.0) < 0.5 ? TurnClass::kLeft : TurnClass::kRight;
    s.branch_y = U(9.0, 14.0);
    s.branch_half_width = U(1.0, 1.8);
  }
  return s;
}

std::array<int, 3> class_counts(int n, const std::array<double, 3>& mix) {
  const double total = mix[0] + mix[1] + mix[2];
  if (n < 1 || !(total > 0.0) || mix[0] < 0 || mix[1] < 0 || mix[2] < 0) {
    throw Error(ErrorCode::kInvalidArgument, "need n >= 1 and a non-negative, non-zero mix");
  }
  std::array<int, 3> out{};
  std::array<double, 3> rem{};
  int used = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = n * mix[k] / total;
    out[k] = static_cast<int>(std::floor(exact));
    rem[k] = exact - out[k];
    used += out[k];
  }
  while (used < n) {
    const int k = static_cast<int>(std::max_element(rem.begin(), rem.end()) - rem.begin());
    ++out[k];
    rem[k] = -1.0;
    ++used;
  }
  return out;
}

CorpusManifest make_corpus(const std::filesystem::path& root, const CorpusOptions& options) {
  const auto counts = class_counts(options.n_scenes, options.mix);
  std::vector<TurnClass> classes;
  for (int k = 0; k < 3; ++k) classes.insert(classes.end(), counts[k], static_cast<TurnClass>(k));
  std::mt19937_64 rng(splitmix(options.seed));
  std::shuffle(classes.begin(), classes.end(), rng);

  CorpusManifest m;
  m.root = root;
  std::map<std::string, std::string> labels;
  for (int i = 0; i < options.n_scenes; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "s%04d", i);
    SceneSpec spec = random_scene_spec(splitmix(options.seed) + i, classes[i], options);
    if (options.sequence_frames.empty()) {
      spec.name = name;
      const SceneBundle b = render_scene(spec, 0);
      save_bundle(b, root / b.id);
      m.ids.push_back(b.id);
      labels[b.id] = to_string(classes[i]);
    } else {
      for (int f : options.sequence_frames) {
        char id[48];
        std::snprintf(id, sizeof id, "%s_f%02d", name, f);
        spec.name = id;
        const SceneBundle b = render_scene(spec, f);
        save_bundle(b, root / b.id);
        m.ids.push_back(b.id);
        m.sequences[name][f] = b.id;
        labels[b.id] = to_string(classes[i]);
      }
    }
  }
  save_manifest(m);
  save_labels(root, labels);
  return m;
}

}  // namespace ivp
