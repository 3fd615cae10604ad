#include "ivp/compose.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ivp/error.hpp"
#include "ivp/image_io.hpp"

namespace ivp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool keep(double r, double R, double dR, Side side) {
  return side == Side::kNear ? r < R - dR : r > R + dR;
}

std::vector<Vec2> path_ground(const ActionTunnel& t) {
  std::vector<Vec2> g;
  g.reserve(t.path.size());
  for (const auto& p : t.path) {
    const double rho = std::exp(p.r);
    g.emplace_back(rho * std::cos(p.theta), rho * std::sin(p.theta));
  }
  return g;
}

int nearest_index(const ActionTunnel& t, double R) {
  int best = -1;
  double best_d = kInf;
  for (std::size_t i = 0; i < t.path.size(); ++i) {
    const double d = std::abs(t.path[i].r - R);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

Vec2 rotate(const Vec2& v, double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

}  // namespace

void TransitionSpec::validate() const {
  if (!std::isfinite(R)) throw Error(ErrorCode::kValidation, "transition R must be finite");
  if (!(dR >= 0.0) || !std::isfinite(dR)) {
    throw Error(ErrorCode::kValidation, "transition band half-width must be >= 0");
  }
}

std::vector<int> split_indices(const ActionTunnel& tunnel, double R, double dR, Side side) {
  std::vector<int> out;
  for (std::size_t i = 0; i < tunnel.path.size(); ++i) {
    if (keep(tunnel.path[i].r, R, dR, side)) out.push_back(static_cast<int>(i));
  }
  return out;
}

ActionTunnel split_tunnel(const ActionTunnel& tunnel, double R, double dR, Side side) {
  ActionTunnel out;
  out.frame = tunnel.frame;
  out.source = tunnel.source;
  out.source_image = tunnel.source_image;
  out.source_valid = tunnel.source_valid;
  std::vector<int> remap(tunnel.path.size(), -1);
  for (int i : split_indices(tunnel, R, dR, side)) {
    remap[i] = static_cast<int>(out.sections.size());
    out.sections.push_back(tunnel.sections[i]);
    out.path.push_back(tunnel.path[i]);
  }
  for (const auto& seg : tunnel.segments) {
    if (remap[seg.first] < 0 || remap[seg.second] < 0) continue;
    TunnelSegment s = seg;
    s.first = remap[seg.first];
    s.second = remap[seg.second];
    out.segments.push_back(std::move(s));
  }
  return out;
}

Alignment align_tunnels(const ActionTunnel& t1, const ActionTunnel& t2, double R,
                        double window) {
  if (t1.path.size() < 2 || t2.path.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "alignment needs paths with >= 2 points");
  }
  const int i1 = nearest_index(t1, R);
  const int i2 = nearest_index(t2, R);
  if (std::abs(t1.path[i1].r - R) >= window || std::abs(t2.path[i2].r - R) >= window) {
    throw Error(ErrorCode::kNotFound, "no trajectory point within the alignment window of R");
  }
  const auto g1 = path_ground(t1);
  const auto g2 = path_ground(t2);

  double s = 0.0;
  for (int i = 0; i < i1; ++i) s += (g1[i + 1] - g1[i]).norm();
  const std::size_t k1 = static_cast<std::size_t>(i1) + 1 < g1.size() ? i1 : i1 - 1;
  const Vec2 p1 = g1[i1];
  const Vec2 d1 = (g1[k1 + 1] - g1[k1]).normalized();

  // Point at arc length s along t2, with its segment's tangent.
  std::size_t k2 = 0;
  double acc = 0.0;
  Vec2 p2 = g2.back();
  for (;; ++k2) {
    const double len = (g2[k2 + 1] - g2[k2]).norm();
    // A junction on a vertex takes the segment that starts there, as on t1.
    if (s < acc + len - 1e-9 * (1.0 + acc) || k2 + 2 == g2.size()) {
      const double a = len > 0 ? std::clamp((s - acc) / len, 0.0, 1.0) : 0.0;
      p2 = g2[k2] + a * (g2[k2 + 1] - g2[k2]);
      break;
    }
    acc += len;
  }
  const Vec2 d2 = (g2[k2 + 1] - g2[k2]).normalized();

  Alignment out;
  out.junction = i1;
  out.transform.dtheta = normalize_angle(std::atan2(d1.y(), d1.x()) - std::atan2(d2.y(), d2.x()));
  out.transform.dx = p1 - rotate(p2, out.transform.dtheta);
  if (std::abs(out.transform.dtheta) < 1e-15 && out.transform.dx.norm() < 1e-15) {
    out.transform = RigidGround{};
  }
  const Vec2 q = out.transform.apply(p2);
  const Vec2 e = rotate(d2, out.transform.dtheta);
  out.residual = (q - p1).squaredNorm() + (e - d1).squaredNorm();
  return out;
}

std::pair<double, double> path_range(const ActionTunnel& tunnel) {
  if (tunnel.path.empty()) throw Error(ErrorCode::kInvalidArgument, "tunnel has no path");
  double lo = kInf, hi = -kInf;
  for (const auto& p : tunnel.path) {
    lo = std::min(lo, p.r);
    hi = std::max(hi, p.r);
  }
  return {lo, hi};
}

double default_transition(const ActionTunnel& t1, const ActionTunnel& t2) {
  const auto [a1, b1] = path_range(t1);
  const auto [a2, b2] = path_range(t2);
  const double lo = std::max(a1, a2);
  const double hi = std::min(b1, b2);
  if (lo <= hi) return 0.5 * (lo + hi);
  return 0.5 * (a1 + b1);
}

namespace {

enum Tag : std::uint8_t { kTagNone = 0, kTag1 = 1, kTag2 = 2, kTagBand = 3 };

void add_items(std::vector<PaintItem>& items, const ActionTunnel& t1, const ActionTunnel& t2,
               double R, double dR, bool textured) {
  const double lo = R - dR;
  const double hi = R + dR;
  auto span = [](const ActionTunnel& t, const TunnelSegment& s) {
    return std::minmax(t.path[s.first].r, t.path[s.second].r);
  };
  auto push = [&](const ActionTunnel& t, int seg, std::uint8_t tag, bool tex, int prio,
                  double clo, double chi) {
    PaintItem it;
    it.tunnel = &t;
    it.segment = seg;
    it.tag = tag;
    it.textured = tex;
    it.priority = prio;
    it.range = segment_range(t, t.segments[seg]);
    it.clip_lo = clo;
    it.clip_hi = chi;
    items.push_back(it);
  };
  for (std::size_t k = 0; k < t1.segments.size(); ++k) {
    const auto [a, b] = span(t1, t1.segments[k]);
    if (a < lo) push(t1, static_cast<int>(k), kTag1, textured, 2, -kInf, lo);
    if (dR > 0 && a < hi && b > lo) push(t1, static_cast<int>(k), kTagBand, false, 0, lo, hi);
  }
  for (std::size_t k = 0; k < t2.segments.size(); ++k) {
    const auto [a, b] = span(t2, t2.segments[k]);
    if (b > hi) push(t2, static_cast<int>(k), kTag2, textured, 1, hi, kInf);
    if (dR > 0 && a < hi && b > lo) push(t2, static_cast<int>(k), kTagBand, false, 0, lo, hi);
  }
}

}  // namespace

CompositeResult compose(const ActionTunnel& t1, const ActionTunnel& t2,
                        const TransitionSpec& spec, const RectifiedCamera& target) {
  spec.validate();
  const ActionTunnel t2m = transform_tunnel(t2, spec.align, t1.frame);
  std::vector<PaintItem> items;
  add_items(items, t1, t2m, spec.R, spec.dR, true);
  const bool any_tunnel = std::any_of(items.begin(), items.end(),
                                      [](const PaintItem& i) { return i.tag != kTagBand; });
  if (!any_tunnel) throw Error(ErrorCode::kDegenerate, "both tunnel segments are empty");

  const Raster main = paint(items, target);
  const Projection full = project_tunnel(t1, target);

  const int W = target.width, H = target.height;
  CompositeResult out{Image(H, W, cv::Vec3f(0, 0, 0)), Mask(H, W, uchar{0}),
                      cv::Mat1b(H, W, uchar{0}), Mask(H, W, uchar{255})};
  const bool has_bg = !t1.source_image.empty() && t1.source_image.rows == H &&
                      t1.source_image.cols == W;
  if (has_bg && !t1.source_valid.empty()) out.valid = t1.source_valid.clone();
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      Provenance p;
      switch (main.tag(y, x)) {
        case kTag1: p = Provenance::kTunnel1; break;
        case kTag2: p = Provenance::kTunnel2; break;
        case kTagBand: p = Provenance::kMissing; break;
        default: p = full.coverage(y, x) ? Provenance::kMissing : Provenance::kBackground;
      }
      out.provenance(y, x) = static_cast<uchar>(p);
      if (p == Provenance::kMissing) {
        out.missing(y, x) = 255;
      } else if (p == Provenance::kBackground) {
        if (has_bg) out.image(y, x) = t1.source_image(y, x);
      } else {
        out.image(y, x) = main.image(y, x);
      }
    }
  }
  return out;
}

TrainingPair make_training_pair(const SceneBundle& bundle, const HeightMap& map,
                                const TunnelParams& params, double R, double dR) {
  return make_training_pair(build_tunnel(bundle, map, params), R, dR);
}

TrainingPair make_training_pair(const ActionTunnel& tunnel, double R, double dR) {
  const CompositeResult c = compose(tunnel, tunnel, TransitionSpec{R, dR, {}});
  const bool any = std::any_of(c.provenance.begin(), c.provenance.end(), [](uchar p) {
    return p == static_cast<uchar>(Provenance::kTunnel1) ||
           p == static_cast<uchar>(Provenance::kTunnel2);
  });
  if (!any) throw Error(ErrorCode::kDegenerate, "band removes the entire tunnel");
  TrainingPair pair;
  pair.masked = c.image;
  pair.target = tunnel.source_image.clone();
  pair.valid = c.valid;
  pair.band = c.missing;
  pair.R = R;
  pair.dR = dR;
  return pair;
}

std::pair<double, double> sample_transition(const ActionTunnel& tunnel, std::uint64_t seed) {
  const auto [lo, hi] = path_range(tunnel);
  std::mt19937_64 rng(seed);
  const double span = hi - lo;
  std::uniform_real_distribution<double> r(lo + 0.2 * span, hi - 0.2 * span);
  std::uniform_real_distribution<double> d(0.05, 0.4);
  const double R = r(rng);
  return {R, d(rng)};
}

double band_fraction(const ActionTunnel& tunnel, double R, double dR,
                     const RectifiedCamera& target, int stride) {
  std::vector<PaintItem> items;
  add_items(items, tunnel, tunnel, R, dR, false);
  const Raster r = paint(items, target, stride);
  const auto band = std::count(r.tag.begin(), r.tag.end(), uchar{kTagBand});
  return static_cast<double>(band) / static_cast<double>(r.tag.total());
}

cv::Mat3b provenance_image(const cv::Mat1b& provenance) {
  static const cv::Vec3b kPalette[] = {{0, 0, 0}, {66, 135, 245}, {245, 166, 35}, {255, 0, 255}};
  cv::Mat3b out(provenance.size());
  for (int y = 0; y < provenance.rows; ++y) {
    for (int x = 0; x < provenance.cols; ++x) out(y, x) = kPalette[std::min<int>(provenance(y, x), 3)];
  }
  return out;
}

void export_composite(const CompositeResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_png(dir / "composite.png", to_u8(result.image));
  write_png(dir / "mask.png", result.missing);
  write_png(dir / "provenance.png", provenance_image(result.provenance));
}

void export_training_pair(const TrainingPair& pair, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_png(dir / "masked.png", to_u8(pair.masked));
  write_png(dir / "target.png", to_u8(pair.target));
  write_png(dir / "mask.png", pair.valid);
}

}  // namespace ivp
