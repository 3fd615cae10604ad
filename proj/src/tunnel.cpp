#include "ivp/tunnel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ivp/error.hpp"

namespace ivp {

void TunnelParams::validate() const {
  if (!(h_max > 0.0) || !(alpha > 0.0) || !(lambda_cap > 0.0) || !(lambda_step > 0.0)) {
    throw Error(ErrorCode::kValidation, "tunnel parameters must be positive");
  }
  if (!(lambda_step < lambda_cap)) {
    throw Error(ErrorCode::kValidation, "lambda step must be below lambda cap");
  }
  if (tex_u < 2 || tex_v < 2) throw Error(ErrorCode::kValidation, "texture needs >= 2 nodes per axis");
}

const char* to_string(Surface s) {
  switch (s) {
    case Surface::kFloor: return "floor";
    case Surface::kCeiling: return "ceiling";
    case Surface::kLeft: return "left";
    case Surface::kRight: return "right";
  }
  return "?";
}

std::size_t SurfaceTexture::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

bool ActionTunnel::empty() const {
  for (const auto& seg : segments) {
    for (const auto& tex : seg.textures) {
      if (tex.valid_count() > 0) return false;
    }
  }
  return true;
}

bool collapsed(const ActionTunnel& tunnel, const TunnelSegment& seg) {
  return tunnel.sections[seg.first].degenerate || tunnel.sections[seg.second].degenerate;
}

std::array<Vec3, 4> surface_corners(const ActionTunnel& tunnel, const TunnelSegment& seg,
                                    Surface s) {
  const CrossSection& a = tunnel.sections[seg.first];
  const CrossSection& b = tunnel.sections[seg.second];
  auto L = [](const ProxemicPoint& p) { return proxemic_to_local(p); };
  switch (s) {
    case Surface::kFloor: return {L(a.b1), L(a.b2), L(b.b1), L(b.b2)};
    case Surface::kCeiling: return {L(a.c1), L(a.c2), L(b.c1), L(b.c2)};
    case Surface::kLeft: return {L(a.b1), L(a.c1), L(b.b1), L(b.c1)};
    case Surface::kRight: return {L(a.b2), L(a.c2), L(b.b2), L(b.c2)};
  }
  return {};
}

namespace {

Vec2 tangent_at(const std::vector<Vec2>& g, std::size_t i) {
  const std::size_t k = i + 1 < g.size() ? i : i - 1;
  return (g[k + 1] - g[k]).normalized();
}

ProxemicPoint ground_proxemic(const Vec2& p) {
  ProxemicPoint q = local_to_proxemic(Vec3(p.x(), p.y(), 0.0));
  q.h = 0.0;
  return q;
}

bool walkable(const HeightMap& map, const Vec2& p, double h_max) {
  const double rho = p.norm();
  if (rho <= kAxisEpsilon) return false;
  return query_height(map, std::log(rho), std::atan2(p.y(), p.x())) < h_max;
}

double march(const HeightMap& map, const Vec2& origin, const Vec2& dir,
             const TunnelParams& params) {
  double best = 0.0;
  for (int k = 1;; ++k) {
    const double lambda = k * params.lambda_step;
    if (!(lambda < params.lambda_cap)) break;
    if (!walkable(map, origin + lambda * dir, params.h_max)) break;
    best = lambda;
  }
  return best;
}

// Bilinear interpolation between the four corners at node fractions.
Vec3 node_position(const std::array<Vec3, 4>& c, double s, double t) {
  const Vec3 e0 = (1 - t) * c[0] + t * c[1];
  const Vec3 e1 = (1 - t) * c[2] + t * c[3];
  return (1 - s) * e0 + s * e1;
}

struct Projected {
  double x = 0, y = 0;
  bool front = false;
};

Projected project_point(const RectifiedCamera& cam, const Vec3& world) {
  const Vec3 q = cam.project(world);
  Projected p;
  if (q.z() > 1e-9) {
    p.front = true;
    p.x = q.x() / q.z();
    p.y = q.y() / q.z();
  }
  return p;
}

bool sample_bilinear(const Image& img, const Mask& valid, double x, double y, cv::Vec3f& out) {
  if (!(x >= 0.0 && y >= 0.0 && x <= img.cols - 1 && y <= img.rows - 1)) return false;
  const int x0 = std::min(static_cast<int>(x), img.cols - 1);
  const int y0 = std::min(static_cast<int>(y), img.rows - 1);
  const int x1 = std::min(x0 + 1, img.cols - 1);
  const int y1 = std::min(y0 + 1, img.rows - 1);
  if (!valid.empty() && (!valid(y0, x0) || !valid(y0, x1) || !valid(y1, x0) || !valid(y1, x1))) {
    return false;
  }
  const float ax = static_cast<float>(x - x0);
  const float ay = static_cast<float>(y - y0);
  out = (img(y0, x0) * (1 - ax) + img(y0, x1) * ax) * (1 - ay) +
        (img(y1, x0) * (1 - ax) + img(y1, x1) * ax) * ay;
  return true;
}

}  // namespace

CrossSection cross_section(const HeightMap& map, const Trajectory& traj, std::size_t i,
                           const GroundFrame& frame, const TunnelParams& params) {
  if (traj.size() < 2) throw Error(ErrorCode::kInvalidArgument, "trajectory needs F >= 2");
  if (i >= traj.size()) throw Error(ErrorCode::kInvalidArgument, "section index out of range");
  const auto g = traj.ground_points();
  const Vec2 p = g[i];
  const Vec2 v = tangent_at(g, i);
  const Vec2 left(-v.y(), v.x());

  CrossSection cs;
  cs.index = static_cast<int>(i);
  if (!walkable(map, p, params.h_max)) {
    cs.degenerate = true;
  } else {
    cs.lambda1 = march(map, p, left, params);
    cs.lambda2 = march(map, p, -left, params);
  }
  cs.b1 = ground_proxemic(p + cs.lambda1 * left);
  cs.b2 = ground_proxemic(p - cs.lambda2 * left);
  const double dh = params.alpha * frame.height / std::exp(traj[i].r);
  cs.c1 = cs.b1;
  cs.c1.h += dh;
  cs.c2 = cs.b2;
  cs.c2.h += dh;
  return cs;
}

ActionTunnel build_sections(const HeightMap& map, const Trajectory& traj,
                            const GroundFrame& frame, const TunnelParams& params) {
  params.validate();
  traj.validate();
  ActionTunnel t;
  t.frame = frame;
  t.path = traj.points;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    t.sections.push_back(cross_section(map, traj, i, frame, params));
  }
  for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
    TunnelSegment seg;
    seg.first = static_cast<int>(i);
    seg.second = static_cast<int>(i + 1);
    t.segments.push_back(std::move(seg));
  }
  return t;
}

ActionTunnel build_tunnel(const SceneBundle& bundle, const HeightMap& map,
                          const TunnelParams& params) {
  bundle.trajectory.validate();
  const WarpResult rect = rectify_image(bundle.rgb_float(), bundle.camera, bundle.frame);
  return build_tunnel(rect.image, rect.valid, bundle.camera, bundle.frame, bundle.trajectory,
                      map, params);
}

ActionTunnel build_tunnel(const Image& rectified, const Mask& rectified_valid,
                          const CameraModel& camera, const GroundFrame& frame,
                          const Trajectory& traj, const HeightMap& map,
                          const TunnelParams& params) {
  ActionTunnel t = build_sections(map, traj, frame, params);
  t.source = rectified_camera(camera, frame);
  t.source_image = rectified;
  t.source_valid = rectified_valid;
  const int nu = params.tex_u;
  const int nv = params.tex_v;
  for (auto& seg : t.segments) {
    for (Surface s : kSurfaces) {
      const auto corners = surface_corners(t, seg, s);
      SurfaceTexture& tex = seg.textures[static_cast<int>(s)];
      tex.nu = nu;
      tex.nv = nv;
      tex.color.assign(static_cast<std::size_t>(nu) * nv, cv::Vec3f(0, 0, 0));
      tex.valid.assign(static_cast<std::size_t>(nu) * nv, 0);
      if (collapsed(t, seg)) continue;
      for (int u = 0; u < nu; ++u) {
        for (int v = 0; v < nv; ++v) {
          const Vec3 local = node_position(corners, static_cast<double>(u) / (nu - 1),
                                           static_cast<double>(v) / (nv - 1));
          const Projected pr = project_point(t.source, frame.to_world(local));
          if (!pr.front) continue;
          cv::Vec3f c;
          if (!sample_bilinear(rectified, rectified_valid, pr.x, pr.y, c)) continue;
          tex.color[tex.at(u, v)] = c;
          tex.valid[tex.at(u, v)] = 1;
        }
      }
    }
  }
  return t;
}

ActionTunnel transform_tunnel(const ActionTunnel& tunnel, const RigidGround& motion,
                              const GroundFrame& target) {
  ActionTunnel out = tunnel;
  out.frame = target;
  if (motion.is_identity()) return out;
  auto move = [&](ProxemicPoint& p) {
    const double h = p.h;
    const Vec3 local = motion.apply(proxemic_to_local(p));
    p = local_to_proxemic(local);
    if (h == 0.0) p.h = 0.0;
  };
  for (auto& cs : out.sections) {
    move(cs.b1);
    move(cs.b2);
    move(cs.c1);
    move(cs.c2);
  }
  for (auto& p : out.path) move(p);
  return out;
}

double segment_range(const ActionTunnel& tunnel, const TunnelSegment& seg) {
  return 0.5 * (tunnel.path[seg.first].r + tunnel.path[seg.second].r);
}

namespace {

class Painter {
 public:
  Painter(const RectifiedCamera& cam, Raster& out) : cam_(cam), out_(out) {}

  // One surface of one item, projected and ready to paint column by column.
  struct Prepared {
    const PaintItem* item = nullptr;
    int index = -1;
    const SurfaceTexture* tex = nullptr;
    int nu = 0, nv = 0;
    double r_first = 0, r_second = 0;
    std::vector<Projected> nodes;
  };

  bool prepare(const PaintItem& item, int item_index, int stride, Surface s, Prepared& p) {
    const ActionTunnel& t = *item.tunnel;
    const TunnelSegment& seg = t.segments[item.segment];
    if (collapsed(t, seg)) return false;
    const auto corners = surface_corners(t, seg, s);
    const SurfaceTexture* tex = item.textured ? &seg.textures[static_cast<int>(s)] : nullptr;
    if (tex && tex->nu < 2) return false;
    p.item = &item;
    p.index = item_index;
    p.tex = tex;
    if (tex) {
      p.nu = tex->nu;
      p.nv = tex->nv;
    } else {
      p.nu = std::max(2, 32 / std::max(1, stride));
      p.nv = std::max(2, 256 / std::max(1, stride));
    }
    p.r_first = t.path[seg.first].r;
    p.r_second = t.path[seg.second].r;
    p.nodes.resize(static_cast<std::size_t>(p.nu) * p.nv);
    for (int u = 0; u < p.nu; ++u) {
      for (int v = 0; v < p.nv; ++v) {
        const Vec3 local = node_position(corners, static_cast<double>(u) / (p.nu - 1),
                                         static_cast<double>(v) / (p.nv - 1));
        p.nodes[static_cast<std::size_t>(u) * p.nv + v] = project_point(cam_, t.frame.to_world(local));
      }
    }
    return true;
  }

  void paint_column(const Prepared& p, int u) {
    const PaintItem& item = *p.item;
    const SurfaceTexture* tex = p.tex;
    const int nu = p.nu, nv = p.nv;
    const bool clipped = std::isfinite(item.clip_lo) || std::isfinite(item.clip_hi);
    const double ra = p.r_first + (p.r_second - p.r_first) * u / (nu - 1.0);
    const double rb = p.r_first + (p.r_second - p.r_first) * (u + 1) / (nu - 1.0);
    if (clipped && (std::max(ra, rb) <= item.clip_lo || std::min(ra, rb) >= item.clip_hi)) return;
    for (int v = 0; v + 1 < nv; ++v) {
      const std::size_t i00 = static_cast<std::size_t>(u) * nv + v;
      const std::size_t i01 = i00 + 1;
      const std::size_t i10 = i00 + nv;
      const std::size_t i11 = i10 + 1;
      const Projected& p00 = p.nodes[i00];
      const Projected& p01 = p.nodes[i01];
      const Projected& p10 = p.nodes[i10];
      const Projected& p11 = p.nodes[i11];
      if (!p00.front || !p01.front || !p10.front || !p11.front) continue;
      Cell cell;
      cell.tag = item.tag;
      cell.item = p.index;
      if (clipped) {
        cell.clipped = true;
        cell.r0 = ra;
        cell.r1 = rb;
        cell.lo = item.clip_lo;
        cell.hi = item.clip_hi;
      }
      if (tex) {
        if (!tex->valid[i00] || !tex->valid[i01] || !tex->valid[i10] || !tex->valid[i11]) continue;
        cell.c00 = tex->color[i00];
        cell.c01 = tex->color[i01];
        cell.c10 = tex->color[i10];
        cell.c11 = tex->color[i11];
        cell.textured = true;
      }
      // (s, t): s along u, t along v.
      triangle(p00, p10, p11, {0, 0}, {1, 0}, {1, 1}, cell);
      triangle(p00, p11, p01, {0, 0}, {1, 1}, {0, 1}, cell);
    }
  }

 private:
  struct Cell {
    cv::Vec3f c00, c01, c10, c11;
    bool textured = false;
    bool clipped = false;
    double r0 = 0, r1 = 0, lo = 0, hi = 0;
    std::uint8_t tag = 0;
    int item = -1;
  };

  void triangle(const Projected& a, const Projected& b, const Projected& c, Vec2 ta, Vec2 tb,
                Vec2 tc, const Cell& cell) {
    const double area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    if (std::abs(area) < 1e-12) return;
    const double xmin = std::min({a.x, b.x, c.x});
    const double xmax = std::max({a.x, b.x, c.x});
    const double ymin = std::min({a.y, b.y, c.y});
    const double ymax = std::max({a.y, b.y, c.y});
    const int W = out_.image.cols;
    const int Hh = out_.image.rows;
    if (xmax < 0 || ymax < 0 || xmin > W - 1 || ymin > Hh - 1) return;
    const int x0 = std::max(0, static_cast<int>(std::ceil(xmin)));
    const int x1 = std::min(W - 1, static_cast<int>(std::floor(xmax)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(ymin)));
    const int y1 = std::min(Hh - 1, static_cast<int>(std::floor(ymax)));
    const double inv = 1.0 / area;
    constexpr double kEps = -1e-9;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double wa = ((b.x - x) * (c.y - y) - (b.y - y) * (c.x - x)) * inv;
        const double wb = ((c.x - x) * (a.y - y) - (c.y - y) * (a.x - x)) * inv;
        const double wc = 1.0 - wa - wb;
        if (wa < kEps || wb < kEps || wc < kEps) continue;
        const double s = std::clamp(wa * ta.x() + wb * tb.x() + wc * tc.x(), 0.0, 1.0);
        if (cell.clipped) {
          const double r = cell.r0 + s * (cell.r1 - cell.r0);
          if (!(r > cell.lo && r < cell.hi)) continue;
        }
        if (cell.textured) {
          const double t = std::clamp(wa * ta.y() + wb * tb.y() + wc * tc.y(), 0.0, 1.0);
          const float fs = static_cast<float>(s);
          const float ft = static_cast<float>(t);
          out_.image(y, x) = (cell.c00 * (1 - ft) + cell.c01 * ft) * (1 - fs) +
                             (cell.c10 * (1 - ft) + cell.c11 * ft) * fs;
        }
        out_.coverage(y, x) = 255;
        out_.tag(y, x) = cell.tag;
        out_.item(y, x) = cell.item;
      }
    }
  }

  const RectifiedCamera& cam_;
  Raster& out_;
};

}  // namespace

Raster paint(const std::vector<PaintItem>& items, const RectifiedCamera& target,
             int texel_stride) {
  if (target.width <= 0 || target.height <= 0 || !target.K.allFinite() ||
      std::abs(target.K.determinant()) < 1e-12) {
    throw Error(ErrorCode::kDegenerate, "degenerate target camera");
  }
  Raster out{Image(target.height, target.width, cv::Vec3f(0, 0, 0)),
             Mask(target.height, target.width, uchar{0}),
             cv::Mat1b(target.height, target.width, uchar{0}),
             cv::Mat1i(target.height, target.width, -1)};
  std::vector<int> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (items[a].range != items[b].range) return items[a].range > items[b].range;
    return items[a].priority < items[b].priority;
  });
  // Ceiling and walls first; the floor is most often in front. Items at the same range
  // (pieces of one split segment) are interleaved column by column.
  static constexpr Surface kOrder[] = {Surface::kCeiling, Surface::kLeft, Surface::kRight,
                                       Surface::kFloor};
  Painter painter(target, out);
  std::vector<Painter::Prepared> group;
  for (std::size_t g = 0; g < order.size();) {
    std::size_t e = g + 1;
    while (e < order.size() && items[order[e]].range == items[order[g]].range) ++e;
    for (Surface s : kOrder) {
      group.clear();
      int nu = 0;
      for (std::size_t i = g; i < e; ++i) {
        Painter::Prepared p;
        if (!painter.prepare(items[order[i]], order[i], texel_stride, s, p)) continue;
        nu = std::max(nu, p.nu);
        group.push_back(std::move(p));
      }
      for (int u = 0; u + 1 < nu; ++u)
        for (const auto& p : group)
          if (u + 1 < p.nu) painter.paint_column(p, u);
    }
    g = e;
  }
  return out;
}

Projection project_tunnel(const ActionTunnel& tunnel, const RectifiedCamera& target) {
  std::vector<PaintItem> items;
  for (std::size_t s = 0; s < tunnel.segments.size(); ++s) {
    PaintItem it;
    it.tunnel = &tunnel;
    it.segment = static_cast<int>(s);
    it.range = segment_range(tunnel, tunnel.segments[s]);
    items.push_back(it);
  }
  Raster r = paint(items, target);
  return {r.image, r.coverage};
}

void export_tunnel_obj(const ActionTunnel& tunnel, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  f.precision(9);
  f << "# action tunnel, " << tunnel.sections.size() << " sections\n";
  int base = 1;
  for (Surface s : kSurfaces) {
    f << "g " << to_string(s) << "\n";
    for (const auto& seg : tunnel.segments) {
      const auto c = surface_corners(tunnel, seg, s);
      for (const auto& p : c) {
        const Vec3 w = tunnel.frame.to_world(p);
        f << "v " << w.x() << " " << w.y() << " " << w.z() << "\n";
      }
      // corners are a0 b0 a1 b1; walk them as a0 a1 b1 b0
      f << "f " << base << " " << base + 2 << " " << base + 3 << " " << base + 1 << "\n";
      base += 4;
    }
  }
  if (!f) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace ivp
