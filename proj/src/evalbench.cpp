#include "ivp/evalbench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <opencv2/imgproc.hpp>

#include "ivp/error.hpp"
#include "ivp/image_io.hpp"
#include "ivp/parallel.hpp"

namespace ivp {

double ncc(const Image& a, const Image& b, const Mask& mask) {
  if (a.size() != b.size() || a.size() != mask.size())
    throw Error(ErrorCode::kDimensionMismatch, "ncc inputs differ in size");
  std::vector<cv::Point> pts;
  cv::findNonZero(mask, pts);
  if (pts.empty()) throw Error(ErrorCode::kInvalidArgument, "ncc over an empty mask");
  if (pts.size() < 2) throw Error(ErrorCode::kInvalidArgument, "ncc needs at least 2 masked pixels");
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    double ma = 0.0, mb = 0.0;
    for (const auto& p : pts) {
      ma += a(p)[c];
      mb += b(p)[c];
    }
    ma /= double(pts.size());
    mb /= double(pts.size());
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (const auto& p : pts) {
      const double da = a(p)[c] - ma, db = b(p)[c] - mb;
      saa += da * da;
      sbb += db * db;
      sab += da * db;
    }
    if (std::sqrt(saa) < 1e-12 || std::sqrt(sbb) < 1e-12) continue;
    total += std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  }
  return total / 3.0;
}

const char* to_string(Method m) {
  switch (m) {
    case Method::kPaste2d: return "paste2d";
    case Method::kFill2d: return "fill2d";
    case Method::kPaste3d: return "paste3d";
    case Method::kFill3d: return "fill3d";
    case Method::kBox3d: return "box3d";
    case Method::kOurs: return "ours";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  for (const Method m : kAllMethods)
    if (s == to_string(m)) return m;
  throw Error(ErrorCode::kInvalidArgument, "unknown method '" + s + "'");
}

std::vector<Method> parse_methods(const std::string& csv) {
  std::vector<Method> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "all") {
      out.assign(std::begin(kAllMethods), std::end(kAllMethods));
      continue;
    }
    out.push_back(method_from_string(item));
  }
  if (out.empty()) throw Error(ErrorCode::kInvalidArgument, "empty method list");
  return out;
}

const char* to_string(MaskPolicy p) {
  return p == MaskPolicy::kTunnelBand ? "tunnel-band" : "centered-disk";
}

MaskPolicy mask_policy_from_string(const std::string& s) {
  if (s == "tunnel-band") return MaskPolicy::kTunnelBand;
  if (s == "centered-disk") return MaskPolicy::kCenteredDisk;
  throw Error(ErrorCode::kInvalidArgument, "unknown mask policy '" + s + "'");
}

// ---------------------------------------------------------------------------
// Masks

cv::Mat1d ground_range(const SceneBundle& bundle) {
  const CameraModel& cam = bundle.camera;
  const Mat3 m = [&] {
    Mat3 to_local;
    to_local.row(0) = bundle.frame.gx.transpose();
    to_local.row(1) = bundle.frame.gy.transpose();
    to_local.row(2) = bundle.frame.gz.transpose();
    return Mat3(to_local * cam.R.transpose() * cam.K.inverse());
  }();
  const Vec3 c_local = bundle.frame.to_local(cam.C);
  cv::Mat1d out(bundle.depth.size(), std::numeric_limits<double>::infinity());
  for (int y = 0; y < out.rows; ++y) {
    for (int x = 0; x < out.cols; ++x) {
      const float d = bundle.depth(y, x);
      if (!depth_valid(d)) continue;
      const Vec3 p = m * Vec3(x * d, y * d, d) + c_local;
      out(y, x) = std::hypot(p.x(), p.y());
    }
  }
  return out;
}

namespace {

void check_fraction(double f) {
  if (!(f > 0.0 && f < 1.0)) throw Error(ErrorCode::kInvalidArgument, "mask fraction must be in (0, 1)");
}

}  // namespace

TrialMask range_mask(const SceneBundle& present, double fraction) {
  check_fraction(fraction);
  const cv::Mat1d range = ground_range(present);
  std::vector<double> v(range.begin(), range.end());
  const std::size_t k = std::min(v.size() - 1, std::size_t(std::floor((1.0 - fraction) * double(v.size()))));
  std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(k), v.end());
  const double thr = v[k];
  TrialMask t;
  t.mask = range > thr;
  t.fraction = double(cv::countNonZero(t.mask)) / double(t.mask.total());
  t.R = std::log(thr);
  return t;
}

TrialMask disk_mask(int width, int height, double fraction) {
  check_fraction(fraction);
  TrialMask t;
  t.mask = Mask(height, width, uchar(0));
  const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
  const double r2 = fraction * width * height / std::numbers::pi;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r2) t.mask(y, x) = 255;
  t.fraction = double(cv::countNonZero(t.mask)) / double(t.mask.total());
  t.R = std::numeric_limits<double>::quiet_NaN();
  return t;
}

TrialMask make_mask(MaskPolicy policy, const SceneBundle& present, double fraction) {
  if (policy == MaskPolicy::kTunnelBand) return range_mask(present, fraction);
  return disk_mask(present.rgb.cols, present.rgb.rows, fraction);
}

// ---------------------------------------------------------------------------
// Methods

namespace {

bool sample(const Image& img, double x, double y, cv::Vec3f& out) {
  // Coordinates within 1e-6 of a pixel centre read that pixel exactly.
  const double rx = std::round(x), ry = std::round(y);
  if (std::abs(x - rx) < 1e-6) x = rx;
  if (std::abs(y - ry) < 1e-6) y = ry;
  if (x < 0.0 || y < 0.0 || x > img.cols - 1 || y > img.rows - 1) return false;
  const int x0 = int(std::floor(x)), y0 = int(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  if (fx == 0.0 && fy == 0.0) {
    out = img(y0, x0);
    return true;
  }
  const int x1 = std::min(x0 + 1, img.cols - 1), y1 = std::min(y0 + 1, img.rows - 1);
  const cv::Vec3f a = img(y0, x0) * float((1 - fx) * (1 - fy)) + img(y0, x1) * float(fx * (1 - fy));
  const cv::Vec3f b = img(y1, x0) * float((1 - fx) * fy) + img(y1, x1) * float(fx * fy);
  out = a + b;
  return true;
}

// Fills whatever is still unknown inside M_f.
Image finish(Image recon, const Mask& todo, const MethodOptions& options) {
  if (cv::countNonZero(todo) == 0) return recon;
  return fill_diffusion(recon, todo, options.fill);
}

void check_later(const PresentView& p, const SceneBundle& later) {
  if (later.rgb.size() != p.image.size())
    throw Error(ErrorCode::kDimensionMismatch, "frames differ in size");
}

Image paste2d(const PresentView& p, const SceneBundle& later) {
  Image out = p.image.clone();
  later.rgb_float().copyTo(out, p.mask);
  return out;
}

// Rectification that ignores the walking direction: g_y is the camera's
// optical axis projected on the ground.
Mat3 heading_rectification(const CameraModel& cam, const GroundFrame& frame) {
  const Vec3 f = cam.R.row(2).transpose();
  Vec3 gy = f - f.dot(frame.gz) * frame.gz;
  if (gy.norm() < 1e-9) gy = frame.gy;
  gy.normalize();
  const Vec3 gx = gy.cross(frame.gz).normalized();
  Mat3 rb;
  rb.row(0) = gx.transpose();
  rb.row(1) = -frame.gz.transpose();
  rb.row(2) = gy.transpose();
  return rb;
}

// Later frame warped into the present view by the rotation-only homography
// through the heading-rectified views; exact for content at infinity.
// `valid` marks masked pixels that landed inside the later frame.
Image rotation_transfer(const PresentView& p, const SceneBundle& later, Mask& valid) {
  const CameraModel& a = p.bundle->camera;
  const CameraModel& b = later.camera;
  const Mat3 ha = heading_rectification(a, p.bundle->frame);
  const Mat3 hb = heading_rectification(b, later.frame);
  // present pixel -> present rectified -> same rectified pixel in the later
  // view -> later pixel
  const Mat3 h = b.K * b.R * hb.transpose() * ha * a.R.transpose() * a.K.inverse();
  const Image src = later.rgb_float();
  Image out = p.image.clone();
  valid = Mask(p.mask.size(), uchar(0));
  for (int y = 0; y < out.rows; ++y) {
    for (int x = 0; x < out.cols; ++x) {
      if (!p.mask(y, x)) continue;
      const Vec3 q = h * Vec3(x, y, 1.0);
      cv::Vec3f c;
      if (q.z() > 0.0 && sample(src, q.x() / q.z(), q.y() / q.z(), c)) {
        out(y, x) = c;
        valid(y, x) = 255;
      }
    }
  }
  return out;
}

Image paste3d(const PresentView& p, const SceneBundle& later, const MethodOptions& options) {
  Mask valid;
  Image out = rotation_transfer(p, later, valid);
  return finish(out, p.mask & ~valid, options);
}

Image fill3d(const PresentView& p, const MethodOptions& options) {
  const SceneBundle& s = *p.bundle;
  const WarpResult rect = rectify_image(p.image, s.camera, s.frame);
  const Mask mrect = rectify_mask(p.mask, s.camera, s.frame, 255);
  const Mask known = rect.valid & ~mrect;
  if (cv::countNonZero(known) == 0) return finish(p.image.clone(), p.mask, options);
  const Image filled = fill_diffusion(rect.image, ~known, options.fill);
  const WarpResult back = unrectify_image(filled, s.camera, s.frame);
  Image out = p.image.clone();
  back.image.copyTo(out, p.mask & back.valid);
  return finish(out, p.mask & ~back.valid, options);
}

Image box3d(const PresentView& p, const SceneBundle& later, const MethodOptions& options) {
  const SceneBundle& s = *p.bundle;
  const CameraModel& cam = s.camera;
  const GroundFrame& g = s.frame;
  Vec3 f = cam.R.row(2).transpose();
  f = (f - f.dot(g.gz) * g.gz).normalized();
  const Vec3 lat = g.gz.cross(f);  // towards the left

  // Far wall at the median forward distance of non-ground points.
  std::vector<double> fwd;
  const Mat3 kinv = cam.K.inverse();
  const Mat3 rt = cam.R.transpose();
  for (int y = 0; y < s.depth.rows; ++y) {
    for (int x = 0; x < s.depth.cols; ++x) {
      const float d = s.depth(y, x);
      if (!depth_valid(d)) continue;
      const Vec3 X = cam.C + rt * (kinv * Vec3(x * d, y * d, d));
      if (g.gz.dot(X - g.origin) > 0.1) fwd.push_back(f.dot(X - cam.C));
    }
  }
  double dmed = 10.0;
  if (!fwd.empty()) {
    std::nth_element(fwd.begin(), fwd.begin() + std::ptrdiff_t(fwd.size() / 2), fwd.end());
    dmed = std::max(0.5, fwd[fwd.size() / 2]);
  }
  auto wall_offset = [&](double u) {
    const Vec3 d = cam.pixel_ray(u, cam.K(1, 2));
    const double t = dmed / std::max(1e-9, f.dot(d));
    return lat.dot(d * t);
  };
  const double s_left = std::max(0.05, wall_offset(0.0));
  const double s_right = std::min(-0.05, wall_offset(cam.width - 1.0));
  const double cam_height = g.gz.dot(cam.C - g.origin);

  struct Face {
    Vec3 n;
    double b;
  };
  const Face faces[] = {{-g.gz, cam_height}, {f, dmed}, {lat, s_left}, {-lat, -s_right}};

  const Image src = later.rgb_float();
  const CameraModel& lc = later.camera;
  Image out = p.image.clone();
  Mask todo(p.mask.size(), uchar(0));
  for (int y = 0; y < out.rows; ++y) {
    for (int x = 0; x < out.cols; ++x) {
      if (!p.mask(y, x)) continue;
      const Vec3 d = cam.pixel_ray(x, y);
      double t = std::numeric_limits<double>::infinity();
      for (const Face& fc : faces) {
        const double nd = fc.n.dot(d);
        if (nd > 1e-12) t = std::min(t, fc.b / nd);
      }
      cv::Vec3f c;
      bool ok = false;
      if (std::isfinite(t)) {
        const Vec3 q = lc.K * lc.to_camera(cam.C + t * d);
        ok = q.z() > 1e-9 && sample(src, q.x() / q.z(), q.y() / q.z(), c);
      }
      if (ok) out(y, x) = c;
      else todo(y, x) = 255;
    }
  }
  return finish(out, todo, options);
}

Image ours(const PresentView& p, const SceneBundle& later, const MethodOptions& options) {
  const SceneBundle& s = *p.bundle;
  const HeightMap map2 = build_height_map(later, options.grid, options.map_options);
  const ActionTunnel t2 = build_tunnel(later, map2, options.tunnel);
  const RigidGround align = relative_ground_transform(later.frame, s.frame);
  // Transition where the later tunnel begins: everything it covers comes from
  // the later frame, nearer geometry from the present one.
  const ActionTunnel moved = transform_tunnel(t2, align, s.frame);
  TransitionSpec spec;
  spec.R = path_range(moved).first;
  spec.dR = 0.0;
  spec.align = align;
  const CompositeResult comp = compose(p.tunnel, t2, spec);

  Image covered(comp.image.size(), cv::Vec3f(0, 0, 0));
  for (int y = 0; y < covered.rows; ++y)
    for (int x = 0; x < covered.cols; ++x) {
      const auto tag = Provenance(comp.provenance(y, x));
      if (tag == Provenance::kTunnel1 || tag == Provenance::kTunnel2) covered(y, x) = cv::Vec3f(1, 1, 1);
    }
  const WarpResult img = unrectify_image(comp.image, s.camera, s.frame);
  const WarpResult cov = unrectify_image(covered, s.camera, s.frame);
  // Background pixels of the composite would come from the present view,
  // which is masked here; take them from the later frame instead.
  Mask bg_valid;
  Image out = rotation_transfer(p, later, bg_valid);
  Mask todo(p.mask.size(), uchar(0));
  for (int y = 0; y < out.rows; ++y) {
    for (int x = 0; x < out.cols; ++x) {
      if (!p.mask(y, x)) continue;
      const cv::Vec3f c = cov.image(y, x);
      if (cov.valid(y, x) && c[0] > 0.999f) out(y, x) = img.image(y, x);
      else if (!bg_valid(y, x)) todo(y, x) = 255;
    }
  }
  return finish(out, todo, options);
}

}  // namespace

PresentView prepare_present(const SceneBundle& present, const Mask& mask, const MethodOptions& options) {
  present.validate();
  if (mask.size() != present.rgb.size())
    throw Error(ErrorCode::kDimensionMismatch, "mask and frame differ in size");
  PresentView p;
  p.bundle = &present;
  p.image = present.rgb_float();
  p.mask = mask != 0;
  // The mask hides appearance only; geometry uses the full depth.
  try {
    p.map = build_height_map(present, options.grid, options.map_options);
    const WarpResult rect = rectify_image(p.image, present.camera, present.frame);
    const Mask known = rect.valid & ~rectify_mask(p.mask, present.camera, present.frame, 255);
    p.tunnel = build_tunnel(rect.image, known, present.camera, present.frame, present.trajectory, p.map,
                            options.tunnel);
  } catch (const Error&) {
    p.tunnel = ActionTunnel{};
  }
  return p;
}

Image reconstruct(Method method, const PresentView& present, const SceneBundle& later,
                  const MethodOptions& options) {
  if (cv::countNonZero(present.mask) == 0) return present.image.clone();
  if (method != Method::kFill2d && method != Method::kFill3d) check_later(present, later);
  switch (method) {
    case Method::kPaste2d: return paste2d(present, later);
    case Method::kFill2d: return fill_diffusion(present.image, present.mask, options.fill);
    case Method::kPaste3d: return paste3d(present, later, options);
    case Method::kFill3d: return fill3d(present, options);
    case Method::kBox3d: return box3d(present, later, options);
    case Method::kOurs:
      if (present.tunnel.empty())
        throw Error(ErrorCode::kDegenerate, "present view has no tunnel outside the mask");
      return ours(present, later, options);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown method");
}

Image reconstruct(Method method, const SceneBundle& present, const SceneBundle& later, const Mask& mask,
                  const MethodOptions& options) {
  const PresentView p = prepare_present(present, mask, options);
  return reconstruct(method, p, later, options);
}

// ---------------------------------------------------------------------------
// Sweeps

void EvalConfig::validate() const {
  for (const int dt : dts)
    if (dt < 0) throw Error(ErrorCode::kValidation, "frame offsets must be >= 0");
  for (const double f : fractions)
    if (!(f > 0.0 && f < 1.0)) throw Error(ErrorCode::kValidation, "fractions must be in (0, 1)");
  if (methods.empty()) throw Error(ErrorCode::kValidation, "no methods selected");
  if (!(mask_fraction > 0.0 && mask_fraction < 1.0))
    throw Error(ErrorCode::kValidation, "mask fraction must be in (0, 1)");
  if (missing_dt < 0) throw Error(ErrorCode::kValidation, "missing_dt must be >= 0");
  if (selector != "all" && selector != "indoor" && selector != "outdoor")
    throw Error(ErrorCode::kValidation, "selector must be all, indoor or outdoor");
}

const SweepRow* SweepReport::find(Method m, double param) const {
  for (const auto& r : rows)
    if (r.method == m && r.param == param) return &r;
  return nullptr;
}

EvalCorpus load_eval_corpus(const std::filesystem::path& root) {
  const CorpusManifest man = load_manifest(root);
  EvalCorpus c;
  c.root = root;
  c.sequences = man.sequences;
  if (c.sequences.empty()) {
    // Single bundles form one-frame sequences.
    for (const auto& id : man.ids) c.sequences[id][0] = id;
  }
  return c;
}

namespace {

struct Job {
  double param;
  int dt;
  TrialMask mask;
};

std::string param_text(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

void dump_trial(const std::filesystem::path& dir, const std::string& seq, Method m, double param,
                const Image& recon, const PresentView& p) {
  std::filesystem::create_directories(dir);
  const std::string stem = seq + "_" + to_string(m) + "_" + param_text(param);
  Image masked = p.image.clone();
  masked.setTo(cv::Vec3f(0, 0, 0), p.mask);
  write_png(dir / (stem + "_input.png"), to_u8(masked));
  write_png(dir / (stem + "_mask.png"), p.mask);
  write_png(dir / (stem + "_recon.png"), to_u8(recon));
}

// Runs one sequence: the present frame is offset 0; every job has its own
// mask and later-frame offset.
std::vector<TrialResult> run_sequence(const EvalCorpus& corpus, const std::string& seq,
                                      const std::map<int, std::string>& frames,
                                      const std::function<std::vector<Job>(const SceneBundle&)>& jobs_for,
                                      const EvalConfig& config) {
  std::vector<TrialResult> out;
  auto skip_all = [&](const std::vector<Job>& jobs, const std::string& why) {
    for (const auto& j : jobs)
      for (const Method m : config.methods) out.push_back({seq, m, j.param, std::nullopt, why});
  };
  const auto it0 = frames.find(0);
  if (it0 == frames.end()) return out;
  const SceneBundle present = load_bundle(corpus.root / it0->second);
  const std::vector<Job> jobs = jobs_for(present);

  // Jobs sharing a mask share the present view.
  std::map<const Job*, PresentView> views;
  for (const Job& job : jobs) {
    if (job.mask.fraction <= 0.0 || cv::countNonZero(job.mask.mask) < 2) {
      skip_all({job}, "mask has fewer than 2 pixels");
      continue;
    }
    const auto fit = frames.find(job.dt);
    if (fit == frames.end()) {
      skip_all({job}, "no frame at offset " + std::to_string(job.dt));
      continue;
    }
    const SceneBundle later = job.dt == 0 ? present : load_bundle(corpus.root / fit->second);
    const PresentView* view = nullptr;
    for (const auto& [k, v] : views)
      if (cv::countNonZero(k->mask.mask != job.mask.mask) == 0) view = &v;
    if (!view) view = &(views[&job] = prepare_present(present, job.mask.mask, config.options));
    for (const Method m : config.methods) {
      TrialResult r{seq, m, job.param, std::nullopt, ""};
      try {
        const Image recon = reconstruct(m, *view, later, config.options);
        r.eta = ncc(recon, view->image, view->mask);
        if (!config.dump_dir.empty()) dump_trial(config.dump_dir, seq, m, job.param, recon, *view);
      } catch (const Error& e) {
        r.skipped = e.what();
      }
      out.push_back(r);
    }
  }
  return out;
}

SweepReport aggregate(std::vector<TrialResult> trials, const std::string& name,
                      const std::vector<Method>& methods, const std::vector<double>& params) {
  SweepReport rep;
  rep.param_name = name;
  for (const Method m : methods) {
    for (const double p : params) {
      std::vector<double> v;
      for (const auto& t : trials)
        if (t.method == m && t.param == p && t.eta) v.push_back(*t.eta);
      if (v.empty()) continue;
      SweepRow row{m, p, 0.0, 0.0, int(v.size())};
      std::sort(v.begin(), v.end());
      const std::size_t n = v.size();
      row.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / double(n);
      double var = 0.0;
      for (const double x : v) var += (x - mean) * (x - mean);
      row.stddev = std::sqrt(var / double(n));
      rep.rows.push_back(row);
    }
  }
  rep.trials = std::move(trials);
  if (rep.rows.empty()) throw Error(ErrorCode::kNotFound, "no eligible pairs");
  return rep;
}

std::vector<std::pair<std::string, std::map<int, std::string>>> selected(const EvalCorpus& corpus,
                                                                         const EvalConfig& config) {
  std::vector<std::pair<std::string, std::map<int, std::string>>> out;
  // Synthetic corpora are all indoor scenes.
  if (config.selector == "outdoor") return out;
  for (const auto& kv : corpus.sequences) out.push_back(kv);
  return out;
}

std::vector<TrialResult> run_all(const EvalCorpus& corpus, const EvalConfig& config,
                                 const std::function<std::vector<Job>(const SceneBundle&)>& jobs_for) {
  const auto seqs = selected(corpus, config);
  std::vector<std::vector<TrialResult>> per(seqs.size());
  parallel_for(seqs.size(), [&](std::size_t i) {
    per[i] = run_sequence(corpus, seqs[i].first, seqs[i].second, jobs_for, config);
  });
  std::vector<TrialResult> all;
  for (auto& v : per) all.insert(all.end(), v.begin(), v.end());
  return all;
}

}  // namespace

SweepReport run_sweep(const EvalCorpus& corpus, const EvalConfig& config) {
  config.validate();
  if (config.dts.empty()) throw Error(ErrorCode::kInvalidArgument, "empty frame offset list");
  auto jobs_for = [&](const SceneBundle& present) {
    const TrialMask mask = make_mask(config.policy, present, config.mask_fraction);
    std::vector<Job> jobs;
    for (const int dt : config.dts) {
      Job j{double(dt), dt, mask};
      if (mask.fraction <= config.min_mask_fraction) j.mask.fraction = 0.0;
      jobs.push_back(j);
    }
    return jobs;
  };
  std::vector<double> params(config.dts.begin(), config.dts.end());
  return aggregate(run_all(corpus, config, jobs_for), "dt", config.methods, params);
}

SweepReport missing_data_sweep(const EvalCorpus& corpus, const EvalConfig& config) {
  config.validate();
  if (config.fractions.empty()) throw Error(ErrorCode::kInvalidArgument, "empty fraction list");
  auto jobs_for = [&](const SceneBundle& present) {
    std::vector<Job> jobs;
    for (const double f : config.fractions)
      jobs.push_back({f, config.missing_dt, make_mask(MaskPolicy::kCenteredDisk, present, f)});
    return jobs;
  };
  return aggregate(run_all(corpus, config, jobs_for), "fraction", config.methods, config.fractions);
}

std::string format_cell(double median, double stddev) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << median << "(" << stddev << ")";
  return ss.str();
}

std::string format_table(const SweepReport& report) {
  std::vector<double> params;
  std::vector<Method> methods;
  for (const auto& r : report.rows) {
    if (std::find(params.begin(), params.end(), r.param) == params.end()) params.push_back(r.param);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  std::ostringstream ss;
  ss << std::left << std::setw(10) << "method";
  for (const double p : params) ss << std::setw(14) << (report.param_name + "=" + param_text(p));
  ss << "\n";
  for (const Method m : methods) {
    ss << std::setw(10) << to_string(m);
    for (const double p : params) {
      const SweepRow* r = report.find(m, p);
      ss << std::setw(14) << (r ? format_cell(r->median, r->stddev) : std::string("-"));
    }
    ss << "\n";
  }
  return ss.str();
}

std::string to_csv(const SweepReport& report) {
  std::ostringstream ss;
  ss << "method," << report.param_name << ",median,std,n\n";
  ss << std::setprecision(6);
  for (const auto& r : report.rows)
    ss << to_string(r.method) << "," << param_text(r.param) << "," << r.median << "," << r.stddev << ","
       << r.n << "\n";
  return ss.str();
}

void write_csv(const SweepReport& report, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  f << to_csv(report);
  if (!f) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace ivp
