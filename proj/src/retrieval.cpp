#include "ivp/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>

#include "ivp/error.hpp"
#include "ivp/image_io.hpp"
#include "ivp/parallel.hpp"

namespace ivp {

namespace {

void normalize_block(std::vector<double>& v, std::size_t begin, std::size_t end) {
  double n2 = 0.0;
  for (std::size_t i = begin; i < end; ++i) n2 += v[i] * v[i];
  if (n2 <= 0.0) return;
  const double inv = 1.0 / std::sqrt(n2);
  for (std::size_t i = begin; i < end; ++i) v[i] *= inv;
}

}  // namespace

std::vector<double> visual_feature(const Image& rectified) {
  if (rectified.empty()) throw Error(ErrorCode::kInvalidArgument, "empty image");
  cv::Mat1f gray;
  cv::cvtColor(rectified, gray, cv::COLOR_RGB2GRAY);

  std::vector<double> f(kFeatureLength, 0.0);
  cv::Mat1f thumb;
  cv::resize(gray, thumb, cv::Size(kFeatureGrid, kFeatureGrid), 0, 0, cv::INTER_AREA);
  for (int y = 0; y < kFeatureGrid; ++y)
    for (int x = 0; x < kFeatureGrid; ++x) f[y * kFeatureGrid + x] = thumb(y, x);

  cv::Mat1f gx, gy, mag, ang;
  cv::Sobel(gray, gx, CV_32F, 1, 0, 3, 1.0, 0.0, cv::BORDER_REFLECT);
  cv::Sobel(gray, gy, CV_32F, 0, 1, 3, 1.0, 0.0, cv::BORDER_REFLECT);
  cv::cartToPolar(gx, gy, mag, ang);
  const std::size_t off = kFeatureGrid * kFeatureGrid;
  for (int y = 0; y < gray.rows; ++y) {
    const int cy = std::min(kFeatureCells - 1, y * kFeatureCells / gray.rows);
    for (int x = 0; x < gray.cols; ++x) {
      const int cx = std::min(kFeatureCells - 1, x * kFeatureCells / gray.cols);
      int bin = int(ang(y, x) / (2.0 * CV_PI) * kFeatureBins);
      bin = std::clamp(bin, 0, kFeatureBins - 1);
      f[off + (cy * kFeatureCells + cx) * kFeatureBins + bin] += mag(y, x);
    }
  }

  normalize_block(f, 0, off);
  normalize_block(f, off, f.size());
  double n2 = 0.0;
  for (const double v : f) n2 += v * v;
  if (n2 <= 0.0) {
    // Black image: a flat thumbnail.
    std::fill(f.begin(), f.begin() + off, 1.0 / kFeatureGrid);
    return f;
  }
  const double inv = 1.0 / std::sqrt(n2);
  for (double& v : f) v *= inv;
  return f;
}

double visual_distance(const std::vector<double>& f1, const std::vector<double>& f2) {
  if (f1.size() != f2.size())
    throw Error(ErrorCode::kDimensionMismatch, "feature lengths differ: " + std::to_string(f1.size()) +
                                                   " vs " + std::to_string(f2.size()));
  double d = 0.0;
  for (std::size_t i = 0; i < f1.size(); ++i) d += (f1[i] - f2[i]) * (f1[i] - f2[i]);
  return d;
}

SpatialResult spatial_distance(const HeightMap& phi1, const HeightMap& phi2, int theta_search) {
  if (!(phi1.spec == phi2.spec) || phi1.cells.size() != phi2.cells.size())
    throw Error(ErrorCode::kDimensionMismatch, "height maps use different grids");
  if (theta_search < 0) throw Error(ErrorCode::kInvalidArgument, "theta_search must be >= 0");
  const int R = phi1.cells.rows, T = phi1.cells.cols;
  bool any = false;
  double best = -2.0;
  int best_shift = 0;
  // 0, -1, +1, -2, +2, ... so ties prefer the smallest rotation.
  for (int k = 0; k <= 2 * theta_search; ++k) {
    const int s = (k % 2 == 1) ? -(k + 1) / 2 : k / 2;
    const int j0 = std::max(0, -s), j1 = std::min(T, T - s);
    double sa = 0.0, sb = 0.0;
    long n = 0;
    for (int i = 0; i < R; ++i) {
      const float* a = phi1.cells.ptr<float>(i);
      const float* b = phi2.cells.ptr<float>(i);
      for (int j = j0; j < j1; ++j) {
        if (std::isnan(a[j]) || std::isnan(b[j + s])) continue;
        sa += a[j];
        sb += b[j + s];
        ++n;
      }
    }
    if (n < kMinOverlapCells) continue;
    any = true;
    const double ma = sa / n, mb = sb / n;
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (int i = 0; i < R; ++i) {
      const float* a = phi1.cells.ptr<float>(i);
      const float* b = phi2.cells.ptr<float>(i);
      for (int j = j0; j < j1; ++j) {
        if (std::isnan(a[j]) || std::isnan(b[j + s])) continue;
        const double da = a[j] - ma, db = b[j + s] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
      }
    }
    const double ncc = (saa < 1e-24 || sbb < 1e-24) ? 0.0 : std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
    if (ncc > best) {
      best = ncc;
      best_shift = s;
    }
  }
  if (!any)
    throw Error(ErrorCode::kDegenerate, "height maps share fewer than " +
                                            std::to_string(kMinOverlapCells) +
                                            " known cells at every shift");
  return {1.0 - best, best_shift};
}

MotionResult motion_distance(const std::vector<Vec2>& v1, const std::vector<Vec2>& v2) {
  if (v1.empty() || v2.empty()) throw Error(ErrorCode::kInvalidArgument, "empty vertex set");
  if (v1.size() != v2.size())
    throw Error(ErrorCode::kDimensionMismatch, "vertex counts differ: " + std::to_string(v1.size()) +
                                                   " vs " + std::to_string(v2.size()));
  Vec2 dx = Vec2::Zero();
  for (std::size_t i = 0; i < v1.size(); ++i) dx += v2[i] - v1[i];
  dx /= double(v1.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v1.size(); ++i) d += (v1[i] + dx - v2[i]).squaredNorm();
  return {d, dx};
}

std::vector<Vec2> tunnel_vertices(const HeightMap& map, const Trajectory& trajectory,
                                  const GroundFrame& frame, const DescriptorOptions& options) {
  const Trajectory traj = resample_by_arc_length(trajectory, std::size_t(options.resample_count));
  const ActionTunnel geom = build_sections(map, traj, frame, options.tunnel);
  std::vector<Vec2> v;
  v.reserve(2 * geom.sections.size());
  for (const auto& s : geom.sections) {
    v.push_back(proxemic_to_local(s.b1).head<2>());
    v.push_back(proxemic_to_local(s.b2).head<2>());
  }
  return v;
}

SceneDescriptor describe_with_trajectory(const SceneBundle& bundle, const Trajectory& trajectory,
                                         const DescriptorOptions& options,
                                         const FeatureExtractor& extractor) {
  bundle.validate();
  if (options.resample_count < 2) throw Error(ErrorCode::kInvalidArgument, "resample_count must be >= 2");
  SceneDescriptor d;
  d.id = bundle.id;
  const WarpResult rect = rectify_image(bundle.rgb_float(), bundle.camera, bundle.frame);
  d.feature = extractor(rect.image);
  d.phi = build_height_map(bundle, options.grid, options.map_options);
  d.vertices = tunnel_vertices(d.phi, trajectory, bundle.frame, options);
  return d;
}

SceneDescriptor describe(const SceneBundle& bundle, const DescriptorOptions& options,
                         const FeatureExtractor& extractor) {
  return describe_with_trajectory(bundle, bundle.trajectory, options, extractor);
}

void RetrievalWeights::validate() const {
  if (!(visual >= 0.0 && spatial >= 0.0 && motion >= 0.0))
    throw Error(ErrorCode::kValidation, "retrieval weights must be non-negative");
  if (visual == 0.0 && spatial == 0.0 && motion == 0.0)
    throw Error(ErrorCode::kValidation, "retrieval weights are all zero");
}

RigidGround Match::candidate_to_query() const {
  RigidGround g;
  g.dtheta = -dtheta;
  g.dx = -dx;
  return g;
}

PairDistance pair_distance(const SceneDescriptor& query, const SceneDescriptor& candidate,
                           int theta_search) {
  PairDistance p;
  p.visual = visual_distance(query.feature, candidate.feature);
  const SpatialResult s = spatial_distance(query.phi, candidate.phi, theta_search);
  p.spatial = s.distance;
  p.shift = s.shift;
  p.dtheta = s.shift * query.phi.spec.dtheta();
  // Bring the candidate's vertices into the query's orientation, then solve
  // for the translation.
  const double c = std::cos(-p.dtheta), sn = std::sin(-p.dtheta);
  std::vector<Vec2> rotated(candidate.vertices.size());
  for (std::size_t i = 0; i < rotated.size(); ++i) {
    const Vec2& v = candidate.vertices[i];
    rotated[i] = p.shift == 0 ? v : Vec2(c * v.x() - sn * v.y(), sn * v.x() + c * v.y());
  }
  const MotionResult m = motion_distance(query.vertices, rotated);
  p.motion = m.distance;
  p.dx = m.dx;
  return p;
}

namespace {

double median_or_one(std::vector<double> v) {
  if (v.empty()) return 1.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const double med = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return med > 1e-12 ? med : 1.0;
}

}  // namespace

ComponentScales corpus_scales(const std::vector<SceneDescriptor>& corpus, int max_pairs,
                              int theta_search) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    for (std::size_t j = i + 1; j < corpus.size(); ++j) pairs.emplace_back(i, j);
  if (max_pairs > 0 && pairs.size() > std::size_t(max_pairs)) {
    std::vector<std::pair<std::size_t, std::size_t>> picked;
    for (int k = 0; k < max_pairs; ++k) picked.push_back(pairs[k * pairs.size() / max_pairs]);
    pairs.swap(picked);
  }
  std::vector<PairDistance> d(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t k) {
    d[k] = pair_distance(corpus[pairs[k].first], corpus[pairs[k].second], theta_search);
  });
  std::vector<double> v, s, m;
  for (const auto& p : d) {
    v.push_back(p.visual);
    s.push_back(p.spatial);
    m.push_back(p.motion);
  }
  return {median_or_one(v), median_or_one(s), median_or_one(m)};
}

std::vector<Match> retrieve(const SceneDescriptor& query, const std::vector<SceneDescriptor>& corpus,
                            const RetrievalWeights& weights, int k, const ComponentScales& scales,
                            int theta_search) {
  weights.validate();
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (corpus.empty()) throw Error(ErrorCode::kInvalidArgument, "empty corpus");
  if (!(scales.visual > 0.0 && scales.spatial > 0.0 && scales.motion > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "component scales must be positive");
  std::vector<Match> all(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) {
    const PairDistance p = pair_distance(query, corpus[i], theta_search);
    Match& m = all[i];
    m.id = corpus[i].id;
    m.d_visual = p.visual / scales.visual;
    m.d_spatial = p.spatial / scales.spatial;
    m.d_motion = p.motion / scales.motion;
    m.total = weights.visual * m.d_visual + weights.spatial * m.d_spatial + weights.motion * m.d_motion;
    m.dtheta_cells = p.shift;
    m.dtheta = p.dtheta;
    m.dx = p.dx;
  });
  std::sort(all.begin(), all.end(), [](const Match& a, const Match& b) {
    if (a.total != b.total) return a.total < b.total;
    return a.id < b.id;
  });
  if (all.size() > std::size_t(k)) all.resize(std::size_t(k));
  return all;
}

// ---------------------------------------------------------------------------

RerankResult rerank_by_realism(const std::vector<Match>& matches, const CandidateComposer& composer,
                               const RealismScorer& scorer, int k_prime) {
  if (k_prime < 1) throw Error(ErrorCode::kInvalidArgument, "k' must be >= 1");
  std::vector<std::optional<Match>> scored(matches.size());
  std::vector<std::string> failures(matches.size());
  parallel_for(matches.size(), [&](std::size_t i) {
    try {
      const FilledCandidate fc = composer(matches[i]);
      Match m = matches[i];
      m.realism = scorer(fc.image, fc.missing);
      scored[i] = m;
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });
  RerankResult out;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    if (scored[i]) out.matches.push_back(*scored[i]);
    else out.warnings.push_back({matches[i].id, failures[i]});
  }
  std::stable_sort(out.matches.begin(), out.matches.end(),
                   [](const Match& a, const Match& b) { return *a.realism > *b.realism; });
  if (out.matches.size() > std::size_t(k_prime)) out.matches.resize(std::size_t(k_prime));
  return out;
}

CandidateComposer tunnel_composer(const ActionTunnel& query,
                                  std::function<ActionTunnel(const std::string&)> candidate_tunnel,
                                  const RerankOptions& options) {
  return [&query, candidate_tunnel = std::move(candidate_tunnel), options](const Match& m) {
    const ActionTunnel t2 = candidate_tunnel(m.id);
    TransitionSpec spec;
    spec.R = default_transition(query, t2);
    spec.dR = options.dR;
    spec.align = m.candidate_to_query();
    const CompositeResult c = compose(query, t2, spec);
    return FilledCandidate{fill_diffusion(c.image, c.missing, options.fill), c.missing};
  };
}

RealismScorer proxy_scorer() {
  return [](const Image& image, const Mask& mask) { return proxy_realism(image, mask); };
}

RealismScorer endpoint_scorer(const FillerEndpoint& endpoint) {
  return [endpoint](const Image& image, const Mask& mask) {
    return score_realism(image, mask, endpoint);
  };
}

// ---------------------------------------------------------------------------

const SceneDescriptor* RetrievalIndex::find(const std::string& id) const {
  for (const auto& s : scenes)
    if (s.id == id) return &s;
  return nullptr;
}

RetrievalIndex build_index(const std::vector<SceneBundle>& corpus, const DescriptorOptions& options,
                           const std::map<std::string, std::string>& labels) {
  RetrievalIndex index;
  index.options = options;
  index.labels = labels;
  index.scenes.resize(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) { index.scenes[i] = describe(corpus[i], options); });
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (index.scenes[i].feature.size() != index.scenes.front().feature.size())
      throw Error(ErrorCode::kValidation, "feature length varies across the corpus");
  }
  index.scales = corpus_scales(index.scenes, 256, options.theta_search);
  return index;
}

namespace {

nlohmann::json options_to_json(const DescriptorOptions& o) {
  return {
      {"grid",
       {{"r_min", o.grid.r_min},
        {"r_max", o.grid.r_max},
        {"theta_center", o.grid.theta_center},
        {"theta_max", o.grid.theta_max},
        {"n_r", o.grid.n_r},
        {"n_theta", o.grid.n_theta}}},
      {"map", {{"supersample", o.map_options.supersample}, {"max_depth_ratio", o.map_options.max_depth_ratio}}},
      {"tunnel",
       {{"h_max", o.tunnel.h_max},
        {"alpha", o.tunnel.alpha},
        {"lambda_cap", o.tunnel.lambda_cap},
        {"lambda_step", o.tunnel.lambda_step},
        {"tex_u", o.tunnel.tex_u},
        {"tex_v", o.tunnel.tex_v}}},
      {"resample_count", o.resample_count},
      {"theta_search", o.theta_search},
  };
}

DescriptorOptions options_from_json(const nlohmann::json& j) {
  DescriptorOptions o;
  const auto& g = j.at("grid");
  o.grid.r_min = g.at("r_min");
  o.grid.r_max = g.at("r_max");
  o.grid.theta_center = g.at("theta_center");
  o.grid.theta_max = g.at("theta_max");
  o.grid.n_r = g.at("n_r");
  o.grid.n_theta = g.at("n_theta");
  o.map_options.supersample = j.at("map").at("supersample");
  o.map_options.max_depth_ratio = j.at("map").at("max_depth_ratio");
  const auto& t = j.at("tunnel");
  o.tunnel.h_max = t.at("h_max");
  o.tunnel.alpha = t.at("alpha");
  o.tunnel.lambda_cap = t.at("lambda_cap");
  o.tunnel.lambda_step = t.at("lambda_step");
  o.tunnel.tex_u = t.at("tex_u");
  o.tunnel.tex_v = t.at("tex_v");
  o.resample_count = j.at("resample_count");
  o.theta_search = j.at("theta_search");
  return o;
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& name) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error(ErrorCode::kMalformed, "truncated index " + name);
  return v;
}

}  // namespace

void save_index(const RetrievalIndex& index, const std::filesystem::path& path) {
  nlohmann::json header = {
      {"version", kIndexVersion},
      {"options", options_to_json(index.options)},
      {"scales", {{"visual", index.scales.visual}, {"spatial", index.scales.spatial}, {"motion", index.scales.motion}}},
      {"labels", index.labels},
      {"feature_length", index.scenes.empty() ? 0 : index.scenes.front().feature.size()},
  };
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& s : index.scenes) ids.push_back(s.id);
  header["ids"] = ids;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << kIndexMagic << " " << kIndexVersion << "\n";
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), std::streamsize(text.size()));
  for (const auto& s : index.scenes) {
    for (const double v : s.feature) put<float>(out, float(v));
    write_pfm(out, s.phi.cells);
    put<std::uint32_t>(out, std::uint32_t(s.vertices.size()));
    for (const auto& v : s.vertices) {
      put<float>(out, float(v.x()));
      put<float>(out, float(v.y()));
      put<float>(out, 0.0f);
    }
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

RetrievalIndex load_index(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::kMissingFile, "missing index " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  const std::string name = path.string();
  std::string line;
  std::getline(in, line);
  if (line != std::string(kIndexMagic) + " " + std::to_string(kIndexVersion))
    throw Error(ErrorCode::kMalformed, "not a version " + std::to_string(kIndexVersion) + " index: " + name);
  const auto len = get<std::uint64_t>(in, name);
  if (len > (1u << 30)) throw Error(ErrorCode::kMalformed, "index header too large in " + name);
  std::string text(len, '\0');
  in.read(text.data(), std::streamsize(len));
  if (!in) throw Error(ErrorCode::kMalformed, "truncated index header in " + name);

  RetrievalIndex index;
  std::vector<std::string> ids;
  std::size_t feature_length = 0;
  try {
    const auto header = nlohmann::json::parse(text);
    index.options = options_from_json(header.at("options"));
    index.scales.visual = header.at("scales").at("visual");
    index.scales.spatial = header.at("scales").at("spatial");
    index.scales.motion = header.at("scales").at("motion");
    index.labels = header.at("labels").get<std::map<std::string, std::string>>();
    ids = header.at("ids").get<std::vector<std::string>>();
    feature_length = header.at("feature_length");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformed, "bad index header in " + name + ": " + e.what());
  }
  index.options.grid.validate();
  for (const auto& id : ids) {
    SceneDescriptor s;
    s.id = id;
    s.feature.resize(feature_length);
    for (auto& v : s.feature) v = get<float>(in, name);
    s.phi.spec = index.options.grid;
    s.phi.cells = read_pfm(in, name);
    if (s.phi.cells.rows != s.phi.spec.n_r || s.phi.cells.cols != s.phi.spec.n_theta)
      throw Error(ErrorCode::kMalformed, "height map size does not match the grid in " + name);
    const auto nv = get<std::uint32_t>(in, name);
    s.vertices.resize(nv);
    for (auto& v : s.vertices) {
      const float x = get<float>(in, name), y = get<float>(in, name);
      get<float>(in, name);
      v = Vec2(x, y);
    }
    index.scenes.push_back(std::move(s));
  }
  return index;
}

}  // namespace ivp
