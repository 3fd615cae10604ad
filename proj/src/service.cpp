#include "ivp/service.hpp"

#include <atomic>
#include <cmath>

#include <httplib.h>

#include "ivp/error.hpp"
#include "ivp/image_io.hpp"

namespace ivp {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(FillMode m) {
  switch (m) {
    case FillMode::kNone: return "none";
    case FillMode::kDiffusion: return "diffusion";
    case FillMode::kExternal: return "external";
  }
  return "?";
}

FillMode fill_mode_from_string(const std::string& s) {
  if (s == "none") return FillMode::kNone;
  if (s == "diffusion") return FillMode::kDiffusion;
  if (s == "external") return FillMode::kExternal;
  throw Error(ErrorCode::kInvalidArgument, "unknown fill mode '" + s + "' (none|diffusion|external)");
}

void ServiceConfig::validate() const {
  if (!fs::is_directory(corpus_root))
    throw Error(ErrorCode::kMissingFile, "corpus root " + corpus_root.string() + " is not a directory");
  if (port < 0 || port > 65535) throw Error(ErrorCode::kInvalidArgument, "port out of range");
  if (filler) filler->validate();
  weights.validate();
  tunnel.validate();
  grid.validate();
}

PipelineService::PipelineService(ServiceConfig config) : config_(std::move(config)) {
  config_.validate();
  // A directory without a manifest is an empty corpus.
  if (fs::exists(config_.corpus_root / "manifest.json")) {
    for (auto& b : load_corpus(config_.corpus_root)) {
      ids_.push_back(b.id);
      scenes_.emplace(b.id, std::move(b));
    }
  }
  labels_ = load_labels(config_.corpus_root);
  if (!config_.with_index) {
    // nothing to index
  } else if (!config_.index_path.empty()) {
    index_ = load_index(config_.index_path);
    for (const auto& s : index_.scenes)
      if (!scenes_.count(s.id)) throw Error(ErrorCode::kValidation, "index scene " + s.id + " not in corpus");
  } else if (!scenes_.empty()) {
    DescriptorOptions opt;
    opt.grid = config_.grid;
    opt.tunnel = config_.tunnel;
    std::vector<SceneBundle> all;
    for (const auto& id : ids_) all.push_back(scenes_.at(id));
    index_ = build_index(all, opt, labels_);
  }
}

const SceneBundle& PipelineService::scene(const std::string& id) const {
  const auto it = scenes_.find(id);
  if (it == scenes_.end()) throw Error(ErrorCode::kNotFound, "unknown scene '" + id + "'");
  return it->second;
}

std::string PipelineService::label(const std::string& id) const {
  const auto it = labels_.find(id);
  return it == labels_.end() ? std::string() : it->second;
}

WarpResult PipelineService::rectified(const std::string& id) const {
  const SceneBundle& b = scene(id);
  return rectify_image(b.rgb_float(), b.camera, b.frame);
}

HeightMap PipelineService::height_map(const std::string& id) const {
  return build_height_map(scene(id), config_.grid);
}

ActionTunnel PipelineService::tunnel(const std::string& id, const std::optional<Trajectory>& trajectory) const {
  SceneBundle b = scene(id);
  if (trajectory) {
    trajectory->validate();
    b.trajectory = *trajectory;
  }
  return build_tunnel(b, build_height_map(b, config_.grid), config_.tunnel);
}

GroundPoint PipelineService::ground_point(const std::string& id, double u, double v) const {
  const SceneBundle& b = scene(id);
  return ivp::ground_point(b.camera, b.frame, u, v);
}

std::vector<OutlinePolygon> PipelineService::tunnel_outline(const std::string& id,
                                                            const std::optional<Trajectory>& trajectory) const {
  const SceneBundle& b = scene(id);
  Trajectory traj = trajectory ? *trajectory : b.trajectory;
  traj.validate();
  const ActionTunnel t = build_sections(height_map(id), traj, b.frame, config_.tunnel);
  return ivp::tunnel_outline(t, rectified_camera(b.camera, b.frame));
}

RetrieveOutput PipelineService::retrieve(const RetrieveRequest& request) const {
  if (request.k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (request.rerank < 0) throw Error(ErrorCode::kInvalidArgument, "rerank must be >= 0");
  const SceneBundle& b = scene(request.id);
  if (!config_.with_index) throw Error(ErrorCode::kInvalidArgument, "service started without a retrieval index");
  RetrieveOutput out;
  if (index_.scenes.empty()) return out;
  SceneDescriptor query;
  if (request.trajectory) {
    query = describe_with_trajectory(b, *request.trajectory, index_.options);
  } else if (const SceneDescriptor* d = index_.find(request.id)) {
    query = *d;
  } else {
    query = describe(b, index_.options);
  }
  const RetrievalWeights w = request.weights.value_or(config_.weights);
  w.validate();
  out.matches = ivp::retrieve(query, index_.scenes, w, request.k, index_.scales, index_.options.theta_search);
  if (request.rerank > 0) {
    const ActionTunnel qt = tunnel(request.id, request.trajectory);
    const CandidateComposer composer =
        tunnel_composer(qt, [this](const std::string& id) { return tunnel(id); });
    const RealismScorer scorer = config_.filler ? endpoint_scorer(*config_.filler) : proxy_scorer();
    RerankResult r = rerank_by_realism(out.matches, composer, scorer, request.rerank);
    out.matches = std::move(r.matches);
    out.warnings = std::move(r.warnings);
  }
  return out;
}

ComposeOutput PipelineService::compose(const ComposeRequest& request) const {
  if (!(request.dR >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "dR must be >= 0");
  const ActionTunnel t1 = tunnel(request.id1);
  const ActionTunnel t2 = tunnel(request.id2);
  ComposeOutput out;
  out.R = request.R ? *request.R : default_transition(t1, t2);
  out.dR = request.dR;
  out.alignment = align_tunnels(t1, t2, out.R);
  TransitionSpec spec;
  spec.R = out.R;
  spec.dR = out.dR;
  spec.align = out.alignment.transform;
  out.composite = ivp::compose(t1, t2, spec);
  const Mask& hole = out.composite.missing;
  if (request.fill == FillMode::kNone || cv::countNonZero(hole) == 0) {
    out.filled = out.composite.image.clone();
  } else if (request.fill == FillMode::kDiffusion) {
    out.filled = fill_diffusion(out.composite.image, hole);
  } else {
    if (!config_.filler) throw Error(ErrorCode::kInvalidArgument, "no filler endpoint configured");
    out.filled = fill_external({out.composite.image, hole, request.id1 + "+" + request.id2}, *config_.filler);
  }
  return out;
}

GroundPoint ground_point(const CameraModel& camera, const GroundFrame& frame, double u, double v) {
  if (!std::isfinite(u) || !std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "pixel must be finite");
  const RectifiedCamera rc = rectified_camera(camera, frame);
  const Vec3 d = rc.R.transpose() * (rc.K.inverse() * Vec3(u, v, 1.0));
  const double down = frame.gz.dot(d);
  const double above = frame.gz.dot(rc.C - frame.origin);
  if (!(down < -1e-12)) throw Error(ErrorCode::kDegenerate, "pixel ray does not reach the ground");
  const double t = -above / down;
  if (!(t > 0.0)) throw Error(ErrorCode::kDegenerate, "ground intersection behind the camera");
  GroundPoint p;
  p.world = rc.C + t * d;
  const Vec3 local = frame.to_local(p.world);
  p.local = local.head<2>();
  p.proxemic = local_to_proxemic(Vec3(local.x(), local.y(), 0.0));
  return p;
}

std::vector<OutlinePolygon> tunnel_outline(const ActionTunnel& tunnel, const RectifiedCamera& target) {
  std::vector<OutlinePolygon> out;
  for (std::size_t k = 0; k < tunnel.segments.size(); ++k) {
    const TunnelSegment& seg = tunnel.segments[k];
    if (collapsed(tunnel, seg)) continue;
    for (const Surface s : kSurfaces) {
      const auto c = surface_corners(tunnel, seg, s);
      OutlinePolygon poly{int(k), s, {}};
      bool visible = true;
      const int order[4] = {0, 1, 3, 2};
      for (int i = 0; i < 4 && visible; ++i) {
        const Vec3 q = target.project(tunnel.frame.to_world(c[order[i]]));
        if (q.z() <= 1e-9) visible = false;
        else poly.points[i] = Vec2(q.x() / q.z(), q.y() / q.z());
      }
      if (visible) out.push_back(poly);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

json to_json(const GroundPoint& p) {
  return {{"r", p.proxemic.r},
          {"theta", p.proxemic.theta},
          {"h", p.proxemic.h},
          {"local", {p.local.x(), p.local.y()}},
          {"world", {p.world.x(), p.world.y(), p.world.z()}}};
}

json to_json(const std::vector<OutlinePolygon>& polygons) {
  json arr = json::array();
  for (const auto& p : polygons) {
    json pts = json::array();
    for (const auto& q : p.points) pts.push_back({q.x(), q.y()});
    arr.push_back({{"segment", p.segment}, {"surface", to_string(p.surface)}, {"points", pts}});
  }
  return arr;
}

json to_json(const Match& m, const std::string& label) {
  json j = {{"id", m.id},         {"label", label},          {"total", m.total},
            {"d_visual", m.d_visual}, {"d_spatial", m.d_spatial}, {"d_motion", m.d_motion},
            {"dtheta", m.dtheta},  {"dx", {m.dx.x(), m.dx.y()}}};
  j["realism"] = m.realism ? json(*m.realism) : json(nullptr);
  return j;
}

json scenes_json(const PipelineService& service) {
  json arr = json::array();
  for (const auto& id : service.ids()) arr.push_back({{"id", id}, {"label", service.label(id)}});
  return arr;
}

json compose_json(const ComposeOutput& out) {
  return {{"composite", encode_image_b64(out.composite.image)},
          {"mask", encode_mask_b64(out.composite.missing)},
          {"filled", encode_image_b64(out.filled)},
          {"R", out.R},
          {"dR", out.dR},
          {"alignment",
           {{"dtheta", out.alignment.transform.dtheta},
            {"dx", {out.alignment.transform.dx.x(), out.alignment.transform.dx.y()}},
            {"residual", out.alignment.residual}}}};
}

json retrieve_json(const PipelineService& service, const RetrieveOutput& out) {
  json matches = json::array();
  for (const auto& m : out.matches) matches.push_back(to_json(m, service.label(m.id)));
  json warnings = json::array();
  for (const auto& w : out.warnings) warnings.push_back({{"id", w.id}, {"message", w.message}});
  return {{"matches", matches}, {"warnings", warnings}};
}

namespace {

template <typename T>
T get_field(const json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) throw Error(ErrorCode::kMalformed, std::string("missing field '") + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::kMalformed, std::string("field '") + name + "' has the wrong type");
  }
}

}  // namespace

Trajectory trajectory_from_json(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::kMalformed, "trajectory must be an array of [X, Y]");
  std::vector<Vec2> pts;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      throw Error(ErrorCode::kMalformed, "trajectory points must be [X, Y] numbers");
    pts.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  Trajectory t = Trajectory::from_ground_points(pts);
  t.validate();
  return t;
}

ComposeRequest compose_request_from_json(const json& j) {
  ComposeRequest r;
  r.id1 = get_field<std::string>(j, "id1");
  r.id2 = get_field<std::string>(j, "id2");
  if (j.contains("R") && !j.at("R").is_null()) r.R = get_field<double>(j, "R");
  if (j.contains("dR")) r.dR = get_field<double>(j, "dR");
  if (j.contains("fill")) r.fill = fill_mode_from_string(get_field<std::string>(j, "fill"));
  return r;
}

RetrieveRequest retrieve_request_from_json(const json& j) {
  RetrieveRequest r;
  r.id = get_field<std::string>(j, "id");
  if (j.contains("trajectory") && !j.at("trajectory").is_null()) r.trajectory = trajectory_from_json(j.at("trajectory"));
  if (j.contains("k")) r.k = get_field<int>(j, "k");
  if (j.contains("rerank")) r.rerank = get_field<int>(j, "rerank");
  if (j.contains("weights")) {
    const json& w = j.at("weights");
    RetrievalWeights rw;
    rw.visual = get_field<double>(w, "visual");
    rw.spatial = get_field<double>(w, "spatial");
    rw.motion = get_field<double>(w, "motion");
    r.weights = rw;
  }
  return r;
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound:
    case ErrorCode::kMissingFile: return 404;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kValidation:
    case ErrorCode::kMalformed:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kDegenerate:
    case ErrorCode::kSingularity: return 400;
    default: return 500;
  }
}

// ---------------------------------------------------------------------------

struct HttpServer::Impl {
  explicit Impl(const PipelineService& s) : service(s) {}
  const PipelineService& service;
  httplib::Server server;
  std::atomic<bool> bound{false};
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

// Runs a handler and maps failures to an HTTP status with {"error"}.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    send_json(res, http_status(e.code()), {{"error", e.what()}});
  } catch (const json::exception& e) {
    send_json(res, 400, {{"error", std::string("invalid JSON: ") + e.what()}});
  } catch (const std::exception& e) {
    send_json(res, 500, {{"error", e.what()}});
  }
}

json parse_body(const httplib::Request& req) {
  json j = json::parse(req.body);
  if (!j.is_object()) throw Error(ErrorCode::kMalformed, "request body must be a JSON object");
  return j;
}

}  // namespace

HttpServer::HttpServer(const PipelineService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& svr = impl_->server;
  const PipelineService& s = service;
  svr.Get("/scenes", [&s](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, scenes_json(s)); });
  });
  svr.Get("/scene/:id/image", [&s](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const WarpResult w = s.rectified(req.path_params.at("id"));
      const auto png = encode_png(to_u8(w.image));
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    });
  });
  svr.Post("/ground_point", [&s](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json j = parse_body(req);
      const GroundPoint p =
          s.ground_point(get_field<std::string>(j, "id"), get_field<double>(j, "u"), get_field<double>(j, "v"));
      send_json(res, 200, to_json(p));
    });
  });
  svr.Post("/tunnel", [&s](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json j = parse_body(req);
      std::optional<Trajectory> traj;
      if (j.contains("trajectory") && !j.at("trajectory").is_null()) traj = trajectory_from_json(j.at("trajectory"));
      send_json(res, 200, {{"polygons", to_json(s.tunnel_outline(get_field<std::string>(j, "id"), traj))}});
    });
  });
  svr.Post("/retrieve", [&s](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, retrieve_json(s, s.retrieve(retrieve_request_from_json(parse_body(req))))); });
  });
  svr.Post("/compose", [&s](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, compose_json(s.compose(compose_request_from_json(parse_body(req))))); });
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound_port = port;
  if (port == 0) {
    bound_port = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound_port = -1;
  }
  if (bound_port < 0) throw Error(ErrorCode::kConnection, "cannot bind " + host + ":" + std::to_string(port));
  impl_->bound = true;
  return bound_port;
}

void HttpServer::listen() {
  if (!impl_->bound) throw Error(ErrorCode::kInvalidArgument, "bind() before listen()");
  impl_->server.listen_after_bind();
}

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

bool HttpServer::running() const { return impl_->server.is_running(); }

}  // namespace ivp
