#pragma once

// Pipeline operations shared by the command line and the HTTP service. The
// handlers only translate JSON to these calls, so every response can be
// reproduced from the CLI.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ivp/compose.hpp"
#include "ivp/error.hpp"
#include "ivp/gapfill.hpp"
#include "ivp/retrieval.hpp"

namespace ivp {

enum class FillMode { kNone, kDiffusion, kExternal };
const char* to_string(FillMode m);
FillMode fill_mode_from_string(const std::string& s);

struct ServiceConfig {
  std::filesystem::path corpus_root;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<FillerEndpoint> filler;
  RetrievalWeights weights;
  TunnelParams tunnel;
  HeightGridSpec grid;
  std::filesystem::path index_path;  // optional prebuilt retrieval index
  bool with_index = true;            // false: retrieval is unavailable

  void validate() const;
};

/// Foot point under a rectified-image pixel.
struct GroundPoint {
  ProxemicPoint proxemic;
  Vec2 local = Vec2::Zero();  // meters in the scene's ground frame
  Vec3 world = Vec3::Zero();
};

/// Image polygon of one tunnel surface quad, rectified pixel coordinates.
struct OutlinePolygon {
  int segment = 0;
  Surface surface = Surface::kFloor;
  std::array<Vec2, 4> points;  // a0, b0, b1, a1 (closed loop order)
};

struct ComposeRequest {
  std::string id1;
  std::string id2;
  std::optional<double> R;  // default: centre of the shared path range
  double dR = kDefaultBandHalfWidth;
  FillMode fill = FillMode::kDiffusion;
};

struct ComposeOutput {
  CompositeResult composite;
  Image filled;  // equals composite.image when fill is kNone
  double R = 0.0;
  double dR = 0.0;
  Alignment alignment;
};

struct RetrieveRequest {
  std::string id;
  std::optional<Trajectory> trajectory;  // drawn path in the query scene's frame
  int k = 5;
  std::optional<RetrievalWeights> weights;
  int rerank = 0;  // k' > 0 re-ranks the k matches by realism
};

struct RetrieveOutput {
  std::vector<Match> matches;
  std::vector<RerankWarning> warnings;
};

/// Corpus loaded once; all methods are const and safe to call concurrently.
class PipelineService {
 public:
  explicit PipelineService(ServiceConfig config);

  const ServiceConfig& config() const { return config_; }
  const std::vector<std::string>& ids() const { return ids_; }
  const SceneBundle& scene(const std::string& id) const;  // kNotFound
  std::string label(const std::string& id) const;         // "" when unlabeled

  WarpResult rectified(const std::string& id) const;
  HeightMap height_map(const std::string& id) const;
  ActionTunnel tunnel(const std::string& id, const std::optional<Trajectory>& trajectory = {}) const;

  GroundPoint ground_point(const std::string& id, double u, double v) const;
  std::vector<OutlinePolygon> tunnel_outline(const std::string& id,
                                             const std::optional<Trajectory>& trajectory = {}) const;
  RetrieveOutput retrieve(const RetrieveRequest& request) const;
  ComposeOutput compose(const ComposeRequest& request) const;

 private:
  ServiceConfig config_;
  std::vector<std::string> ids_;
  std::map<std::string, SceneBundle> scenes_;
  std::map<std::string, std::string> labels_;
  RetrievalIndex index_;
};

/// Pixel (u, v) of the rectified view -> ground intersection. Throws
/// kDegenerate when the ray does not reach the ground in front of the camera.
GroundPoint ground_point(const CameraModel& camera, const GroundFrame& frame, double u, double v);

std::vector<OutlinePolygon> tunnel_outline(const ActionTunnel& tunnel, const RectifiedCamera& target);

// ---------------------------------------------------------------------------
// JSON adapters (field names are part of the HTTP interface)

nlohmann::json to_json(const GroundPoint& p);
nlohmann::json to_json(const std::vector<OutlinePolygon>& polygons);
nlohmann::json to_json(const Match& m, const std::string& label);
nlohmann::json scenes_json(const PipelineService& service);
nlohmann::json compose_json(const ComposeOutput& out);
nlohmann::json retrieve_json(const PipelineService& service, const RetrieveOutput& out);

/// [[X, Y], ...] metric ground points in the scene's frame.
Trajectory trajectory_from_json(const nlohmann::json& j);
ComposeRequest compose_request_from_json(const nlohmann::json& j);
RetrieveRequest retrieve_request_from_json(const nlohmann::json& j);

/// HTTP status for a library error: 404 not found, 400 bad request, 500
/// otherwise.
int http_status(ErrorCode code);

/// Blocks serving the routes until stop() is called from another thread.
class HttpServer {
 public:
  explicit HttpServer(const PipelineService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  void listen();  // after bind
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ivp
