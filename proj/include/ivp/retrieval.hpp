#pragma once

// Scene retrieval by visual, spatial and motion distance with sequential
// alignment (angle from the height maps, then translation from the tunnel
// vertices), plus realism re-ranking of the top candidates.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ivp/compose.hpp"
#include "ivp/gapfill.hpp"

namespace ivp {

inline constexpr int kFeatureGrid = 16;       // intensity thumbnail side
inline constexpr int kFeatureCells = 4;       // orientation histogram grid side
inline constexpr int kFeatureBins = 8;
inline constexpr int kFeatureLength =
    kFeatureGrid * kFeatureGrid + kFeatureCells * kFeatureCells * kFeatureBins;  // 384

/// 16x16 grayscale thumbnail followed by a 4x4 grid of 8-bin
/// magnitude-weighted gradient-orientation histograms. Each block is
/// L2-normalized and the concatenation scaled to unit norm.
std::vector<double> visual_feature(const Image& rectified);

/// Pluggable extractor; must return the same length for every image.
using FeatureExtractor = std::function<std::vector<double>(const Image&)>;

double visual_distance(const std::vector<double>& f1, const std::vector<double>& f2);

struct SpatialResult {
  double distance = 0.0;  // 1 - max NCC, in [0, 2]
  int shift = 0;          // theta cells; phi1 shifted by `shift` matches phi2
};

inline constexpr int kDefaultThetaSearch = 32;
inline constexpr int kMinOverlapCells = 10;

/// NCC between phi1 shifted along theta and phi2 over cells known in both.
SpatialResult spatial_distance(const HeightMap& phi1, const HeightMap& phi2,
                               int theta_search = kDefaultThetaSearch);

struct MotionResult {
  double distance = 0.0;
  Vec2 dx = Vec2::Zero();  // mean(V2 - V1)
};

/// min over dx of sum |V1_i + dx - V2_i|^2, in metric ground coordinates.
MotionResult motion_distance(const std::vector<Vec2>& v1, const std::vector<Vec2>& v2);

struct DescriptorOptions {
  HeightGridSpec grid;
  HeightMapOptions map_options;
  TunnelParams tunnel;
  int resample_count = 32;  // F
  int theta_search = kDefaultThetaSearch;
};

/// Vertices are the two floor corners (b1, b2) of every cross-section along
/// the resampled trajectory, flattened section by section.
struct SceneDescriptor {
  std::string id;
  std::vector<double> feature;
  HeightMap phi;
  std::vector<Vec2> vertices;

  std::size_t section_count() const { return vertices.size() / 2; }
};

SceneDescriptor describe(const SceneBundle& bundle, const DescriptorOptions& options = {},
                         const FeatureExtractor& extractor = visual_feature);

/// Same scene with the trajectory replaced (e.g. one drawn by a user).
SceneDescriptor describe_with_trajectory(const SceneBundle& bundle, const Trajectory& trajectory,
                                         const DescriptorOptions& options = {},
                                         const FeatureExtractor& extractor = visual_feature);

/// Vertex list for a trajectory over a height map.
std::vector<Vec2> tunnel_vertices(const HeightMap& map, const Trajectory& trajectory,
                                  const GroundFrame& frame, const DescriptorOptions& options);

struct RetrievalWeights {
  double visual = 1.0;
  double spatial = 1.0;
  double motion = 1.0;

  void validate() const;
};

/// Per-component divisors (corpus medians); 1 means unnormalized.
struct ComponentScales {
  double visual = 1.0;
  double spatial = 1.0;
  double motion = 1.0;
};

struct Match {
  std::string id;
  double total = 0.0;
  // Normalized components: total = sum of weight * component.
  double d_visual = 0.0;
  double d_spatial = 0.0;
  double d_motion = 0.0;
  int dtheta_cells = 0;
  double dtheta = 0.0;     // radians
  Vec2 dx = Vec2::Zero();  // meters
  std::optional<double> realism;

  /// Candidate-local -> query-local ground motion implied by the alignment.
  RigidGround candidate_to_query() const;
};

/// Raw (unnormalized) components and alignment for one pair.
struct PairDistance {
  double visual = 0.0;
  double spatial = 0.0;
  double motion = 0.0;
  int shift = 0;
  double dtheta = 0.0;
  Vec2 dx = Vec2::Zero();
};

PairDistance pair_distance(const SceneDescriptor& query, const SceneDescriptor& candidate,
                           int theta_search = kDefaultThetaSearch);

/// Medians of the raw components over up to `max_pairs` distinct pairs.
ComponentScales corpus_scales(const std::vector<SceneDescriptor>& corpus, int max_pairs = 256,
                              int theta_search = kDefaultThetaSearch);

/// k smallest totals, ties broken by id. k is clamped to the corpus size.
std::vector<Match> retrieve(const SceneDescriptor& query, const std::vector<SceneDescriptor>& corpus,
                            const RetrievalWeights& weights, int k,
                            const ComponentScales& scales = {},
                            int theta_search = kDefaultThetaSearch);

// ---------------------------------------------------------------------------
// Re-ranking

struct FilledCandidate {
  Image image;
  Mask missing;
};

/// Builds the filled composite for one match; throws to exclude it.
using CandidateComposer = std::function<FilledCandidate(const Match&)>;
using RealismScorer = std::function<double(const Image&, const Mask&)>;

struct RerankWarning {
  std::string id;
  std::string message;
};

struct RerankResult {
  std::vector<Match> matches;
  std::vector<RerankWarning> warnings;
};

/// Scores every match, then keeps the top k' by score (stable on ties).
RerankResult rerank_by_realism(const std::vector<Match>& matches, const CandidateComposer& composer,
                               const RealismScorer& scorer, int k_prime);

struct RerankOptions {
  double dR = kDefaultBandHalfWidth;
  DiffusionOptions fill;
};

/// Composer that splices the candidate's tunnel onto the query tunnel at the
/// default transition with the match alignment and fills the band.
CandidateComposer tunnel_composer(const ActionTunnel& query,
                                  std::function<ActionTunnel(const std::string&)> candidate_tunnel,
                                  const RerankOptions& options = {});

RealismScorer proxy_scorer();
RealismScorer endpoint_scorer(const FillerEndpoint& endpoint);

// ---------------------------------------------------------------------------
// Index

inline constexpr const char* kIndexMagic = "IVPINDEX";
inline constexpr int kIndexVersion = 1;

struct RetrievalIndex {
  DescriptorOptions options;
  ComponentScales scales;
  std::vector<SceneDescriptor> scenes;
  std::map<std::string, std::string> labels;

  const SceneDescriptor* find(const std::string& id) const;
};

RetrievalIndex build_index(const std::vector<SceneBundle>& corpus,
                           const DescriptorOptions& options = {},
                           const std::map<std::string, std::string>& labels = {});

/// Binary file: magic line, length-prefixed JSON header, then per scene the
/// feature as float32, phi as a PFM block and the vertices as float32
/// triples (X, Y, 0).
void save_index(const RetrievalIndex& index, const std::filesystem::path& path);
RetrievalIndex load_index(const std::filesystem::path& path);

}  // namespace ivp
