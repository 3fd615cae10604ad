#pragma once

// Segmenting two ActionTunnels at a transitional range, aligning them at the
// junction, and rendering the union with its changeable-pixel mask.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ivp/tunnel.hpp"

namespace ivp {

struct TransitionSpec {
  double R = 0.0;   // log-meters
  double dR = 0.0;  // band half-width, log-meters
  RigidGround align;

  void validate() const;
};

enum class Side { kNear, kFar };

/// Near keeps sections with path range < R - dR, far those > R + dR; only
/// segments whose two sections both survive are kept.
ActionTunnel split_tunnel(const ActionTunnel& tunnel, double R, double dR, Side side);

/// Original section indices kept by split_tunnel.
std::vector<int> split_indices(const ActionTunnel& tunnel, double R, double dR, Side side);

struct Alignment {
  RigidGround transform;  // t2-local -> t1-local
  double residual = 0.0;  // squared position + tangent mismatch at the junction
  int junction = 0;       // section index on t1
};

inline constexpr double kDefaultAlignWindow = 0.5;    // log-meters
inline constexpr double kDefaultBandHalfWidth = 0.1;  // log-meters

/// Junction on t1 is its path vertex nearest r = R; on t2 the point at the
/// same metric arc length from its start. Rotation matches the tangents,
/// translation the positions.
Alignment align_tunnels(const ActionTunnel& t1, const ActionTunnel& t2, double R,
                        double window = kDefaultAlignWindow);

enum class Provenance : std::uint8_t {
  kBackground = 0,  // outside both tunnels, copied from the present view
  kTunnel1 = 1,
  kTunnel2 = 2,
  kMissing = 3,
};

struct CompositeResult {
  Image image;             // rectified composite; zero where missing
  Mask missing;            // 255 = changeable (band or uncovered tunnel)
  cv::Mat1b provenance;    // Provenance values
  Mask valid;              // rectification validity of the present view
};

/// Renders the near part of t1 and the far part of t2 (moved by spec.align)
/// onto `target` in one painter pass.
CompositeResult compose(const ActionTunnel& t1, const ActionTunnel& t2,
                        const TransitionSpec& spec, const RectifiedCamera& target);
inline CompositeResult compose(const ActionTunnel& t1, const ActionTunnel& t2,
                               const TransitionSpec& spec) {
  return compose(t1, t2, spec, t1.source);
}

/// Path range [min, max] of a tunnel.
std::pair<double, double> path_range(const ActionTunnel& tunnel);

/// Centre of the overlap of both path ranges (t2 after alignment is not
/// needed: ranges are frame-local).
double default_transition(const ActionTunnel& t1, const ActionTunnel& t2);

struct TrainingPair {
  Image masked;  // tunnel projection with the band removed
  Image target;  // rectified source
  Mask valid;    // rectification validity
  Mask band;     // removed pixels
  double R = 0.0;
  double dR = 0.0;
};

TrainingPair make_training_pair(const SceneBundle& bundle, const HeightMap& map,
                                const TunnelParams& params, double R, double dR);
TrainingPair make_training_pair(const ActionTunnel& tunnel, double R, double dR);

/// R uniform over the middle 60% of the path range, dR uniform in
/// [0.05, 0.4].
std::pair<double, double> sample_transition(const ActionTunnel& tunnel, std::uint64_t seed);

/// Band pixel fraction of the image seen by `target`, from geometry only
/// (textures are not needed). Approximates the self-composition band.
double band_fraction(const ActionTunnel& tunnel, double R, double dR,
                     const RectifiedCamera& target, int stride = 4);

void export_composite(const CompositeResult& result, const std::filesystem::path& dir);
void export_training_pair(const TrainingPair& pair, const std::filesystem::path& dir);

/// Palette used for the provenance PNG, RGB per tag.
cv::Mat3b provenance_image(const cv::Mat1b& provenance);

}  // namespace ivp
