#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ivp/camera.hpp"
#include "ivp/proxemic.hpp"
#include "ivp/trajectory.hpp"

namespace ivp {

inline constexpr const char* kBundleFormat = "ivp-bundle/1";
inline constexpr const char* kCorpusFormat = "ivp-corpus/1";

/// One first-person RGBD observation with its ground frame and future path.
struct SceneBundle {
  std::string id;
  cv::Mat3b rgb;    // 8-bit RGB
  DepthMap depth;   // meters
  CameraModel camera;
  GroundFrame frame;
  Trajectory trajectory;

  void validate() const;
  Image rgb_float() const;
};

void save_bundle(const SceneBundle& bundle, const std::filesystem::path& dir);
SceneBundle load_bundle(const std::filesystem::path& dir);

/// Corpus manifest: ids in order, plus optional frame sequences for
/// evaluation (sequence id -> {frame offset -> scene id}) and class labels.
struct CorpusManifest {
  std::filesystem::path root;
  std::vector<std::string> ids;
  std::map<std::string, std::map<int, std::string>> sequences;
  std::string format_version = kCorpusFormat;

  void validate() const;
};

void save_manifest(const CorpusManifest& manifest);
CorpusManifest load_manifest(const std::filesystem::path& root);

/// Class labels (`labels.json`, id -> class); empty when the file is absent.
std::map<std::string, std::string> load_labels(const std::filesystem::path& root);
void save_labels(const std::filesystem::path& root,
                 const std::map<std::string, std::string>& labels);

/// All bundles ordered by id. Any invalid bundle aborts with its id.
std::vector<SceneBundle> load_corpus(const std::filesystem::path& root);

}  // namespace ivp
