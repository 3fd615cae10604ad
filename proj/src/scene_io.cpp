#include "ivp/scene_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "ivp/error.hpp"
#include "ivp/image_io.hpp"

namespace ivp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json to_json(const Mat3& m) {
  json a = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
  return a;
}

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

double number(const json& j, const char* what) {
  if (!j.is_number()) throw Error(ErrorCode::kMalformed, std::string("meta field ") + what + " is not a number");
  return j.get<double>();
}

Mat3 mat3_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 9) {
    throw Error(ErrorCode::kMalformed, std::string("meta field ") + what + " must hold 9 numbers");
  }
  Mat3 m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = number(j[i], what);
  return m;
}

Vec3 vec3_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorCode::kMalformed, std::string("meta field ") + what + " must hold 3 numbers");
  }
  return {number(j[0], what), number(j[1], what), number(j[2], what)};
}

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(ErrorCode::kMalformed, std::string("meta is missing field ") + key);
  }
  return j.at(key);
}

json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::kMissingFile, "missing file " + path.string());
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, "malformed json in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  f << j.dump(2) << "\n";
  if (!f) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace

void SceneBundle::validate() const {
  if (id.empty()) throw Error(ErrorCode::kValidation, "bundle id is empty");
  camera.validate();
  frame.validate();
  trajectory.validate();
  if (rgb.cols != camera.width || rgb.rows != camera.height) {
    throw Error(ErrorCode::kDimensionMismatch, "rgb size does not match camera in " + id);
  }
  if (depth.cols != camera.width || depth.rows != camera.height) {
    throw Error(ErrorCode::kDimensionMismatch, "depth size does not match camera in " + id);
  }
}

Image SceneBundle::rgb_float() const { return to_float(rgb); }

void save_bundle(const SceneBundle& bundle, const fs::path& dir) {
  bundle.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());

  json meta;
  meta["format_version"] = kBundleFormat;
  meta["id"] = bundle.id;
  meta["width"] = bundle.camera.width;
  meta["height"] = bundle.camera.height;
  meta["K"] = to_json(bundle.camera.K);
  meta["R"] = to_json(bundle.camera.R);
  meta["C"] = to_json(bundle.camera.C);
  meta["ground_frame"] = {{"origin", to_json(bundle.frame.origin)},
                          {"g_x", to_json(bundle.frame.gx)},
                          {"g_y", to_json(bundle.frame.gy)},
                          {"g_z", to_json(bundle.frame.gz)}};
  meta["H"] = bundle.frame.height;
  json traj = json::array();
  for (const auto& p : bundle.trajectory.points) traj.push_back({p.r, p.theta, p.h});
  meta["trajectory"] = traj;

  write_png(dir / "rgb.png", bundle.rgb);
  write_pfm(dir / "depth.pfm", bundle.depth);
  write_json(dir / "meta.json", meta);
}

SceneBundle load_bundle(const fs::path& dir) {
  for (const char* name : {"meta.json", "rgb.png", "depth.pfm"}) {
    if (!fs::exists(dir / name)) {
      throw Error(ErrorCode::kMissingFile, "missing file " + (dir / name).string());
    }
  }
  const json meta = read_json(dir / "meta.json");
  SceneBundle b;
  try {
    const auto& version = field(meta, "format_version");
    if (!version.is_string() || version.get<std::string>() != kBundleFormat) {
      throw Error(ErrorCode::kMalformed, "unsupported bundle format in " + dir.string());
    }
    b.id = field(meta, "id").get<std::string>();
    b.camera.width = field(meta, "width").get<int>();
    b.camera.height = field(meta, "height").get<int>();
    b.camera.K = mat3_from(field(meta, "K"), "K");
    b.camera.R = mat3_from(field(meta, "R"), "R");
    b.camera.C = vec3_from(field(meta, "C"), "C");
    const auto& gf = field(meta, "ground_frame");
    b.frame.origin = vec3_from(field(gf, "origin"), "origin");
    b.frame.gx = vec3_from(field(gf, "g_x"), "g_x");
    b.frame.gy = vec3_from(field(gf, "g_y"), "g_y");
    b.frame.gz = vec3_from(field(gf, "g_z"), "g_z");
    b.frame.height = number(field(meta, "H"), "H");
    const auto& traj = field(meta, "trajectory");
    if (!traj.is_array()) throw Error(ErrorCode::kMalformed, "trajectory must be an array");
    for (const auto& p : traj) {
      const Vec3 v = vec3_from(p, "trajectory");
      b.trajectory.points.push_back({v.x(), v.y(), v.z()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, "malformed meta in " + dir.string() + ": " + e.what());
  }
  b.rgb = read_png_rgb(dir / "rgb.png");
  b.depth = read_pfm(dir / "depth.pfm");
  b.validate();
  return b;
}

void CorpusManifest::validate() const {
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw Error(ErrorCode::kValidation, "duplicate scene id " + id);
  }
  for (const auto& [seq, frames] : sequences) {
    for (const auto& [offset, id] : frames) {
      if (!seen.count(id)) {
        throw Error(ErrorCode::kValidation, "sequence " + seq + " references unknown id " + id);
      }
    }
  }
}

void save_manifest(const CorpusManifest& manifest) {
  manifest.validate();
  std::error_code ec;
  fs::create_directories(manifest.root, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + manifest.root.string());
  json j;
  j["format_version"] = manifest.format_version;
  j["scenes"] = manifest.ids;
  if (!manifest.sequences.empty()) {
    json seqs = json::object();
    for (const auto& [seq, frames] : manifest.sequences) {
      json f = json::object();
      for (const auto& [offset, id] : frames) f[std::to_string(offset)] = id;
      seqs[seq] = f;
    }
    j["sequences"] = seqs;
  }
  write_json(manifest.root / "manifest.json", j);
}

CorpusManifest load_manifest(const fs::path& root) {
  const json j = read_json(root / "manifest.json");
  CorpusManifest m;
  m.root = root;
  try {
    m.format_version = field(j, "format_version").get<std::string>();
    if (m.format_version != kCorpusFormat) {
      throw Error(ErrorCode::kMalformed, "unsupported corpus format " + m.format_version);
    }
    m.ids = field(j, "scenes").get<std::vector<std::string>>();
    if (j.contains("sequences")) {
      for (const auto& [seq, frames] : j.at("sequences").items()) {
        for (const auto& [offset, id] : frames.items()) {
          m.sequences[seq][std::stoi(offset)] = id.get<std::string>();
        }
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, std::string("malformed manifest: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw Error(ErrorCode::kMalformed, "malformed manifest: sequence offsets must be integers");
  }
  m.validate();
  return m;
}

std::map<std::string, std::string> load_labels(const fs::path& root) {
  const fs::path path = root / "labels.json";
  if (!fs::exists(path)) return {};
  try {
    return read_json(path).get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, std::string("malformed labels.json: ") + e.what());
  }
}

void save_labels(const fs::path& root, const std::map<std::string, std::string>& labels) {
  write_json(root / "labels.json", json(labels));
}

std::vector<SceneBundle> load_corpus(const fs::path& root) {
  CorpusManifest m = load_manifest(root);
  std::vector<std::string> ids = m.ids;
  std::sort(ids.begin(), ids.end());
  std::vector<SceneBundle> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    try {
      SceneBundle b = load_bundle(root / id);
      if (b.id != id) throw Error(ErrorCode::kValidation, "bundle id does not match directory");
      out.push_back(std::move(b));
    } catch (const Error& e) {
      throw Error(e.code(), "scene " + id + ": " + e.what());
    }
  }
  return out;
}

}  // namespace ivp
