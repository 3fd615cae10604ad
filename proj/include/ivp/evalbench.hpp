#pragma once

// Masked reconstruction benchmark: a present frame with a missing region is
// rebuilt from a later frame of the same sequence by each method, and scored
// by NCC over the missing region.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ivp/compose.hpp"
#include "ivp/gapfill.hpp"

namespace ivp {

/// Per-channel NCC over masked pixels, averaged over channels; a channel
/// with (near) zero variance in either image contributes 0.
double ncc(const Image& a, const Image& b, const Mask& mask);

enum class Method { kPaste2d, kFill2d, kPaste3d, kFill3d, kBox3d, kOurs };
inline constexpr Method kAllMethods[] = {Method::kPaste2d, Method::kFill2d, Method::kPaste3d,
                                         Method::kFill3d,  Method::kBox3d,  Method::kOurs};
const char* to_string(Method m);
Method method_from_string(const std::string& s);
std::vector<Method> parse_methods(const std::string& csv);

enum class MaskPolicy {
  kTunnelBand,    // pixels farther than e^R on the ground, R set by the target fraction
  kCenteredDisk,  // disk at the image centre covering the target fraction
};
const char* to_string(MaskPolicy p);
MaskPolicy mask_policy_from_string(const std::string& s);

struct MethodOptions {
  DiffusionOptions fill;
  TunnelParams tunnel;
  HeightGridSpec grid;
  HeightMapOptions map_options;
};

/// Missing region M_f (255 = missing) of the present frame.
struct TrialMask {
  Mask mask;
  double fraction = 0.0;
  double R = 0.0;  // log-meters, range policy only
};

/// Ground range (meters) of every pixel in the frame's own ground frame;
/// +inf where depth is invalid (sky).
cv::Mat1d ground_range(const SceneBundle& bundle);

/// Mask {range > e^R} with e^R at the (1 - fraction) quantile of pixel
/// ranges, so the missing fraction is at most `fraction`.
TrialMask range_mask(const SceneBundle& present, double fraction);
TrialMask disk_mask(int width, int height, double fraction);
TrialMask make_mask(MaskPolicy policy, const SceneBundle& present, double fraction);

/// Present-view state reused across methods and offsets.
struct PresentView {
  const SceneBundle* bundle = nullptr;
  Image image;       // float RGB
  Mask mask;         // M_f
  HeightMap map;     // from the full depth
  ActionTunnel tunnel;
};
PresentView prepare_present(const SceneBundle& present, const Mask& mask, const MethodOptions& options);

/// Reconstruction I_r: equals the present image outside M_f. Pixels a method
/// cannot predict are filled by diffusion.
Image reconstruct(Method method, const PresentView& present, const SceneBundle& later,
                  const MethodOptions& options = {});
Image reconstruct(Method method, const SceneBundle& present, const SceneBundle& later,
                  const Mask& mask, const MethodOptions& options = {});

struct EvalConfig {
  std::vector<int> dts = {2, 4, 6, 8, 10};
  std::vector<double> fractions = {0.01, 0.05, 0.1, 0.2, 0.4, 0.6};
  std::vector<Method> methods = {std::begin(kAllMethods), std::end(kAllMethods)};
  MaskPolicy policy = MaskPolicy::kTunnelBand;
  double mask_fraction = 0.65;      // run_sweep target
  double min_mask_fraction = 0.6;   // run_sweep eligibility
  int missing_dt = 4;               // offset used by the missing-data sweep
  std::string selector = "all";     // all | indoor | outdoor
  std::uint64_t seed = 0;
  MethodOptions options;
  std::filesystem::path dump_dir;   // per-trial PNGs when set

  void validate() const;
};

struct TrialResult {
  std::string sequence;
  Method method = Method::kPaste2d;
  double param = 0.0;
  std::optional<double> eta;
  std::string skipped;  // reason when eta is empty
};

struct SweepRow {
  Method method = Method::kPaste2d;
  double param = 0.0;
  double median = 0.0;
  double stddev = 0.0;
  int n = 0;
};

struct SweepReport {
  std::string param_name;  // "dt" or "fraction"
  std::vector<SweepRow> rows;
  std::vector<TrialResult> trials;

  const SweepRow* find(Method m, double param) const;
};

/// Frame sequences of a corpus: sequence id -> frame offset -> bundle dir.
struct EvalCorpus {
  std::filesystem::path root;
  std::map<std::string, std::map<int, std::string>> sequences;
};
EvalCorpus load_eval_corpus(const std::filesystem::path& root);

SweepReport run_sweep(const EvalCorpus& corpus, const EvalConfig& config);
SweepReport missing_data_sweep(const EvalCorpus& corpus, const EvalConfig& config);

/// "0.55(0.19)"
std::string format_cell(double median, double stddev);
std::string format_table(const SweepReport& report);
void write_csv(const SweepReport& report, const std::filesystem::path& path);
std::string to_csv(const SweepReport& report);

}  // namespace ivp
