#pragma once

// Filling the missing band of a composite: a deterministic harmonic filler,
// a proxy realism score, and the client for an external filler/scorer.

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "ivp/types.hpp"

namespace ivp {

enum class DiffusionMethod { kGaussSeidel, kJacobi };

struct DiffusionOptions {
  double tol = 0.5 / 255.0;  // per channel, bound on the distance to the exact solution
  int max_iters = 5000;      // multigrid cycles
  DiffusionMethod method = DiffusionMethod::kGaussSeidel;  // smoother
};

struct DiffusionStats {
  int iterations = 0;
  double last_update = 0.0;  // error bound at exit
  bool converged = false;
};

/// Discrete Laplace equation on the masked pixels (255 = missing) with the
/// known pixels as Dirichlet data and reflecting image borders, solved by
/// multigrid cycles with Gauss-Seidel or weighted Jacobi smoothing. Stops
/// once the residual bound guarantees the distance to the exact discrete
/// solution is below tol. Known pixels are returned untouched.
Image fill_diffusion(const Image& image, const Mask& mask, const DiffusionOptions& options = {},
                     DiffusionStats* stats = nullptr);

inline constexpr int kFillWorkingSize = 256;

struct FillerEndpoint {
  std::string base_url;  // e.g. http://127.0.0.1:8090
  double timeout_s = 30.0;

  void validate() const;
};

struct FillRequest {
  Image image;
  Mask mask;  // 255 = missing
  std::string id;

  void validate(bool require_hole = true) const;
};

/// Body of a /fill or /score request at the working size.
nlohmann::json make_wire_body(const FillRequest& request);

/// POST {base}/fill; the reply is resampled back to the request size and the
/// known pixels are restored from the input.
Image fill_external(const FillRequest& request, const FillerEndpoint& endpoint);

/// Seam statistic: mean |Laplacian| on the band around the mask boundary
/// divided by the image's global mean |Laplacian|; the score is 1 / (1 + s).
double proxy_realism(const Image& image, const Mask& mask);

/// With an endpoint, POST {base}/score; otherwise the proxy.
double score_realism(const Image& image, const Mask& mask,
                     const std::optional<FillerEndpoint>& endpoint = std::nullopt);

/// Image <-> wire conversions (base64 PNG, RGB8 / gray).
std::string encode_image_b64(const Image& image);
Image decode_image_b64(const std::string& text);
std::string encode_mask_b64(const Mask& mask);
Mask decode_mask_b64(const std::string& text);

/// Resampling used at the protocol boundary: bilinear for images, nearest
/// for masks.
Image resize_image(const Image& image, int width, int height);
Mask resize_mask(const Mask& mask, int width, int height);

}  // namespace ivp
