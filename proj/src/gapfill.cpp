#include "ivp/gapfill.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numbers>
#include <vector>

#include <opencv2/imgproc.hpp>

#include "httplib.h"
#include "ivp/error.hpp"
#include "ivp/image_io.hpp"

namespace ivp {

namespace {

void check_pair(const Image& image, const Mask& mask) {
  if (image.empty()) throw Error(ErrorCode::kInvalidArgument, "empty image");
  if (mask.size() != image.size())
    throw Error(ErrorCode::kDimensionMismatch, "mask and image sizes differ");
}

struct Hole {
  std::vector<int> pix;                 // flat pixel index
  std::vector<std::array<int, 4>> nb;   // flat neighbor indices
  std::vector<int> count;
};

Hole build_hole(const Mask& mask) {
  Hole h;
  const int W = mask.cols, H = mask.rows;
  for (int y = 0; y < H; ++y) {
    const auto* m = mask.ptr<uchar>(y);
    for (int x = 0; x < W; ++x) {
      if (!m[x]) continue;
      std::array<int, 4> nb{-1, -1, -1, -1};
      int c = 0;
      if (x > 0) nb[c++] = y * W + x - 1;
      if (x + 1 < W) nb[c++] = y * W + x + 1;
      if (y > 0) nb[c++] = (y - 1) * W + x;
      if (y + 1 < H) nb[c++] = (y + 1) * W + x;
      h.pix.push_back(y * W + x);
      h.nb.push_back(nb);
      h.count.push_back(c);
    }
  }
  return h;
}

// Multigrid for L u = f on the unknown pixels, L u = sum of neighbors -
// count * u (reflecting image borders), with known pixels held fixed.
struct Level {
  int W = 0, H = 0;
  Mask unknown;
  Hole hole;
};

std::vector<Level> build_levels(const Mask& unknown) {
  std::vector<Level> levels;
  levels.push_back({unknown.cols, unknown.rows, unknown, build_hole(unknown)});
  while (true) {
    const Level& g = levels.back();
    if (g.hole.pix.size() <= 64 || std::min(g.W, g.H) < 8) break;
    const int W2 = (g.W + 1) / 2, H2 = (g.H + 1) / 2;
    // A coarse cell is unknown only when all of its children are.
    Mask c(H2, W2, uchar(255));
    for (int y = 0; y < g.H; ++y)
      for (int x = 0; x < g.W; ++x)
        if (!g.unknown(y, x)) c(y / 2, x / 2) = 0;
    if (cv::countNonZero(c) == 0) break;
    levels.push_back({W2, H2, c, build_hole(c)});
  }
  return levels;
}

class Multigrid {
 public:
  Multigrid(const Mask& unknown, int channels, bool jacobi)
      : levels_(build_levels(unknown)), C_(channels), jacobi_(jacobi) {}

  // u: C * W * H values (known pixels included); f: same layout.
  void cycle(std::vector<double>& u, const std::vector<double>& f) { vcycle(0, u, f); }

  double max_residual(const std::vector<double>& u, const std::vector<double>& f) const {
    double m = 0.0;
    const Hole& h = levels_[0].hole;
    for (std::size_t k = 0; k < h.pix.size(); ++k)
      for (int c = 0; c < C_; ++c) m = std::max(m, std::abs(residual_at(h, k, c, u, f)));
    return m;
  }

  const Hole& hole() const { return levels_[0].hole; }

 private:
  double residual_at(const Hole& h, std::size_t k, int c, const std::vector<double>& u,
                     const std::vector<double>& f) const {
    const std::size_t p = std::size_t(h.pix[k]);
    double s = -h.count[k] * u[C_ * p + c];
    for (int j = 0; j < h.count[k]; ++j) s += u[C_ * std::size_t(h.nb[k][j]) + c];
    return f[C_ * p + c] - s;
  }

  void smooth(const Hole& h, std::vector<double>& u, const std::vector<double>& f, int sweeps, bool jacobi) {
    for (int it = 0; it < sweeps; ++it) {
      if (jacobi) scratch_ = u;
      const std::vector<double>& read = jacobi ? scratch_ : u;
      for (std::size_t k = 0; k < h.pix.size(); ++k) {
        const std::size_t p = std::size_t(h.pix[k]);
        for (int c = 0; c < C_; ++c) {
          double s = -f[C_ * p + c];
          for (int j = 0; j < h.count[k]; ++j) s += read[C_ * std::size_t(h.nb[k][j]) + c];
          const double target = s / h.count[k];
          // Weighted Jacobi smooths the checkerboard mode; plain Jacobi does not.
          u[C_ * p + c] = jacobi ? read[C_ * p + c] + 0.8 * (target - read[C_ * p + c]) : target;
        }
      }
    }
  }

  void vcycle(std::size_t l, std::vector<double>& u, const std::vector<double>& f) {
    const Level& g = levels_[l];
    if (l + 1 == levels_.size()) {
      // Coarsest level: relax until the residual stops mattering.
      const double r0 = level_residual(g, u, f);
      for (int it = 0; it < 2000; it += 8) {
        smooth(g.hole, u, f, 8, jacobi_ && l == 0);
        if (level_residual(g, u, f) <= 1e-3 * r0) break;
      }
      return;
    }
    smooth(g.hole, u, f, 2, jacobi_ && l == 0);
    const Level& gc = levels_[l + 1];
    std::vector<double> fc(std::size_t(C_) * gc.W * gc.H, 0.0), ec(fc.size(), 0.0);
    for (std::size_t k = 0; k < g.hole.pix.size(); ++k) {
      const int p = g.hole.pix[k];
      const std::size_t q = std::size_t((p / g.W) / 2 * gc.W + (p % g.W) / 2);
      for (int c = 0; c < C_; ++c) fc[C_ * q + c] += residual_at(g.hole, k, c, u, f);
    }
    vcycle(l + 1, ec, fc);
    // Bilinear prolongation; coarse known cells carry zero correction.
    for (const int p : g.hole.pix) {
      const double xc = std::clamp((p % g.W) / 2.0 - 0.25, 0.0, gc.W - 1.0);
      const double yc = std::clamp((p / g.W) / 2.0 - 0.25, 0.0, gc.H - 1.0);
      const int x0 = int(xc), y0 = int(yc);
      const int x1 = std::min(x0 + 1, gc.W - 1), y1 = std::min(y0 + 1, gc.H - 1);
      const double fx = xc - x0, fy = yc - y0;
      const std::size_t i00 = std::size_t(y0 * gc.W + x0), i01 = std::size_t(y0 * gc.W + x1);
      const std::size_t i10 = std::size_t(y1 * gc.W + x0), i11 = std::size_t(y1 * gc.W + x1);
      for (int c = 0; c < C_; ++c) {
        u[C_ * std::size_t(p) + c] += (1 - fx) * (1 - fy) * ec[C_ * i00 + c] + fx * (1 - fy) * ec[C_ * i01 + c] +
                                      (1 - fx) * fy * ec[C_ * i10 + c] + fx * fy * ec[C_ * i11 + c];
      }
    }
    smooth(g.hole, u, f, 2, jacobi_ && l == 0);
  }

  double level_residual(const Level& g, const std::vector<double>& u, const std::vector<double>& f) const {
    double m = 0.0;
    for (std::size_t k = 0; k < g.hole.pix.size(); ++k)
      for (int c = 0; c < C_; ++c) m = std::max(m, std::abs(residual_at(g.hole, k, c, u, f)));
    return m;
  }

  std::vector<Level> levels_;
  int C_;
  bool jacobi_;
  std::vector<double> scratch_;
};

// Upper bound on max phi where L phi = -1 on the hole and phi = 0 on known
// pixels. If |L phi_h + 1| <= eps then phi_h / (1 - eps) is a supersolution,
// so the bound holds by the discrete maximum principle. The error of any
// iterate is then at most max|L u| times this bound.
double torsion_bound(const Mask& unknown, const Hole& hole) {
  constexpr double kEps = 0.05;
  Multigrid mg(unknown, 1, false);
  std::vector<double> phi(unknown.total(), 0.0), f(unknown.total(), 0.0);
  for (const int p : hole.pix) f[std::size_t(p)] = -1.0;
  for (int it = 0; it < 200 && mg.max_residual(phi, f) > kEps; ++it) mg.cycle(phi, f);
  double m = 0.0;
  for (const int p : hole.pix) m = std::max(m, phi[std::size_t(p)]);
  return m / (1.0 - kEps);
}

void fill_with_ring_mean(Image& work, const Mask& mask) {
  cv::Mat1b ring;
  cv::dilate(mask, ring, cv::Mat());
  ring &= ~mask;
  const cv::Scalar m = cv::mean(work, ring);
  work.setTo(cv::Vec3f(float(m[0]), float(m[1]), float(m[2])), mask);
}

}  // namespace

Image fill_diffusion(const Image& image, const Mask& mask, const DiffusionOptions& options,
                     DiffusionStats* stats) {
  check_pair(image, mask);
  if (!(options.tol > 0.0)) throw Error(ErrorCode::kInvalidArgument, "tol must be > 0");
  if (options.max_iters < 1) throw Error(ErrorCode::kInvalidArgument, "max_iters must be >= 1");
  if (stats) *stats = DiffusionStats{};

  const Mask hole_mask = mask != 0;
  const int n_hole = cv::countNonZero(hole_mask);
  if (n_hole == 0) {
    if (stats) stats->converged = true;
    return image.clone();
  }
  if (n_hole == int(hole_mask.total()))
    throw Error(ErrorCode::kDegenerate, "mask covers the whole image; no boundary data");

  Image work = image.clone();
  fill_with_ring_mean(work, hole_mask);
  const std::size_t N = work.total();
  std::vector<double> u(3 * N), f(3 * N, 0.0);
  auto* px = work.ptr<cv::Vec3f>(0);
  for (std::size_t i = 0; i < N; ++i)
    for (int c = 0; c < 3; ++c) u[3 * i + c] = px[i][c];

  Multigrid mg(hole_mask, 3, options.method == DiffusionMethod::kJacobi);
  const double phi_max = torsion_bound(hole_mask, mg.hole());
  DiffusionStats st;
  while (st.iterations < options.max_iters) {
    const double r = mg.max_residual(u, f);
    st.last_update = r * phi_max;
    if (st.last_update < options.tol) {
      st.converged = true;
      break;
    }
    mg.cycle(u, f);
    ++st.iterations;
  }
  if (!st.converged) st.last_update = mg.max_residual(u, f) * phi_max;
  for (const int p : mg.hole().pix)
    for (int c = 0; c < 3; ++c) px[p][c] = float(u[3 * std::size_t(p) + c]);
  if (stats) *stats = st;
  image.copyTo(work, hole_mask == 0);
  return work;
}

// ---------------------------------------------------------------------------

void FillerEndpoint::validate() const {
  if (base_url.empty()) throw Error(ErrorCode::kValidation, "endpoint URL is empty");
  if (!(timeout_s > 0.0)) throw Error(ErrorCode::kValidation, "endpoint timeout must be > 0");
}

void FillRequest::validate(bool require_hole) const {
  check_pair(image, mask);
  if (require_hole && cv::countNonZero(mask) == 0)
    throw Error(ErrorCode::kValidation, "fill request has an empty mask");
}

Image resize_image(const Image& image, int width, int height) {
  if (image.cols == width && image.rows == height) return image.clone();
  Image out;
  cv::resize(image, out, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  return out;
}

Mask resize_mask(const Mask& mask, int width, int height) {
  if (mask.cols == width && mask.rows == height) return mask.clone();
  Mask out;
  cv::resize(mask, out, cv::Size(width, height), 0, 0, cv::INTER_NEAREST);
  return out;
}

std::string encode_image_b64(const Image& image) { return base64_encode(encode_png(to_u8(image))); }

Image decode_image_b64(const std::string& text) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = base64_decode(text);
  } catch (const Error& e) {
    throw Error(ErrorCode::kMalformed, std::string("bad base64 image: ") + e.what());
  }
  try {
    return to_float(decode_png_rgb(bytes));
  } catch (const Error& e) {
    throw Error(ErrorCode::kMalformed, std::string("bad PNG image: ") + e.what());
  }
}

std::string encode_mask_b64(const Mask& mask) {
  Mask bin = mask != 0;
  return base64_encode(encode_png(bin));
}

Mask decode_mask_b64(const std::string& text) {
  try {
    Mask m = decode_png_gray(base64_decode(text));
    return m >= 128;
  } catch (const Error& e) {
    throw Error(ErrorCode::kMalformed, std::string("bad mask: ") + e.what());
  }
}

nlohmann::json make_wire_body(const FillRequest& request) {
  check_pair(request.image, request.mask);
  const int S = kFillWorkingSize;
  return {
      {"id", request.id},
      {"width", S},
      {"height", S},
      {"image", encode_image_b64(resize_image(request.image, S, S))},
      {"mask", encode_mask_b64(resize_mask(request.mask, S, S))},
  };
}

namespace {

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without trailing slash
};

Url split_url(const std::string& base) {
  const auto scheme = base.find("://");
  const size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
  const auto slash = base.find('/', host_start);
  Url u;
  u.origin = base.substr(0, slash);
  if (scheme == std::string::npos) u.origin = "http://" + u.origin;
  if (slash != std::string::npos) u.prefix = base.substr(slash);
  while (!u.prefix.empty() && u.prefix.back() == '/') u.prefix.pop_back();
  return u;
}

nlohmann::json post_json(const FillerEndpoint& ep, const std::string& route,
                         const nlohmann::json& body) {
  ep.validate();
  const Url url = split_url(ep.base_url);
  httplib::Client client(url.origin);
  if (!client.is_valid()) throw Error(ErrorCode::kInvalidArgument, "bad endpoint URL " + ep.base_url);
  const auto secs = std::chrono::duration<double>(ep.timeout_s);
  const auto us = std::chrono::duration_cast<std::chrono::microseconds>(secs);
  client.set_connection_timeout(us);
  client.set_read_timeout(us);
  client.set_write_timeout(us);

  const auto t0 = std::chrono::steady_clock::now();
  auto res = client.Post(url.prefix + route, body.dump(), "application/json");
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!res) {
    const auto err = res.error();
    const std::string what = ep.base_url + route + ": " + httplib::to_string(err);
    if (err == httplib::Error::ConnectionTimeout) throw Error(ErrorCode::kTimeout, what);
    if ((err == httplib::Error::Read || err == httplib::Error::Write) && elapsed >= 0.9 * ep.timeout_s)
      throw Error(ErrorCode::kTimeout, what);
    throw Error(ErrorCode::kConnection, what);
  }
  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception&) {
    if (res->status >= 400)
      throw Error(ErrorCode::kRemote, route + " returned HTTP " + std::to_string(res->status));
    throw Error(ErrorCode::kMalformed, route + " returned non-JSON body");
  }
  if (res->status >= 400) {
    std::string msg = reply.is_object() && reply.contains("error") && reply["error"].is_string()
                          ? reply["error"].get<std::string>()
                          : std::string("no message");
    throw Error(ErrorCode::kRemote, route + " returned HTTP " + std::to_string(res->status) + ": " + msg);
  }
  if (!reply.is_object()) throw Error(ErrorCode::kMalformed, route + " reply is not an object");
  if (reply.contains("id") && !reply["id"].is_string())
    throw Error(ErrorCode::kMalformed, route + " reply id is not a string");
  return reply;
}

}  // namespace

Image fill_external(const FillRequest& request, const FillerEndpoint& endpoint) {
  request.validate(true);
  const nlohmann::json reply = post_json(endpoint, "/fill", make_wire_body(request));
  if (!reply.contains("image") || !reply["image"].is_string())
    throw Error(ErrorCode::kMalformed, "/fill reply has no image");
  if (reply.contains("id") && reply["id"].get<std::string>() != request.id)
    throw Error(ErrorCode::kMalformed, "/fill reply id does not match the request");
  const Image filled = decode_image_b64(reply["image"].get<std::string>());
  if (filled.cols != kFillWorkingSize || filled.rows != kFillWorkingSize)
    throw Error(ErrorCode::kDimensionMismatch,
                "/fill reply is " + std::to_string(filled.cols) + "x" + std::to_string(filled.rows) +
                    ", expected " + std::to_string(kFillWorkingSize) + "x" +
                    std::to_string(kFillWorkingSize));
  Image out = resize_image(filled, request.image.cols, request.image.rows);
  request.image.copyTo(out, request.mask == 0);
  return out;
}

double proxy_realism(const Image& image, const Mask& mask) {
  check_pair(image, mask);
  Mask hole = mask != 0;
  if (cv::countNonZero(hole) == 0) return 0.5;
  cv::Mat1f gray;
  cv::cvtColor(image, gray, cv::COLOR_RGB2GRAY);
  cv::Mat1f lap;
  cv::Laplacian(gray, lap, CV_32F, 1, 1.0, 0.0, cv::BORDER_REFLECT);
  lap = cv::abs(lap);
  Mask dil, ero;
  cv::dilate(hole, dil, cv::Mat());
  cv::erode(hole, ero, cv::Mat(), cv::Point(-1, -1), 1, cv::BORDER_CONSTANT, cv::Scalar(0));
  const Mask band = dil & ~ero;
  const double global = cv::mean(lap)[0];
  const double seam = cv::countNonZero(band) ? cv::mean(lap, band)[0] : 0.0;
  if (global < 1e-12) return seam < 1e-12 ? 1.0 : 0.0;
  return 1.0 / (1.0 + seam / global);
}

double score_realism(const Image& image, const Mask& mask,
                     const std::optional<FillerEndpoint>& endpoint) {
  if (!endpoint) return proxy_realism(image, mask);
  FillRequest req{image, mask, "score"};
  req.validate(false);
  const nlohmann::json reply = post_json(*endpoint, "/score", make_wire_body(req));
  if (!reply.contains("score") || !reply["score"].is_number())
    throw Error(ErrorCode::kMalformed, "/score reply has no numeric score");
  const double s = reply["score"].get<double>();
  if (!(s >= 0.0 && s <= 1.0)) throw Error(ErrorCode::kMalformed, "/score reply outside [0, 1]");
  return s;
}

}  // namespace ivp
