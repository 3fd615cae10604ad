#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "ivp/error.hpp"
#include "ivp/gapfill.hpp"
#include "ivp/image_io.hpp"
#include "ivp/synthgen.hpp"
#include "support.hpp"

// After Eigen: resolv.h defines a _res macro.
#include <httplib.h>

using namespace ivp;
using nlohmann::json;

namespace {

constexpr double kTol = 0.5 / 255.0;

Mask disk(int w, int h, cv::Point c, int r) {
  Mask m(h, w, uchar(0));
  cv::circle(m, c, r, 255, -1);
  return m;
}

Mask random_mask(std::mt19937& rng, int w, int h) {
  Mask m(h, w, uchar(0));
  switch (rng() % 3) {
    case 0:
      cv::circle(m, {int(rng() % w), int(rng() % h)}, 4 + int(rng() % 30), 255, -1);
      break;
    case 1:
      cv::rectangle(m, {int(rng() % w), int(rng() % h)}, {int(rng() % w), int(rng() % h)}, 255, -1);
      break;
    default: {
      cv::Mat1f n(h, w);
      cv::randu(n, 0, 1);
      cv::GaussianBlur(n, n, {0, 0}, 4);
      m = n > 0.5;
    }
  }
  return m;
}

Image smooth_noise(int w, int h, int seed, double sigma) {
  Image img(h, w);
  cv::RNG rng(seed);
  rng.fill(img, cv::RNG::UNIFORM, 0.0, 1.0);
  cv::GaussianBlur(img, img, {0, 0}, sigma);
  cv::normalize(img, img, 0.0, 1.0, cv::NORM_MINMAX);
  return img;
}

double max_abs_diff(const Image& a, const Image& b, const Mask& where) {
  double worst = 0.0;
  for (int y = 0; y < a.rows; ++y)
    for (int x = 0; x < a.cols; ++x)
      if (where(y, x))
        for (int c = 0; c < 3; ++c) worst = std::max(worst, double(std::abs(a(y, x)[c] - b(y, x)[c])));
  return worst;
}

// In-process filler on a free port.
class FakeFiller {
 public:
  FakeFiller() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeFiller() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  FillerEndpoint endpoint(double timeout = 5.0) const {
    return {"http://127.0.0.1:" + std::to_string(port_), timeout};
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST(Diffusion, ConstantImage) {
  std::mt19937 rng(1);
  for (int k = 0; k < 10; ++k) {
    Image img(90, 120, cv::Vec3f(0.2f, 0.55f, 0.9f));
    const Mask m = random_mask(rng, img.cols, img.rows);
    if (cv::countNonZero(m) == 0 || cv::countNonZero(m) == int(m.total())) continue;
    const Image out = fill_diffusion(img, m);
    EXPECT_LE(max_abs_diff(out, img, m), 1.0 / 255.0);
  }
}

TEST(Diffusion, LinearGradient) {
  Image img(128, 160);
  for (int y = 0; y < img.rows; ++y)
    for (int x = 0; x < img.cols; ++x) {
      const float v = float(x) / (img.cols - 1);
      img(y, x) = {v, 1.0f - v, 0.5f * v + 0.25f};
    }
  const Mask m = disk(img.cols, img.rows, {80, 64}, 40);
  const Image out = fill_diffusion(img, m);
  EXPECT_LE(max_abs_diff(out, img, m), 2.0 / 255.0);
}

TEST(Diffusion, EmptyMaskIsIdentity) {
  const Image img = smooth_noise(64, 48, 2, 3.0);
  const Image out = fill_diffusion(img, Mask(48, 64, uchar(0)));
  EXPECT_EQ(cv::norm(out, img, cv::NORM_INF), 0.0);
}

TEST(Diffusion, FullyMaskedFails) {
  const Image img = smooth_noise(32, 32, 3, 3.0);
  EXPECT_THROW(fill_diffusion(img, Mask(32, 32, uchar(255))), Error);
}

TEST(Diffusion, KnownPixelsUntouched) {
  std::mt19937 rng(4);
  const Image img = smooth_noise(100, 80, 4, 5.0);
  for (int k = 0; k < 10; ++k) {
    const Mask m = random_mask(rng, img.cols, img.rows);
    if (cv::countNonZero(m) == 0 || cv::countNonZero(m) == int(m.total())) continue;
    const Image out = fill_diffusion(img, m);
    EXPECT_EQ(max_abs_diff(out, img, m == 0), 0.0);
  }
}

TEST(Diffusion, MaximumPrinciple) {
  std::mt19937 rng(5);
  int tested = 0;
  while (tested < 100) {
    const int w = 48 + int(rng() % 80), h = 48 + int(rng() % 80);
    const Image img = smooth_noise(w, h, int(rng()), 1.0 + rng() % 6);
    const Mask m = random_mask(rng, w, h);
    if (cv::countNonZero(m) == 0 || cv::countNonZero(m) == int(m.total())) continue;
    ++tested;
    const Image out = fill_diffusion(img, m);
    cv::Mat1i labels;
    const int n = cv::connectedComponents(m, labels, 4);
    for (int l = 1; l < n; ++l) {
      const Mask comp = labels == l;
      Mask ring;
      cv::dilate(comp, ring, cv::getStructuringElement(cv::MORPH_CROSS, {3, 3}));
      ring &= (m == 0);
      if (cv::countNonZero(ring) == 0) continue;
      for (int c = 0; c < 3; ++c) {
        cv::Mat1f ch;
        cv::extractChannel(img, ch, c);
        double lo, hi;
        cv::minMaxLoc(ch, &lo, &hi, nullptr, nullptr, ring);
        cv::Mat1f oc;
        cv::extractChannel(out, oc, c);
        double flo, fhi;
        cv::minMaxLoc(oc, &flo, &fhi, nullptr, nullptr, comp);
        EXPECT_GE(flo, lo - kTol);
        EXPECT_LE(fhi, hi + kTol);
      }
    }
  }
}

TEST(Diffusion, JacobiAgreesWithGaussSeidel) {
  std::mt19937 rng(6);
  for (int k = 0; k < 12; ++k) {
    const Image img = smooth_noise(96, 96, 10 + k, 4.0);
    const Mask m = random_mask(rng, 96, 96);
    if (cv::countNonZero(m) == 0 || cv::countNonZero(m) == int(m.total())) continue;
    DiffusionOptions gs, jac;
    jac.method = DiffusionMethod::kJacobi;
    DiffusionStats sg, sj;
    const Image a = fill_diffusion(img, m, gs, &sg);
    const Image b = fill_diffusion(img, m, jac, &sj);
    EXPECT_TRUE(sg.converged);
    EXPECT_TRUE(sj.converged);
    EXPECT_LE(max_abs_diff(a, b, m), 2 * kTol);
  }
}

TEST(Diffusion, CloseToExactSolution) {
  std::mt19937 rng(7);
  for (int k = 0; k < 8; ++k) {
    const Image img = smooth_noise(80, 64, 20 + k, 3.0);
    const Mask m = random_mask(rng, 80, 64);
    if (cv::countNonZero(m) == 0 || cv::countNonZero(m) == int(m.total())) continue;
    DiffusionOptions tight;
    tight.tol = 1e-7;
    tight.max_iters = 100000;
    const Image exact = fill_diffusion(img, m, tight);
    EXPECT_LE(max_abs_diff(fill_diffusion(img, m), exact, m), kTol);
  }
}

TEST(ProxyRealism, NaturalImageNearHalf) {
  // Untouched images: the seam statistic of a random region is typical of
  // the whole image, so s is about 1 and the score about 1/2.
  CorpusOptions o;
  std::vector<double> scores;
  for (int k = 0; k < 6; ++k) {
    const Image img = render_scene(random_scene_spec(7 + k, TurnClass(k % 3), o), 0).rgb_float();
    cv::RNG rng(k);
    for (int j = 0; j < 10; ++j) {
      const Mask m = disk(img.cols, img.rows, {rng.uniform(30, 226), rng.uniform(30, 226)},
                          rng.uniform(10, 50));
      const double s = proxy_realism(img, m);
      EXPECT_DOUBLE_EQ(score_realism(img, m), s);
      EXPECT_GT(s, 0.0);
      EXPECT_LE(s, 1.0);
      scores.push_back(s);
    }
  }
  std::nth_element(scores.begin(), scores.begin() + scores.size() / 2, scores.end());
  const double median = scores[scores.size() / 2];
  EXPECT_GE(median, 0.3);
  EXPECT_LE(median, 0.7);
}

TEST(ProxyRealism, FilledSeamScoresHigher) {
  CorpusOptions o;
  const SceneBundle b = render_scene(random_scene_spec(8, TurnClass::kLeft, o), 0);
  Image torn = b.rgb_float();
  Mask m(torn.size(), uchar(0));
  cv::rectangle(m, cv::Rect(0, 140, torn.cols, 24), 255, -1);
  torn.setTo(cv::Scalar::all(0), m);
  const Image filled = fill_diffusion(torn, m);
  EXPECT_LT(proxy_realism(torn, m), proxy_realism(filled, m));
}

TEST(WireProtocol, EchoPreservesKnownPixels) {
  FakeFiller f;
  json seen;
  f.server().Post("/fill", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    res.set_content(json{{"id", seen["id"]}, {"image", seen["image"]}}.dump(), "application/json");
  });
  const Image img = smooth_noise(200, 150, 9, 2.0);
  const Mask m = disk(200, 150, {100, 75}, 30);
  const Image out = fill_external({img, m, "req-1"}, f.endpoint());
  EXPECT_EQ(max_abs_diff(out, img, m == 0), 0.0);

  // Request body follows the wire format.
  EXPECT_EQ(seen["id"], "req-1");
  EXPECT_EQ(seen["width"], kFillWorkingSize);
  EXPECT_EQ(seen["height"], kFillWorkingSize);
  const auto img_png = base64_decode(seen["image"].get<std::string>());
  const auto mask_png = base64_decode(seen["mask"].get<std::string>());
  const cv::Mat wire_img = cv::imdecode(img_png, cv::IMREAD_UNCHANGED);
  const cv::Mat wire_mask = cv::imdecode(mask_png, cv::IMREAD_UNCHANGED);
  EXPECT_EQ(wire_img.type(), CV_8UC3);
  EXPECT_EQ(wire_img.cols, kFillWorkingSize);
  EXPECT_EQ(wire_mask.type(), CV_8UC1);
  EXPECT_EQ(wire_mask.rows, kFillWorkingSize);
  for (auto it = wire_mask.begin<uchar>(); it != wire_mask.end<uchar>(); ++it)
    ASSERT_TRUE(*it == 0 || *it == 255);
  EXPECT_GT(cv::countNonZero(wire_mask), 0);

  // Hole content is the server's image, resampled back.
  const Image back = resize_image(resize_image(img, 256, 256), 200, 150);
  EXPECT_LE(max_abs_diff(out, back, m), 1.0 / 255.0 + 1e-6);
}

TEST(WireProtocol, Timeout) {
  FakeFiller f;
  f.server().Post("/fill", [](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1500));
    res.set_content("{}", "application/json");
  });
  const Image img = smooth_noise(64, 64, 1, 2.0);
  const Mask m = disk(64, 64, {32, 32}, 8);
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_EQ(code_of([&] { fill_external({img, m, "t"}, f.endpoint(0.5)); }), ErrorCode::kTimeout);
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_GE(dt, 0.45);
  EXPECT_LT(dt, 1.4);
}

TEST(WireProtocol, MalformedResponses) {
  FakeFiller f;
  f.server().Post("/fill", [](const httplib::Request& req, httplib::Response& res) {
    const auto j = json::parse(req.body);
    const std::string id = j["id"];
    if (id == "text") res.set_content("not json", "text/plain");
    if (id == "noimage") res.set_content(json{{"id", id}}.dump(), "application/json");
    if (id == "badpng") res.set_content(json{{"id", id}, {"image", "AAAA"}}.dump(), "application/json");
    if (id == "small") {
      const Image s = resize_image(decode_image_b64(j["image"]), 128, 128);
      res.set_content(json{{"id", id}, {"image", encode_image_b64(s)}}.dump(), "application/json");
    }
    if (id == "fail") {
      res.status = 500;
      res.set_content(json{{"error", "boom"}}.dump(), "application/json");
    }
  });
  const Image img = smooth_noise(64, 64, 1, 2.0);
  const Mask m = disk(64, 64, {32, 32}, 8);
  auto run = [&](const std::string& id) { return code_of([&] { fill_external({img, m, id}, f.endpoint()); }); };
  EXPECT_EQ(run("text"), ErrorCode::kMalformed);
  EXPECT_EQ(run("noimage"), ErrorCode::kMalformed);
  EXPECT_EQ(run("badpng"), ErrorCode::kMalformed);
  EXPECT_EQ(run("small"), ErrorCode::kDimensionMismatch);
  EXPECT_EQ(run("fail"), ErrorCode::kRemote);
}

TEST(WireProtocol, UnreachableEndpoint) {
  int port;
  {
    FakeFiller f;  // grab a free port, then close it
    port = std::stoi(f.endpoint().base_url.substr(f.endpoint().base_url.rfind(':') + 1));
  }
  const Image img = smooth_noise(32, 32, 1, 2.0);
  const Mask m = disk(32, 32, {16, 16}, 4);
  FillerEndpoint ep{"http://127.0.0.1:" + std::to_string(port), 1.0};
  const ErrorCode c = code_of([&] { fill_external({img, m, "x"}, ep); });
  EXPECT_TRUE(c == ErrorCode::kConnection || c == ErrorCode::kTimeout);
}

TEST(WireProtocol, ExternalScore) {
  FakeFiller f;
  f.server().Post("/score", [](const httplib::Request& req, httplib::Response& res) {
    const auto j = json::parse(req.body);
    const double s = j["id"] == "score" ? 0.42 : 1.5;
    res.set_content(json{{"id", j["id"]}, {"score", s}}.dump(), "application/json");
  });
  const Image img = smooth_noise(64, 64, 1, 2.0);
  const double s = score_realism(img, disk(64, 64, {32, 32}, 8), f.endpoint());
  EXPECT_GE(s, 0.0);
  EXPECT_LE(s, 1.0);
  EXPECT_DOUBLE_EQ(s, 0.42);
}
