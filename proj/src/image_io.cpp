#include "ivp/image_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "ivp/error.hpp"

namespace ivp {

Image to_float(const cv::Mat3b& rgb8) {
  Image out;
  rgb8.convertTo(out, CV_32FC3, 1.0 / 255.0);
  return out;
}

cv::Mat3b to_u8(const Image& rgb) {
  cv::Mat3b out;
  rgb.convertTo(out, CV_8UC3, 255.0);  // saturating, round-to-nearest
  return out;
}

namespace {

void write_or_throw(const std::filesystem::path& path, const cv::Mat& m) {
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), m);
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::kIo, "cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

}  // namespace

void write_png(const std::filesystem::path& path, const cv::Mat3b& rgb8) {
  cv::Mat bgr;
  cv::cvtColor(rgb8, bgr, cv::COLOR_RGB2BGR);
  write_or_throw(path, bgr);
}

void write_png(const std::filesystem::path& path, const Mask& gray) {
  write_or_throw(path, gray);
}

cv::Mat3b read_png_rgb(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kMissingFile, "missing file " + path.string());
  }
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error(ErrorCode::kMalformed, "cannot decode " + path.string());
  cv::Mat3b rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return rgb;
}

std::vector<std::uint8_t> encode_png(const cv::Mat3b& rgb8) {
  cv::Mat bgr;
  cv::cvtColor(rgb8, bgr, cv::COLOR_RGB2BGR);
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".png", bgr, buf)) throw Error(ErrorCode::kIo, "png encoding failed");
  return buf;
}

std::vector<std::uint8_t> encode_png(const Mask& gray) {
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".png", gray, buf)) throw Error(ErrorCode::kIo, "png encoding failed");
  return buf;
}

cv::Mat3b decode_png_rgb(const std::vector<std::uint8_t>& bytes) {
  if (bytes.empty()) throw Error(ErrorCode::kMalformed, "empty png payload");
  cv::Mat bgr;
  try {
    bgr = cv::imdecode(bytes, cv::IMREAD_COLOR);
  } catch (const cv::Exception&) {
    bgr.release();
  }
  if (bgr.empty()) throw Error(ErrorCode::kMalformed, "cannot decode png payload");
  cv::Mat3b rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return rgb;
}

Mask decode_png_gray(const std::vector<std::uint8_t>& bytes) {
  if (bytes.empty()) throw Error(ErrorCode::kMalformed, "empty png payload");
  cv::Mat g;
  try {
    g = cv::imdecode(bytes, cv::IMREAD_GRAYSCALE);
  } catch (const cv::Exception&) {
    g.release();
  }
  if (g.empty()) throw Error(ErrorCode::kMalformed, "cannot decode png payload");
  return g;
}

namespace {

constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& data) {
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < data.size(); i += 3) {
    const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  if (i < data.size()) {
    std::uint32_t v = data[i] << 16;
    if (i + 1 < data.size()) v |= data[i + 1] << 8;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += (i + 1 < data.size()) ? kB64[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  std::uint32_t acc = 0;
  int bits = 0;
  std::size_t padding = 0;
  for (char c : text) {
    if (c == '=') {
      ++padding;
      continue;
    }
    if (c == '\n' || c == '\r') continue;
    const int v = b64_value(c);
    if (v < 0 || padding > 0) throw Error(ErrorCode::kMalformed, "invalid base64 payload");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
    }
  }
  if (padding > 2) throw Error(ErrorCode::kMalformed, "invalid base64 padding");
  return out;
}

void write_pfm(std::ostream& out, const cv::Mat1f& data) {
  out << "Pf\n" << data.cols << " " << data.rows << "\n-1.0\n";
  static_assert(std::endian::native == std::endian::little, "PFM writer assumes little-endian host");
  for (int y = data.rows - 1; y >= 0; --y) {
    out.write(reinterpret_cast<const char*>(data.ptr<float>(y)),
              static_cast<std::streamsize>(sizeof(float) * data.cols));
  }
}

cv::Mat1f read_pfm(std::istream& in, const std::string& name) {
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  if (magic != "Pf" || w <= 0 || h <= 0 || !in) {
    throw Error(ErrorCode::kMalformed, "bad PFM header in " + name);
  }
  if (scale >= 0.0) throw Error(ErrorCode::kMalformed, "big-endian PFM not supported");
  in.get();  // single whitespace after the scale
  cv::Mat1f out(h, w);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(out.ptr<float>(y)),
            static_cast<std::streamsize>(sizeof(float) * w));
  }
  if (!in) throw Error(ErrorCode::kMalformed, "truncated PFM " + name);
  return out;
}

void write_pfm(const std::filesystem::path& path, const cv::Mat1f& data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  write_pfm(f, data);
  if (!f) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

cv::Mat1f read_pfm(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kMissingFile, "missing file " + path.string());
  }
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return read_pfm(f, path.string());
}

}  // namespace ivp
