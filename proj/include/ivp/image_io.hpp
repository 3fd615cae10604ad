#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "ivp/types.hpp"

namespace ivp {

Image to_float(const cv::Mat3b& rgb8);
cv::Mat3b to_u8(const Image& rgb);

// PNG files hold RGB in file order; OpenCV's BGR is hidden here.
void write_png(const std::filesystem::path& path, const cv::Mat3b& rgb8);
void write_png(const std::filesystem::path& path, const Mask& gray);
cv::Mat3b read_png_rgb(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const cv::Mat3b& rgb8);
std::vector<std::uint8_t> encode_png(const Mask& gray);
cv::Mat3b decode_png_rgb(const std::vector<std::uint8_t>& bytes);
Mask decode_png_gray(const std::vector<std::uint8_t>& bytes);

std::string base64_encode(const std::vector<std::uint8_t>& data);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Single-channel PFM ("Pf"), little-endian (scale -1.0), rows bottom to top.
void write_pfm(const std::filesystem::path& path, const cv::Mat1f& data);
cv::Mat1f read_pfm(const std::filesystem::path& path);
void write_pfm(std::ostream& out, const cv::Mat1f& data);
cv::Mat1f read_pfm(std::istream& in, const std::string& name);

}  // namespace ivp
