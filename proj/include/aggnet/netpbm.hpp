#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "aggnet/image.hpp"

namespace aggnet::netpbm {

/// Metadata written as '#' comment lines in the header.
struct HeaderComments {
  std::vector<std::string> lines;
};

/// Depth stored as 16-bit PGM (P5, maxval 65535, big-endian samples) holding
/// millimeters; 0 means invalid. Values are rounded to the nearest mm.
std::string encode_depth(const DepthMap& depth, const HeaderComments& comments = {});
DepthMap decode_depth(std::string_view bytes, HeaderComments* comments = nullptr);

/// 8-bit PPM (P6, maxval 255). Channel values are rounded from [0, 1].
std::string encode_rgb(const RgbImage& rgb, const HeaderComments& comments = {});
RgbImage decode_rgb(std::string_view bytes, HeaderComments* comments = nullptr);

std::uint16_t meters_to_mm(float meters);
float mm_to_meters(std::uint16_t mm);

/// Rounds every pixel to the millimeter grid (what a write/read cycle yields).
DepthMap quantize_mm(const DepthMap& depth);

void write_depth(const std::filesystem::path& path, const DepthMap& depth,
                 const HeaderComments& comments = {});
DepthMap read_depth(const std::filesystem::path& path, HeaderComments* comments = nullptr);
void write_rgb(const std::filesystem::path& path, const RgbImage& rgb,
               const HeaderComments& comments = {});
RgbImage read_rgb(const std::filesystem::path& path, HeaderComments* comments = nullptr);

}  // namespace aggnet::netpbm
