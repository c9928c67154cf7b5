#pragma once

#include <cstdint>
#include <vector>

namespace aggnet {

/// Dense single-channel depth map in meters, row-major (h, w).
struct DepthMap {
  int height = 0;
  int width = 0;
  std::vector<float> meters;

  DepthMap() = default;
  DepthMap(int h, int w, float fill = 0.0f)
      : height(h), width(w), meters(static_cast<std::size_t>(h) * w, fill) {}

  float& at(int y, int x) { return meters[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return meters[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return meters.size(); }
  bool operator==(const DepthMap&) const = default;
};

/// Boolean image, row-major. Stored as bytes (0/1) to keep it addressable.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int h, int w, bool fill = false)
      : height(h), width(w), bits(static_cast<std::size_t>(h) * w, fill ? 1 : 0) {}

  bool at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int y, int x, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const;
  std::size_t size() const { return bits.size(); }
  bool operator==(const Mask&) const = default;
};

/// RGB image in [0, 1], planar (3, h, w).
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<float> planes;

  RgbImage() = default;
  RgbImage(int h, int w, float fill = 0.0f)
      : height(h), width(w), planes(3 * static_cast<std::size_t>(h) * w, fill) {}

  float& at(int c, int y, int x) {
    return planes[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return planes[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  bool operator==(const RgbImage&) const = default;
};

/// Raw sensor depth: valid pixels are > 0, invalid pixels are exactly 0.
struct DepthImage {
  DepthMap values;
  Mask valid;

  /// Builds the validity mask from the zero convention.
  static DepthImage from_raw(DepthMap raw);
  int height() const { return values.height; }
  int width() const { return values.width; }
};

}  // namespace aggnet
