#pragma once

#include <cstdint>
#include <string>

#include "aggnet/image.hpp"

namespace aggnet {

/// Relative weights of the three invalid-depth patterns.
struct HoleProfile {
  double speckle = 0.2;      // isolated dropouts (weak reflection)
  double edge_shadow = 0.3;  // bands along depth discontinuities
  double large_blob = 0.5;   // big irregular holes (specular / dark surfaces)
};

struct SceneSpec {
  std::uint64_t seed = 1;
  int height = 64;
  int width = 64;
  int min_objects = 2;
  int max_objects = 6;
  double min_depth = 0.5;
  double max_depth = 10.0;
  HoleProfile holes;
  double hole_fraction = 0.2;
  double texture_noise = 0.08;
  double edge_threshold = 0.25;  // meters; |grad gt| above this marks a discontinuity
  int shadow_radius_max = 3;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
  /// Stable 64-bit hash of every field; written into image headers.
  std::uint64_t hash() const;
};

struct RgbdSample {
  RgbImage rgb;
  DepthMap gt_depth;
  DepthImage raw_depth;
  Mask hole_mask;
  std::uint64_t seed = 0;
};

/// Axis-aligned primitive placed in front of the background plane.
struct SceneObject {
  bool ellipse = false;
  double cx = 0, cy = 0, rx = 0, ry = 0;
  double depth = 1.0;
  float color[3] = {0, 0, 0};
  bool covers(int y, int x) const;
};

/// Background plane depth(y, x) = base + gx * x + gy * y.
struct BackgroundPlane {
  double base = 5.0, gx = 0.0, gy = 0.0;
  double at(int y, int x) const { return base + gx * x + gy * y; }
};

struct SceneLayout {
  BackgroundPlane background;
  std::vector<SceneObject> objects;
};

/// Random layout for the scene seed (exposed for occlusion tests).
SceneLayout sample_layout(const SceneSpec& spec);

/// Renders gt depth and rgb for a layout, carves holes, returns the sample.
RgbdSample generate_scene(const SceneSpec& spec);

/// Invalidates pixels following the scene's hole profile. Deterministic in
/// spec.seed. Returns the raw depth with holes zeroed and the hole mask.
struct CarvedHoles {
  DepthImage raw;
  Mask hole_mask;
};
CarvedHoles carve_holes(const DepthMap& gt, const RgbImage& rgb, const SceneSpec& spec);

/// For every horizontally or vertically adjacent pair whose depth jump exceeds
/// the threshold, marks the farther pixel (where a sensor shadow would fall).
Mask depth_discontinuities(const DepthMap& gt, double threshold);

/// Random crop (scale in [min_scale, 1]) then nearest-neighbour resize back to
/// (out_h, out_w). Nearest keeps the zero-means-invalid convention intact.
RgbdSample random_crop_resize(const RgbdSample& s, int out_h, int out_w, double min_scale,
                              std::uint64_t seed);

}  // namespace aggnet
