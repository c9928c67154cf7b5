#include "aggnet/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <vector>

#include "aggnet/errors.hpp"
#include "aggnet/rng.hpp"

namespace aggnet {

namespace {

// Independent random streams per generation stage, so that changing one
// stage's draw count never perturbs another.
enum Stream : std::uint64_t {
  kLayout = 1,
  kTexture = 2,
  kSpeckle = 3,
  kShadow = 4,
  kBlob = 5,
  kCrop = 6,
};

std::uint64_t hash_double(std::uint64_t h, double v) { return mix64(h ^ std::bit_cast<std::uint64_t>(v)); }
std::uint64_t hash_int(std::uint64_t h, std::int64_t v) { return mix64(h ^ static_cast<std::uint64_t>(v)); }

// Base color of object `id`; id 0 is the background.
void object_color(std::uint64_t seed, int id, float out[3]) {
  CounterRng rng(derive_seed(seed, 0x100 + static_cast<std::uint64_t>(id)));
  for (int c = 0; c < 3; ++c) out[c] = static_cast<float>(rng.uniform(0.1, 0.9));
}

// Square (Chebyshev) dilation by `radius`.
Mask dilate(const Mask& m, int radius) {
  if (radius <= 0) return m;
  Mask out(m.height, m.width);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      for (int yy = std::max(0, y - radius); yy <= std::min(m.height - 1, y + radius); ++yy) {
        for (int xx = std::max(0, x - radius); xx <= std::min(m.width - 1, x + radius); ++xx) {
          out.set(yy, xx, true);
        }
      }
    }
  }
  return out;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("scene spec: " + what);
}

}  // namespace

void SceneSpec::validate() const {
  require(height > 0 && width > 0 && height % 16 == 0 && width % 16 == 0,
          "dims must be positive multiples of 16, got " + std::to_string(height) + "x" +
              std::to_string(width));
  require(min_objects >= 0 && max_objects >= min_objects, "object count range is empty");
  require(min_depth > 0 && max_depth > min_depth && max_depth <= 65.535,
          "depth range must satisfy 0 < min < max <= 65.535");
  require(holes.speckle >= 0 && holes.edge_shadow >= 0 && holes.large_blob >= 0,
          "hole weights must be non-negative");
  require(holes.speckle + holes.edge_shadow + holes.large_blob > 0, "hole weights sum to zero");
  require(hole_fraction >= 0 && hole_fraction <= 0.9, "hole_fraction must be in [0, 0.9]");
  require(texture_noise >= 0 && texture_noise <= 1, "texture_noise must be in [0, 1]");
  require(edge_threshold > 0, "edge_threshold must be positive");
  require(shadow_radius_max >= 0, "shadow_radius_max must be >= 0");
}

std::uint64_t SceneSpec::hash() const {
  std::uint64_t h = 0x5ce7e5bec0ffeeULL;
  h = hash_int(h, static_cast<std::int64_t>(seed));
  h = hash_int(h, height);
  h = hash_int(h, width);
  h = hash_int(h, min_objects);
  h = hash_int(h, max_objects);
  h = hash_double(h, min_depth);
  h = hash_double(h, max_depth);
  h = hash_double(h, holes.speckle);
  h = hash_double(h, holes.edge_shadow);
  h = hash_double(h, holes.large_blob);
  h = hash_double(h, hole_fraction);
  h = hash_double(h, texture_noise);
  h = hash_double(h, edge_threshold);
  h = hash_int(h, shadow_radius_max);
  return h;
}

bool SceneObject::covers(int y, int x) const {
  const double dx = (x + 0.5 - cx) / rx;
  const double dy = (y + 0.5 - cy) / ry;
  if (ellipse) return dx * dx + dy * dy <= 1.0;
  return std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
}

SceneLayout sample_layout(const SceneSpec& spec) {
  spec.validate();
  CounterRng rng(derive_seed(spec.seed, kLayout));
  SceneLayout layout;
  const double span = spec.max_depth - spec.min_depth;
  // A far, gently tilted plane; the tilt changes depth by at most 15% of the
  // range across the image so the plane stays inside [min_depth, max_depth].
  BackgroundPlane& bg = layout.background;
  bg.base = spec.min_depth + span * rng.uniform(0.6, 0.85);
  const double tilt = 0.15 * span;
  bg.gx = rng.uniform(-0.5, 0.5) * tilt / spec.width;
  bg.gy = rng.uniform(-0.5, 0.5) * tilt / spec.height;
  const double plane_min = bg.base - 0.5 * tilt;

  const int count = rng.range(spec.min_objects, spec.max_objects);
  for (int i = 0; i < count; ++i) {
    SceneObject o;
    o.ellipse = rng.bernoulli(0.5);
    o.cx = rng.uniform(0.0, spec.width);
    o.cy = rng.uniform(0.0, spec.height);
    o.rx = rng.uniform(0.08, 0.3) * spec.width;
    o.ry = rng.uniform(0.08, 0.3) * spec.height;
    o.depth = rng.uniform(spec.min_depth, spec.min_depth + 0.9 * (plane_min - spec.min_depth));
    object_color(spec.seed, i + 1, o.color);
    layout.objects.push_back(o);
  }
  return layout;
}

RgbdSample generate_scene(const SceneSpec& spec) {
  const SceneLayout layout = sample_layout(spec);
  const int h = spec.height;
  const int w = spec.width;
  RgbdSample s;
  s.seed = spec.seed;
  s.gt_depth = DepthMap(h, w);
  s.rgb = RgbImage(h, w);
  float bg_color[3];
  object_color(spec.seed, 0, bg_color);
  CounterRng noise(derive_seed(spec.seed, kTexture));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double z = std::clamp(layout.background.at(y, x), spec.min_depth, spec.max_depth);
      const float* color = bg_color;
      for (const SceneObject& o : layout.objects) {
        if (o.covers(y, x) && o.depth < z) {
          z = o.depth;
          color = o.color;
        }
      }
      s.gt_depth.at(y, x) = static_cast<float>(z);
      for (int c = 0; c < 3; ++c) {
        const double v = color[c] + spec.texture_noise * noise.uniform(-1.0, 1.0);
        s.rgb.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  CarvedHoles holes = carve_holes(s.gt_depth, s.rgb, spec);
  s.raw_depth = std::move(holes.raw);
  s.hole_mask = std::move(holes.hole_mask);
  return s;
}

Mask depth_discontinuities(const DepthMap& gt, double threshold) {
  Mask out(gt.height, gt.width);
  // Mark the far side of each jump: that is where a sensor's shadow falls.
  auto mark = [&](int y0, int x0, int y1, int x1) {
    const float a = gt.at(y0, x0);
    const float b = gt.at(y1, x1);
    if (std::abs(a - b) > threshold) {
      if (a > b) {
        out.set(y0, x0, true);
      } else {
        out.set(y1, x1, true);
      }
    }
  };
  for (int y = 0; y < gt.height; ++y) {
    for (int x = 0; x < gt.width; ++x) {
      if (x + 1 < gt.width) mark(y, x, y, x + 1);
      if (y + 1 < gt.height) mark(y, x, y + 1, x);
    }
  }
  return out;
}

CarvedHoles carve_holes(const DepthMap& gt, const RgbImage& rgb, const SceneSpec& spec) {
  spec.validate();
  if (rgb.height != gt.height || rgb.width != gt.width) {
    throw ShapeError("carve_holes: rgb and depth dims differ");
  }
  const int h = gt.height;
  const int w = gt.width;
  const double n = static_cast<double>(h) * w;
  const double wsum = spec.holes.speckle + spec.holes.edge_shadow + spec.holes.large_blob;
  const double f = spec.hole_fraction;

  Mask holes(h, w);
  if (f > 0) {
    // Speckle: independent dropouts.
    const double p = f * spec.holes.speckle / wsum;
    if (p > 0) {
      CounterRng rng(derive_seed(spec.seed, kSpeckle));
      for (auto& b : holes.bits) b = rng.bernoulli(p) ? 1 : 0;
    }

    // Edge shadows: the smallest dilation of the discontinuity set that
    // reaches its share of the budget, thinned if one step overshoots.
    const double shadow_target = f * n * spec.holes.edge_shadow / wsum;
    if (shadow_target > 0) {
      const Mask edges = depth_discontinuities(gt, spec.edge_threshold);
      Mask band = edges;
      for (int r = 0; r <= spec.shadow_radius_max; ++r) {
        band = dilate(edges, r);
        if (static_cast<double>(band.count()) >= shadow_target) break;
      }
      const double keep = std::min(1.0, shadow_target / std::max<double>(1.0, band.count()));
      CounterRng rng(derive_seed(spec.seed, kShadow));
      for (std::size_t i = 0; i < band.bits.size(); ++i) {
        if (band.bits[i] && (keep >= 1.0 || rng.bernoulli(keep))) holes.bits[i] = 1;
      }
    }

    // Large blobs: random walks with a disc brush until the union reaches
    // the overall target.
    if (spec.holes.large_blob > 0) {
      const auto target = static_cast<std::size_t>(std::llround(f * n));
      std::size_t count = holes.count();
      CounterRng rng(derive_seed(spec.seed, kBlob));
      const int max_steps = 2 * (h + w);
      for (int blob = 0; blob < 256 && count < target; ++blob) {
        double y = rng.uniform(0.0, h);
        double x = rng.uniform(0.0, w);
        double angle = rng.uniform(0.0, 6.283185307179586);
        const int radius = rng.range(1, 3);
        for (int step = 0; step < max_steps && count < target; ++step) {
          const int cy = static_cast<int>(y);
          const int cx = static_cast<int>(x);
          for (int dy = -radius; dy <= radius && count < target; ++dy) {
            for (int dx = -radius; dx <= radius && count < target; ++dx) {
              const int yy = cy + dy;
              const int xx = cx + dx;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w || dx * dx + dy * dy > radius * radius) {
                continue;
              }
              if (!holes.at(yy, xx)) {
                holes.set(yy, xx, true);
                ++count;
              }
            }
          }
          angle += rng.uniform(-0.6, 0.6);
          y = std::clamp(y + std::sin(angle), 0.0, h - 1e-9);
          x = std::clamp(x + std::cos(angle), 0.0, w - 1e-9);
        }
      }
    }
  }

  CarvedHoles out;
  DepthMap raw = gt;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (holes.bits[i]) raw.meters[i] = 0.0f;
  }
  out.raw = DepthImage::from_raw(std::move(raw));
  // gt is strictly positive, so the zero set of raw is exactly the hole set.
  out.hole_mask = std::move(holes);
  return out;
}

RgbdSample random_crop_resize(const RgbdSample& s, int out_h, int out_w, double min_scale,
                              std::uint64_t seed) {
  if (out_h <= 0 || out_w <= 0) throw ConfigError("crop output dims must be positive");
  if (!(min_scale > 0 && min_scale <= 1)) throw ConfigError("crop min_scale must be in (0, 1]");
  const int h = s.gt_depth.height;
  const int w = s.gt_depth.width;
  CounterRng rng(derive_seed(seed, kCrop));
  const double scale = rng.uniform(min_scale, 1.0);
  const int ch = std::clamp(static_cast<int>(std::lround(h * scale)), 1, h);
  const int cw = std::clamp(static_cast<int>(std::lround(w * scale)), 1, w);
  const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - ch + 1)));
  const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - cw + 1)));

  std::vector<int> sy(out_h), sx(out_w);
  for (int y = 0; y < out_h; ++y) sy[y] = y0 + std::min(ch - 1, (2 * y + 1) * ch / (2 * out_h));
  for (int x = 0; x < out_w; ++x) sx[x] = x0 + std::min(cw - 1, (2 * x + 1) * cw / (2 * out_w));

  RgbdSample out;
  out.seed = s.seed;
  out.rgb = RgbImage(out_h, out_w);
  out.gt_depth = DepthMap(out_h, out_w);
  DepthMap raw(out_h, out_w);
  out.hole_mask = Mask(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      out.gt_depth.at(y, x) = s.gt_depth.at(sy[y], sx[x]);
      raw.at(y, x) = s.raw_depth.values.at(sy[y], sx[x]);
      out.hole_mask.set(y, x, s.hole_mask.at(sy[y], sx[x]));
      for (int c = 0; c < 3; ++c) out.rgb.at(c, y, x) = s.rgb.at(c, sy[y], sx[x]);
    }
  }
  out.raw_depth = DepthImage::from_raw(std::move(raw));
  return out;
}

}  // namespace aggnet
