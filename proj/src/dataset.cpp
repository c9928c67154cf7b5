#include "aggnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "aggnet/errors.hpp"
#include "aggnet/file_io.hpp"
#include "aggnet/netpbm.hpp"
#include "aggnet/rng.hpp"

namespace aggnet {

namespace fs = std::filesystem;

namespace {

std::string stem(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", index);
  return buf;
}

std::uint64_t hash_string(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = mix64(h ^ c);
  return h;
}

netpbm::HeaderComments comments_for(const SceneSpec& spec) {
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(spec.hash()));
  return {{"seed=" + std::to_string(spec.seed), std::string("spec_hash=") + hash}};
}

void check_split_name(const std::string& split) {
  if (split.empty() || split.find_first_of("/\\ \t\n") != std::string::npos || split == "." ||
      split == "..") {
    throw ConfigError("invalid split name '" + split + "'");
  }
}

float quantize_u8(float v) {
  return static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
}

}  // namespace

fs::path Dataset::rgb_path(const fs::path& root, const std::string& split, int index) {
  return root / split / (stem(index) + "_rgb.ppm");
}

fs::path Dataset::raw_path(const fs::path& root, const std::string& split, int index) {
  return root / split / (stem(index) + "_raw.pgm");
}

fs::path Dataset::gt_path(const fs::path& root, const std::string& split, int index) {
  return root / split / (stem(index) + "_gt.pgm");
}

fs::path Dataset::manifest_path(const fs::path& root) { return root / "manifest.txt"; }

std::uint64_t Dataset::sample_seed(std::uint64_t base_seed, const std::string& split, int index) {
  return derive_seed(derive_seed(base_seed, hash_string(split)), static_cast<std::uint64_t>(index));
}

bool Dataset::is_validation_seed(std::uint64_t seed) {
  return mix64(seed ^ 0x76a11da7e5eedULL) % 10 == 0;
}

std::vector<ManifestEntry> Dataset::read_manifest(const fs::path& root) {
  const std::string text = read_file(manifest_path(root));
  std::vector<ManifestEntry> out;
  std::size_t offset = 0;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const std::size_t here = offset;
    offset += line.size() + 1;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    ManifestEntry e;
    std::string extra;
    if (!(row >> e.split >> e.index >> e.seed) || (row >> extra) || e.index < 0) {
      throw ParseError(manifest_path(root).string() + ": malformed manifest line '" + line + "'",
                       here);
    }
    out.push_back(e);
  }
  return out;
}

std::vector<ManifestEntry> Dataset::synthesize(const fs::path& root, const SceneSpec& spec,
                                               const std::string& split, int count) {
  check_split_name(split);
  if (count < 0) throw ConfigError("sample count must be >= 0");
  spec.validate();

  std::vector<ManifestEntry> existing;
  std::string manifest_text;
  if (fs::exists(manifest_path(root))) {
    existing = read_manifest(root);
    manifest_text = read_file(manifest_path(root));
    if (!manifest_text.empty() && manifest_text.back() != '\n') manifest_text += '\n';
  }
  int next = 0;
  for (const auto& e : existing)
    if (e.split == split) next = std::max(next, e.index + 1);

  const fs::path dir = root / split;
  std::error_code ec;
  const bool created_dir = !fs::exists(dir);
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::vector<ManifestEntry> added;
  std::vector<fs::path> written;
  try {
    for (int i = 0; i < count; ++i) {
      SceneSpec s = spec;
      s.seed = sample_seed(spec.seed, split, next + i);
      const RgbdSample sample = generate_scene(s);
      const auto comments = comments_for(s);
      const int index = next + i;
      written.push_back(rgb_path(root, split, index));
      netpbm::write_rgb(written.back(), sample.rgb, comments);
      written.push_back(raw_path(root, split, index));
      netpbm::write_depth(written.back(), sample.raw_depth.values, comments);
      written.push_back(gt_path(root, split, index));
      netpbm::write_depth(written.back(), sample.gt_depth, comments);
      added.push_back({split, index, s.seed});
    }
    for (const auto& e : added) {
      manifest_text += e.split + " " + std::to_string(e.index) + " " + std::to_string(e.seed) + "\n";
    }
    write_file(manifest_path(root), manifest_text);
  } catch (...) {
    for (const auto& p : written) fs::remove(p, ec);
    if (created_dir) fs::remove_all(dir, ec);
    throw;
  }
  return added;
}

std::vector<RgbdSample> Dataset::load_split(const fs::path& root, const std::string& split) {
  std::vector<RgbdSample> out;
  for (const auto& e : read_manifest(root)) {
    if (e.split != split) continue;
    RgbdSample s;
    s.seed = e.seed;
    s.rgb = netpbm::read_rgb(rgb_path(root, split, e.index));
    s.gt_depth = netpbm::read_depth(gt_path(root, split, e.index));
    s.raw_depth = DepthImage::from_raw(netpbm::read_depth(raw_path(root, split, e.index)));
    if (s.rgb.height != s.gt_depth.height || s.rgb.width != s.gt_depth.width ||
        s.raw_depth.height() != s.gt_depth.height || s.raw_depth.width() != s.gt_depth.width) {
      throw IoError("sample " + split + "/" + stem(e.index) + " has inconsistent image dims");
    }
    s.hole_mask = Mask(s.gt_depth.height, s.gt_depth.width);
    for (std::size_t i = 0; i < s.hole_mask.size(); ++i) {
      s.hole_mask.bits[i] = s.raw_depth.valid.bits[i] ? 0 : 1;
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw IoError("split '" + split + "' has no samples under " + root.string());
  return out;
}

std::vector<RgbdSample> synthesize_in_memory(const SceneSpec& spec, const std::string& split,
                                             int count) {
  spec.validate();
  std::vector<RgbdSample> out;
  out.reserve(static_cast<std::size_t>(std::max(0, count)));
  for (int i = 0; i < count; ++i) {
    SceneSpec s = spec;
    s.seed = Dataset::sample_seed(spec.seed, split, i);
    RgbdSample sample = generate_scene(s);
    // Same quantization a disk round trip applies.
    sample.gt_depth = netpbm::quantize_mm(sample.gt_depth);
    sample.raw_depth = DepthImage::from_raw(netpbm::quantize_mm(sample.raw_depth.values));
    for (float& v : sample.rgb.planes) v = quantize_u8(v);
    out.push_back(std::move(sample));
  }
  return out;
}

double mean_hole_fraction(const std::vector<RgbdSample>& samples) {
  if (samples.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : samples) {
    sum += static_cast<double>(s.hole_mask.count()) / static_cast<double>(s.hole_mask.size());
  }
  return sum / static_cast<double>(samples.size());
}

}  // namespace aggnet
