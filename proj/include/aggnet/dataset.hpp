#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aggnet/synth.hpp"

namespace aggnet {

/// One manifest row: split name, index within the split, generation seed.
struct ManifestEntry {
  std::string split;
  int index = 0;
  std::uint64_t seed = 0;
};

/// Layout: {root}/{split}/{index:05}_rgb.ppm, _raw.pgm, _gt.pgm plus
/// {root}/manifest.txt with one "split index seed" line per sample.
class Dataset {
 public:
  static std::filesystem::path rgb_path(const std::filesystem::path& root, const std::string& split,
                                        int index);
  static std::filesystem::path raw_path(const std::filesystem::path& root, const std::string& split,
                                        int index);
  static std::filesystem::path gt_path(const std::filesystem::path& root, const std::string& split,
                                       int index);
  static std::filesystem::path manifest_path(const std::filesystem::path& root);

  /// Seed of sample `index` derived from the base scene seed.
  static std::uint64_t sample_seed(std::uint64_t base_seed, const std::string& split, int index);

  /// Generates `count` samples into `split`, appending to the manifest.
  /// Removes the split directory again if writing fails part-way.
  static std::vector<ManifestEntry> synthesize(const std::filesystem::path& root,
                                               const SceneSpec& spec, const std::string& split,
                                               int count);

  static std::vector<ManifestEntry> read_manifest(const std::filesystem::path& root);

  /// Loads every sample of `split` listed in the manifest (millimeter quantized).
  static std::vector<RgbdSample> load_split(const std::filesystem::path& root,
                                            const std::string& split);

  /// Validation membership by seed partition (about 10%).
  static bool is_validation_seed(std::uint64_t seed);
};

/// In-memory corpus: generates samples directly without touching disk.
std::vector<RgbdSample> synthesize_in_memory(const SceneSpec& spec, const std::string& split,
                                             int count);

/// Mean hole fraction over samples.
double mean_hole_fraction(const std::vector<RgbdSample>& samples);

}  // namespace aggnet
