#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace aggnet::aggn {

inline constexpr char kMagic[4] = {'A', 'G', 'G', 'N'};
inline constexpr std::uint32_t kVersion = 1;

/// One named array. Values are always stored as little-endian float32.
struct Entry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

/// Binary layout:
///   "AGGN" | version u32 | count u32 |
///   per entry: name_len u32 | name bytes | rank u32 | dims u32[rank] | f32[prod(dims)]
/// All integers little-endian.
std::string encode(const std::vector<Entry>& entries);

/// Throws ParseError (with byte offset) on truncation, bad magic/version, or
/// a dims product that does not fit the remaining bytes.
std::vector<Entry> decode(std::string_view bytes);

}  // namespace aggnet::aggn
