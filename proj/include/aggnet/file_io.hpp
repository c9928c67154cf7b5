#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace aggnet {

/// Whole-file binary read; throws IoError naming the path.
std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file and renames it into place.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace aggnet
