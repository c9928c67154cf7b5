#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace aggnet {

struct BlockGradcheck {
  std::string block;
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed = false;
};

/// Finite-difference checks of every layer and block in double precision on
/// small random inputs. Available in any build; always runs the double core.
std::vector<BlockGradcheck> run_block_gradchecks(std::uint64_t seed = 1, double tolerance = 1e-4);

}  // namespace aggnet
