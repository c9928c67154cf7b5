#include "aggnet/image.hpp"

#include <algorithm>

namespace aggnet {

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

DepthImage DepthImage::from_raw(DepthMap raw) {
  DepthImage out;
  out.valid = Mask(raw.height, raw.width);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw.meters[i] > 0) {
      out.valid.bits[i] = 1;
    } else {
      raw.meters[i] = 0;  // negatives and NaN also count as invalid
    }
  }
  out.values = std::move(raw);
  return out;
}

}  // namespace aggnet
