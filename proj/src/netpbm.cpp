#include "aggnet/netpbm.hpp"

#include <algorithm>
#include <cmath>

#include "aggnet/errors.hpp"
#include "aggnet/file_io.hpp"

namespace aggnet::netpbm {

namespace {

struct Header {
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::size_t raster_offset = 0;
};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

class HeaderParser {
 public:
  HeaderParser(std::string_view bytes, HeaderComments* comments)
      : bytes_(bytes), comments_(comments) {}

  Header parse(std::string_view magic) {
    if (bytes_.size() < 2 || bytes_.substr(0, 2) != magic) {
      throw ParseError("bad magic, expected " + std::string(magic), 0);
    }
    pos_ = 2;
    Header h;
    h.width = number("width");
    h.height = number("height");
    h.maxval = number("maxval");
    if (h.width <= 0 || h.height <= 0) throw ParseError("image dimensions must be positive", pos_);
    if (h.maxval <= 0 || h.maxval > 65535) {
      throw ParseError("maxval must be in [1, 65535], got " + std::to_string(h.maxval), pos_);
    }
    if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) {
      throw ParseError("missing whitespace before raster", pos_);
    }
    h.raster_offset = pos_ + 1;
    return h;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (is_space(c)) {
        ++pos_;
      } else if (c == '#') {
        const std::size_t start = pos_ + 1;
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
        if (comments_) {
          std::string line(bytes_.substr(start, pos_ - start));
          if (!line.empty() && line.front() == ' ') line.erase(0, 1);
          comments_->lines.push_back(line);
        }
      } else {
        break;
      }
    }
  }

  int number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long long v = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000'000) throw ParseError(std::string(what) + " is too large", start);
      ++pos_;
    }
    if (pos_ == start) {
      throw ParseError(std::string("expected ") + what +
                           (pos_ >= bytes_.size() ? " but reached end of file" : ""),
                       pos_);
    }
    return static_cast<int>(v);
  }

  std::string_view bytes_;
  HeaderComments* comments_;
  std::size_t pos_ = 0;
};

std::string header(const char* magic, int w, int h, int maxval, const HeaderComments& comments) {
  std::string out = magic;
  out += '\n';
  for (const auto& line : comments.lines) out += "# " + line + "\n";
  out += std::to_string(w) + " " + std::to_string(h) + "\n" + std::to_string(maxval) + "\n";
  return out;
}

void require_raster(std::string_view bytes, const Header& h, std::size_t needed) {
  const std::size_t available = bytes.size() - std::min(bytes.size(), h.raster_offset);
  if (available < needed) {
    throw ParseError("truncated raster: need " + std::to_string(needed) + " bytes, have " +
                         std::to_string(available),
                     bytes.size());
  }
}

}  // namespace

std::uint16_t meters_to_mm(float meters) {
  if (!(meters > 0)) return 0;
  const double mm = std::round(static_cast<double>(meters) * 1000.0);
  return static_cast<std::uint16_t>(std::min(mm, 65535.0));
}

float mm_to_meters(std::uint16_t mm) { return static_cast<float>(mm / 1000.0); }

DepthMap quantize_mm(const DepthMap& depth) {
  DepthMap out = depth;
  for (float& v : out.meters) v = mm_to_meters(meters_to_mm(v));
  return out;
}

std::string encode_depth(const DepthMap& depth, const HeaderComments& comments) {
  std::string out = header("P5", depth.width, depth.height, 65535, comments);
  out.reserve(out.size() + depth.size() * 2);
  for (float v : depth.meters) {
    const std::uint16_t mm = meters_to_mm(v);
    out.push_back(static_cast<char>(mm >> 8));
    out.push_back(static_cast<char>(mm & 0xff));
  }
  return out;
}

DepthMap decode_depth(std::string_view bytes, HeaderComments* comments) {
  const Header h = HeaderParser(bytes, comments).parse("P5");
  const std::size_t bytes_per = h.maxval > 255 ? 2 : 1;
  const std::size_t pixels = static_cast<std::size_t>(h.width) * h.height;
  require_raster(bytes, h, pixels * bytes_per);
  DepthMap out(h.height, h.width);
  const auto* raster = reinterpret_cast<const unsigned char*>(bytes.data() + h.raster_offset);
  for (std::size_t i = 0; i < pixels; ++i) {
    const std::uint16_t mm = bytes_per == 2
                                 ? static_cast<std::uint16_t>((raster[2 * i] << 8) | raster[2 * i + 1])
                                 : raster[i];
    if (mm > h.maxval) {
      throw ParseError("sample exceeds maxval", h.raster_offset + i * bytes_per);
    }
    out.meters[i] = mm_to_meters(mm);
  }
  return out;
}

std::string encode_rgb(const RgbImage& rgb, const HeaderComments& comments) {
  std::string out = header("P6", rgb.width, rgb.height, 255, comments);
  for (int y = 0; y < rgb.height; ++y) {
    for (int x = 0; x < rgb.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(rgb.at(c, y, x), 0.0f, 1.0f);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
      }
    }
  }
  return out;
}

RgbImage decode_rgb(std::string_view bytes, HeaderComments* comments) {
  const Header h = HeaderParser(bytes, comments).parse("P6");
  if (h.maxval > 255) throw ParseError("only 8-bit PPM is supported", h.raster_offset);
  const std::size_t pixels = static_cast<std::size_t>(h.width) * h.height;
  require_raster(bytes, h, pixels * 3);
  RgbImage out(h.height, h.width);
  const auto* raster = reinterpret_cast<const unsigned char*>(bytes.data() + h.raster_offset);
  for (int y = 0; y < h.height; ++y) {
    for (int x = 0; x < h.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const std::size_t i = (static_cast<std::size_t>(y) * h.width + x) * 3 + c;
        if (raster[i] > h.maxval) throw ParseError("sample exceeds maxval", h.raster_offset + i);
        out.at(c, y, x) = static_cast<float>(raster[i]) / static_cast<float>(h.maxval);
      }
    }
  }
  return out;
}

void write_depth(const std::filesystem::path& path, const DepthMap& depth,
                 const HeaderComments& comments) {
  write_file(path, encode_depth(depth, comments));
}

DepthMap read_depth(const std::filesystem::path& path, HeaderComments* comments) {
  const std::string bytes = read_file(path);
  try {
    return decode_depth(bytes, comments);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.offset());
  }
}

void write_rgb(const std::filesystem::path& path, const RgbImage& rgb,
               const HeaderComments& comments) {
  write_file(path, encode_rgb(rgb, comments));
}

RgbImage read_rgb(const std::filesystem::path& path, HeaderComments* comments) {
  const std::string bytes = read_file(path);
  try {
    return decode_rgb(bytes, comments);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.offset());
  }
}

}  // namespace aggnet::netpbm
