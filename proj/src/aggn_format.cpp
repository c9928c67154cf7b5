#include "aggnet/aggn_format.hpp"

#include <bit>
#include <cstring>

#include "aggnet/errors.hpp"

namespace aggnet::aggn {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(std::string("truncated parameter file while reading ") + what, pos_);
    }
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode(const std::vector<Entry>& entries) {
  std::string out(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put_u32(out, static_cast<std::uint32_t>(e.dims.size()));
    for (auto d : e.dims) put_u32(out, d);
    for (float v : e.values) put_f32(out, v);
  }
  return out;
}

std::vector<Entry> decode(std::string_view bytes) {
  Reader in(bytes);
  auto magic = in.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw ParseError("bad magic, expected AGGN", 0);
  const std::size_t version_at = in.pos();
  const auto version = in.u32("version");
  if (version != kVersion) {
    throw ParseError("unsupported version " + std::to_string(version), version_at);
  }
  const auto count = in.u32("entry count");
  std::vector<Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    const auto name_len = in.u32("name length");
    e.name = std::string(in.take(name_len, "name"));
    const std::size_t rank_at = in.pos();
    const auto rank = in.u32("rank");
    if (rank > 8) throw ParseError("implausible rank " + std::to_string(rank), rank_at);
    std::uint64_t elems = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      e.dims.push_back(in.u32("dims"));
      elems *= e.dims.back();
      if (elems > in.remaining() / 4 + 1) {
        throw ParseError("dims of '" + e.name + "' exceed the file size", in.pos());
      }
    }
    auto raw = in.take(elems * 4, "values");
    e.values.resize(elems);
    for (std::size_t j = 0; j < elems; ++j) {
      std::uint32_t v = 0;
      for (int b = 0; b < 4; ++b) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[j * 4 + b])) << (8 * b);
      }
      e.values[j] = std::bit_cast<float>(v);
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace aggnet::aggn
