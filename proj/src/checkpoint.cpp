#include "aggnet/checkpoint.hpp"

#include <unordered_map>

#include "aggnet/errors.hpp"
#include "aggnet/file_io.hpp"

AGGNET_BEGIN_NAMESPACE

std::vector<aggn::Entry> to_entries(const ParamStore& store) {
  std::vector<aggn::Entry> out;
  out.reserve(store.entries().size());
  for (const Param& p : store.entries()) {
    const Shape& s = p.value.shape();
    aggn::Entry e;
    e.name = p.name;
    e.dims = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
              static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
    e.values.assign(p.value.data().begin(), p.value.data().end());
    out.push_back(std::move(e));
  }
  return out;
}

void load_entries(ParamStore& store, const std::vector<aggn::Entry>& entries) {
  std::unordered_map<std::string, const aggn::Entry*> by_name;
  for (const auto& e : entries) {
    if (!by_name.emplace(e.name, &e).second) {
      throw ConfigError("parameter file lists '" + e.name + "' twice");
    }
  }
  if (by_name.size() != store.entries().size()) {
    throw ConfigError("parameter file has " + std::to_string(by_name.size()) +
                      " tensors, model expects " + std::to_string(store.entries().size()));
  }
  for (Param& p : store.entries()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw ConfigError("parameter file lacks '" + p.name + "'");
    const aggn::Entry& e = *it->second;
    const Shape& s = p.value.shape();
    const std::vector<std::uint32_t> dims = {
        static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
        static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
    if (e.dims != dims) throw ShapeError("parameter '" + p.name + "' has different dims on disk");
    auto dst = p.value.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<Real>(e.values[i]);
  }
}

std::string encode_checkpoint(const AggNet& model) {
  return to_json_line(model.config()) + "\n" + aggn::encode(to_entries(model.params()));
}

std::unique_ptr<AggNet> decode_checkpoint(std::string_view bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string_view::npos) throw ParseError("checkpoint has no header line", 0);
  ModelConfig cfg = model_config_from_json(std::string(bytes.substr(0, newline)));
  auto model = std::make_unique<AggNet>(cfg, 0);
  std::vector<aggn::Entry> entries;
  try {
    entries = aggn::decode(bytes.substr(newline + 1));
  } catch (const ParseError& e) {
    throw ParseError("checkpoint body: " + e.detail(), newline + 1 + e.offset());
  }
  load_entries(model->params(), entries);
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const AggNet& model) {
  write_file(path, encode_checkpoint(model));
}

std::unique_ptr<AggNet> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

AGGNET_END_NAMESPACE
