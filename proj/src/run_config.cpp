#include "aggnet/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "aggnet/errors.hpp"
#include "aggnet/file_io.hpp"

namespace aggnet {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
  return std::string(buf, end);
}

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
T parse_number(const std::string& key, const std::string& text, T lo, T hi) {
  T v{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError("key '" + key + "': cannot parse '" + text + "' as a number");
  }
  if (!(v >= lo && v <= hi)) {
    std::ostringstream msg;
    msg << "key '" << key << "': " << text << " is outside [" << lo << ", " << hi << "]";
    throw ConfigError(msg.str());
  }
  return v;
}

// Field accessors are written as lambdas so one table covers all groups.
template <typename T, typename Access>
Key numeric(std::string name, Access access, T lo, T hi) {
  Key k;
  k.name = name;
  k.set = [name, access, lo, hi](RunConfig& c, const std::string& v) {
    access(c) = parse_number<T>(name, v, lo, hi);
  };
  k.get = [access](const RunConfig& c) {
    const T v = access(const_cast<RunConfig&>(c));
    if constexpr (std::is_floating_point_v<T>) {
      return format_double(v);
    } else {
      return std::to_string(v);
    }
  };
  return k;
}

template <typename Access>
Key boolean(std::string name, Access access) {
  Key k;
  k.name = name;
  k.set = [name, access](RunConfig& c, const std::string& v) {
    if (v == "true" || v == "1") {
      access(c) = true;
    } else if (v == "false" || v == "0") {
      access(c) = false;
    } else {
      throw ConfigError("key '" + name + "': expected true or false, got '" + v + "'");
    }
  };
  k.get = [access](const RunConfig& c) {
    return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false");
  };
  return k;
}

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::uint64_t kMaxU64 = std::numeric_limits<std::uint64_t>::max();

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
#define FIELD(expr) [](RunConfig& c) -> auto& { return c.expr; }
    k.push_back(numeric<int>("model.m", FIELD(model.m), 1, 8));
    k.push_back(numeric<int>("model.k", FIELD(model.k), 1, 15));
    k.push_back(numeric<int>("model.r", FIELD(model.r), 1, 64));
    k.push_back(numeric<int>("model.c0", FIELD(model.c0), 1, 512));
    k.push_back(numeric<int>("model.height", FIELD(model.height), 1, 4096));
    k.push_back(numeric<int>("model.width", FIELD(model.width), 1, 4096));
    {
      Key s;
      s.name = "model.scheme";
      s.set = [](RunConfig& c, const std::string& v) { c.model.scheme = parse_scheme(v); };
      s.get = [](const RunConfig& c) { return std::string(1, scheme_letter(c.model.scheme)); };
      k.push_back(s);
    }
    k.push_back(numeric<double>("model.max_depth", FIELD(model.max_depth), 1e-3, 65.535));
    k.push_back(numeric<int>("model.prefill_channels", FIELD(model.prefill_channels), 1, 512));
    k.push_back(numeric<int>("model.prefill_kernel", FIELD(model.prefill_kernel), 1, 15));
    k.push_back(numeric<double>("model.leaky_slope", FIELD(model.leaky_slope), 0.0, 1.0));
    k.push_back(numeric<double>("loss.lambda_delta", FIELD(model.loss.lambda_delta), 0.0, kInf));
    k.push_back(numeric<double>("loss.lambda_p", FIELD(model.loss.lambda_p), 0.0, kInf));
    k.push_back(numeric<double>("loss.huber_delta", FIELD(model.loss.huber_delta), 1e-12, kInf));
    k.push_back(numeric<std::uint64_t>("scene.seed", FIELD(scene.seed), 0, kMaxU64));
    k.push_back(numeric<int>("scene.min_objects", FIELD(scene.min_objects), 0, 64));
    k.push_back(numeric<int>("scene.max_objects", FIELD(scene.max_objects), 0, 64));
    k.push_back(numeric<double>("scene.min_depth", FIELD(scene.min_depth), 1e-3, 65.535));
    k.push_back(numeric<double>("scene.max_depth", FIELD(scene.max_depth), 1e-3, 65.535));
    k.push_back(numeric<double>("scene.speckle", FIELD(scene.holes.speckle), 0.0, kInf));
    k.push_back(numeric<double>("scene.edge_shadow", FIELD(scene.holes.edge_shadow), 0.0, kInf));
    k.push_back(numeric<double>("scene.large_blob", FIELD(scene.holes.large_blob), 0.0, kInf));
    k.push_back(numeric<double>("scene.hole_fraction", FIELD(scene.hole_fraction), 0.0, 0.9));
    k.push_back(numeric<double>("scene.texture_noise", FIELD(scene.texture_noise), 0.0, 1.0));
    k.push_back(numeric<double>("scene.edge_threshold", FIELD(scene.edge_threshold), 1e-6, kInf));
    k.push_back(numeric<int>("scene.shadow_radius_max", FIELD(scene.shadow_radius_max), 0, 64));
    k.push_back(numeric<int>("train.epochs", FIELD(train.epochs), 0, 1000000));
    k.push_back(numeric<int>("train.max_steps", FIELD(train.max_steps), 0, 100000000));
    k.push_back(numeric<int>("train.batch", FIELD(train.batch), 1, 4096));
    k.push_back(numeric<double>("train.lr", FIELD(train.lr), 0.0, 10.0));
    k.push_back(numeric<double>("train.min_lr", FIELD(train.min_lr), 0.0, 10.0));
    k.push_back(numeric<double>("train.momentum", FIELD(train.momentum), 0.0, 0.999999));
    k.push_back(numeric<double>("train.weight_decay", FIELD(train.weight_decay), 0.0, 1.0));
    k.push_back(numeric<double>("train.plateau_factor", FIELD(train.plateau_factor), 1e-6, 1.0));
    k.push_back(numeric<int>("train.plateau_patience", FIELD(train.plateau_patience), 1, 1000000));
    k.push_back(numeric<double>("train.plateau_threshold", FIELD(train.plateau_threshold), 0.0, 1.0));
    k.push_back(numeric<std::uint64_t>("train.seed", FIELD(train.seed), 0, kMaxU64));
    k.push_back(boolean("train.crop_resize", FIELD(train.crop_resize)));
    k.push_back(numeric<double>("train.crop_min_scale", FIELD(train.crop_min_scale), 1e-3, 1.0));
#undef FIELD
    std::sort(k.begin(), k.end(), [](const Key& a, const Key& b) { return a.name < b.name; });
    return k;
  }();
  return keys;
}

const Key& find_key(const std::string& name) {
  const auto& keys = registry();
  auto it = std::lower_bound(keys.begin(), keys.end(), name,
                             [](const Key& k, const std::string& n) { return k.name < n; });
  if (it == keys.end() || it->name != name) throw ConfigError("unknown config key '" + name + "'");
  return *it;
}

// Scene dims follow the model; cross-field checks run once all keys are in.
void finalize(RunConfig& cfg) {
  cfg.scene.height = cfg.model.height;
  cfg.scene.width = cfg.model.width;
  cfg.model.validate();
  cfg.scene.validate();
  cfg.train.validate();
}

}  // namespace

void TrainOptions::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (!(lr >= 0) || !(min_lr >= 0) || min_lr > lr) {
    throw ConfigError("learning rates must satisfy 0 <= min_lr <= lr");
  }
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
  if (!(plateau_factor > 0 && plateau_factor <= 1)) {
    throw ConfigError("plateau_factor must be in (0, 1]");
  }
  if (plateau_patience < 1) throw ConfigError("plateau_patience must be >= 1");
  if (!(plateau_threshold >= 0)) throw ConfigError("plateau_threshold must be >= 0");
  if (!(crop_min_scale > 0 && crop_min_scale <= 1)) {
    throw ConfigError("crop_min_scale must be in (0, 1]");
  }
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : registry()) out.push_back(k.name);
  return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  RunConfig next = cfg;
  find_key(key).set(next, trim(value));
  finalize(next);
  cfg = next;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t here = offset;
    offset += line.size() + 1;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value', got '" + t + "'", here);
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("duplicate config key '" + key + "'");
    find_key(key).set(cfg, value);
  }
  finalize(cfg);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  try {
    return parse_run_config(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.offset());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

RunConfig apply_overrides(const RunConfig& cfg, const std::vector<std::string>& assignments) {
  std::map<std::string, std::string> values;
  for (const auto& k : registry()) values[k.name] = k.get(cfg);
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + a + "' is not key=value");
    const std::string key = trim(std::string_view(a).substr(0, eq));
    find_key(key);
    values[key] = trim(std::string_view(a).substr(eq + 1));
  }
  std::string text;
  for (const auto& [k, v] : values) text += k + " = " + v + "\n";
  return parse_run_config(text);
}

std::string dump_run_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : registry()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

}  // namespace aggnet
