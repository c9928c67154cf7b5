#include "aggnet/model_config.hpp"

#include "json.hpp"

#include "aggnet/errors.hpp"

namespace aggnet {

SchemeTraits traits(Scheme s) {
  SchemeTraits t;
  switch (s) {
    case Scheme::A:
      t.fusion = Fusion::None;
      t.prefill = true;
      break;
    case Scheme::B:
      t.fusion = Fusion::Concat;
      t.prefill = true;
      break;
    case Scheme::C:
      t.fusion = Fusion::Concat;
      t.prefill = true;
      t.gconv = true;
      break;
    case Scheme::D:
      t.fusion = Fusion::Guided;
      t.prefill = true;
      t.ag_gconv = true;
      break;
    case Scheme::E:
      t.fusion = Fusion::Concat;
      t.prefill = true;
      t.gconv = true;
      t.ag_sc = true;
      break;
    case Scheme::F:
      t.fusion = Fusion::Guided;
      t.ag_gconv = true;
      t.ag_sc = true;
      break;
    case Scheme::G:
      t.fusion = Fusion::Guided;
      t.prefill = true;
      t.ag_gconv = true;
      t.ag_sc = true;
      break;
  }
  t.gated_decoder = t.gconv || t.ag_gconv;
  return t;
}

Scheme parse_scheme(const std::string& text) {
  if (text.size() == 1) {
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
    if (c >= 'A' && c <= 'G') return static_cast<Scheme>(c - 'A');
  }
  throw ConfigError("unsupported scheme '" + text + "' (expected one of A..G)");
}

char scheme_letter(Scheme s) { return static_cast<char>('A' + static_cast<int>(s)); }

void LossWeights::validate() const {
  if (lambda_delta < 0 || lambda_p < 0 || lambda_delta + lambda_p <= 0) {
    throw ConfigError("loss weights must be non-negative with a positive sum");
  }
  if (!(huber_delta > 0)) throw ConfigError("huber_delta must be positive");
}

void ModelConfig::validate() const {
  if (m < 1 || m > 8) throw ConfigError("m must be in [1, 8], got " + std::to_string(m));
  if (k < 1 || k % 2 == 0) throw ConfigError("k must be odd and positive, got " + std::to_string(k));
  if (r < 1) throw ConfigError("r must be >= 1");
  if (c0 < 1) throw ConfigError("c0 must be >= 1");
  if (prefill_kernel < 1 || prefill_kernel % 2 == 0) {
    throw ConfigError("prefill_kernel must be odd and positive");
  }
  if (prefill_channels < 1) throw ConfigError("prefill_channels must be >= 1");
  if (!(max_depth > 0)) throw ConfigError("max_depth must be positive");
  const int div = 1 << m;
  if (height <= 0 || width <= 0 || height % div != 0 || width % div != 0) {
    throw ConfigError("input dims " + std::to_string(height) + "x" + std::to_string(width) +
                      " must be divisible by 2^m = " + std::to_string(div));
  }
  if (traits(scheme).prefill && (height % 4 != 0 || width % 4 != 0)) {
    throw ConfigError("pre-filling needs dims divisible by 4");
  }
  loss.validate();
}

std::string to_json_line(const ModelConfig& cfg) {
  nlohmann::ordered_json j;
  j["m"] = cfg.m;
  j["k"] = cfg.k;
  j["r"] = cfg.r;
  j["c0"] = cfg.c0;
  j["height"] = cfg.height;
  j["width"] = cfg.width;
  j["scheme"] = std::string(1, scheme_letter(cfg.scheme));
  j["max_depth"] = cfg.max_depth;
  j["prefill_channels"] = cfg.prefill_channels;
  j["prefill_kernel"] = cfg.prefill_kernel;
  j["leaky_slope"] = cfg.leaky_slope;
  j["lambda_delta"] = cfg.loss.lambda_delta;
  j["lambda_p"] = cfg.loss.lambda_p;
  j["huber_delta"] = cfg.loss.huber_delta;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint header is not valid JSON: ") + e.what(), e.byte);
  }
  ModelConfig cfg;
  try {
    cfg.m = j.at("m").get<int>();
    cfg.k = j.at("k").get<int>();
    cfg.r = j.at("r").get<int>();
    cfg.c0 = j.at("c0").get<int>();
    cfg.height = j.at("height").get<int>();
    cfg.width = j.at("width").get<int>();
    cfg.scheme = parse_scheme(j.at("scheme").get<std::string>());
    cfg.max_depth = j.at("max_depth").get<double>();
    cfg.prefill_channels = j.at("prefill_channels").get<int>();
    cfg.prefill_kernel = j.at("prefill_kernel").get<int>();
    cfg.leaky_slope = j.at("leaky_slope").get<double>();
    cfg.loss.lambda_delta = j.at("lambda_delta").get<double>();
    cfg.loss.lambda_p = j.at("lambda_p").get<double>();
    cfg.loss.huber_delta = j.at("huber_delta").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint header: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace aggnet
