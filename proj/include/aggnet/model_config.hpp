#pragma once

#include <cstdint>
#include <string>

namespace aggnet {

/// Ablation pipelines. G is the full model.
enum class Scheme { A, B, C, D, E, F, G };

enum class Fusion { None, Concat, Guided };

/// Which modules a scheme enables; one row of the ablation table.
struct SchemeTraits {
  Fusion fusion = Fusion::None;
  bool prefill = false;
  bool gconv = false;     // GConv encoder units
  bool ag_gconv = false;  // attention-guided encoder fusion
  bool ag_sc = false;     // attention-guided color skip
  bool gated_decoder = false;
  bool color_branch() const { return fusion != Fusion::None; }
  bool color_skip() const { return fusion == Fusion::Concat || ag_sc; }
};

SchemeTraits traits(Scheme s);
Scheme parse_scheme(const std::string& text);  // throws ConfigError
char scheme_letter(Scheme s);

struct LossWeights {
  double lambda_delta = 0.7;
  double lambda_p = 0.3;
  double huber_delta = 1.0;
  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

struct ModelConfig {
  int m = 4;   // encoder / decoder depth
  int k = 3;   // kernel size of the fine-tuning network
  int r = 4;   // CA hidden width ratio, M = r * L
  int c0 = 8;  // depth-branch channels at layer 1, doubling per layer
  int height = 64;
  int width = 64;
  Scheme scheme = Scheme::G;
  double max_depth = 10.0;  // input / output depth scale in meters
  int prefill_channels = 16;
  int prefill_kernel = 7;
  double leaky_slope = 0.2;
  LossWeights loss;

  void validate() const;
  int channels(int layer) const { return c0 << (layer - 1); }  // layer in [1, m]
  bool operator==(const ModelConfig&) const = default;
};

/// Single-line JSON object with every ModelConfig field.
std::string to_json_line(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& line);

}  // namespace aggnet
