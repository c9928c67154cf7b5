#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "aggnet/image.hpp"
#include "aggnet/layers.hpp"
#include "aggnet/model_config.hpp"
#include "aggnet/synth.hpp"

AGGNET_BEGIN_NAMESPACE

/// Network inputs for n samples. Depth tensors are in meters.
struct Batch {
  Tensor raw;    // (n, 1, H, W), 0 where invalid
  Tensor valid;  // (n, 1, H, W), 1 where raw > 0
  Tensor rgb;    // (n, 3, H, W) in [0, 1]
  Tensor gt;     // (n, 1, H, W), dense ground truth (undefined if unknown)
};

Batch make_batch(const std::vector<const RgbdSample*>& samples);
Batch make_batch(const DepthImage& raw, const RgbImage& rgb);

/// Per-scale encoder outputs. Skip index i - 1 holds layer i (scale 1/2^i).
struct Encoded {
  Tensor bottleneck;
  std::vector<Tensor> depth_skips;
  std::vector<Tensor> color_skips;  // empty when the scheme has no color branch
};

/// Smallest depth the pre-filling network may emit, in meters.
inline constexpr double kPrefillFloor = 1e-3;

/// Two-stage depth completion network: a pre-filling autoencoder followed by
/// a dual-branch (depth / color) UNet whose fusion blocks depend on the scheme.
class AggNet {
 public:
  AggNet(const ModelConfig& config, std::uint64_t seed);
  AggNet(const AggNet&) = delete;
  AggNet& operator=(const AggNet&) = delete;

  const ModelConfig& config() const { return config_; }
  const SchemeTraits& scheme() const { return traits_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  /// Valid pixels of `raw` pass through unchanged; invalid ones take the
  /// autoencoder's prediction, which is at least kPrefillFloor meters.
  Tensor prefill(const Tensor& raw, const Tensor& valid, const Tensor& rgb, Mode mode) const;
  /// `depth` in meters, shape (n, 1, H, W).
  Encoded encode(const Tensor& depth, const Tensor& rgb, Mode mode) const;
  /// Depth prediction in meters, (n, 1, H, W). Eval mode clamps it to >= 0;
  /// Train mode keeps the LeakyReLU tail so the loss always has a gradient.
  Tensor decode(const Encoded& encoded, Mode mode) const;
  Tensor forward(const Batch& batch, Mode mode) const;

  /// Single-image inference helpers (eval mode).
  DepthImage prefill(const DepthImage& raw, const RgbImage& rgb) const;
  DepthMap predict(const DepthImage& raw, const RgbImage& rgb) const;

  /// Exposed for ablation tests.
  struct EncoderLayer {
    VConv color;  // stride-2 color unit
    // Schemes A/B: two VConv; C/E: two GConv; D/F/G: one AgGConv.
    VConv plain_s1, plain_s2;
    GConv gated_s1, gated_s2;
    AgGConv guided;
    VConv concat_1x1;  // B/C/E
  };
  struct DecoderLayer {
    AgSc ag_sc;       // E/F/G
    VDeconv plain_up;  // A/B
    DeGConv gated_up;  // C..G
  };
  std::vector<EncoderLayer>& encoder_layers() { return encoder_; }
  std::vector<DecoderLayer>& decoder_layers() { return decoder_; }

 private:
  Tensor bottleneck(const Tensor& x, Mode mode) const;

  ModelConfig config_;
  SchemeTraits traits_;
  ParamStore store_;

  VConv prefill_down1_, prefill_down2_;
  VDeconv prefill_up1_, prefill_up2_;
  Conv prefill_head_;

  std::vector<EncoderLayer> encoder_;
  std::vector<VConv> bottleneck_plain_;
  GConv bottleneck_gated_;
  std::vector<DecoderLayer> decoder_;
  Conv head_;
};

AGGNET_END_NAMESPACE
