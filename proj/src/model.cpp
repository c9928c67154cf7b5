#include "aggnet/model.hpp"

#include "aggnet/errors.hpp"

AGGNET_BEGIN_NAMESPACE

Batch make_batch(const std::vector<const RgbdSample*>& samples) {
  if (samples.empty()) throw ShapeError("make_batch: no samples");
  const int h = samples.front()->gt_depth.height;
  const int w = samples.front()->gt_depth.width;
  const int n = static_cast<int>(samples.size());
  Batch b{Tensor(Shape{n, 1, h, w}), Tensor(Shape{n, 1, h, w}), Tensor(Shape{n, 3, h, w}),
          Tensor(Shape{n, 1, h, w})};
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    const RgbdSample& s = *samples[i];
    if (s.gt_depth.height != h || s.gt_depth.width != w || s.rgb.height != h ||
        s.rgb.width != w || s.raw_depth.height() != h || s.raw_depth.width() != w) {
      throw ShapeError("make_batch: samples have different dimensions");
    }
    for (std::size_t p = 0; p < plane; ++p) {
      const float raw = s.raw_depth.values.meters[p];
      b.raw[i * plane + p] = static_cast<Real>(raw);
      b.valid[i * plane + p] = s.raw_depth.valid.bits[p] ? Real(1) : Real(0);
      b.gt[i * plane + p] = static_cast<Real>(s.gt_depth.meters[p]);
    }
    for (std::size_t p = 0; p < 3 * plane; ++p) b.rgb[i * 3 * plane + p] = s.rgb.planes[p];
  }
  return b;
}

Batch make_batch(const DepthImage& raw, const RgbImage& rgb) {
  const int h = raw.height();
  const int w = raw.width();
  if (rgb.height != h || rgb.width != w) {
    throw ShapeError("rgb image and raw depth have different dimensions");
  }
  Batch b{Tensor(Shape{1, 1, h, w}), Tensor(Shape{1, 1, h, w}), Tensor(Shape{1, 3, h, w}), {}};
  for (std::size_t p = 0; p < raw.values.size(); ++p) {
    b.raw[p] = static_cast<Real>(raw.values.meters[p]);
    b.valid[p] = raw.valid.bits[p] ? Real(1) : Real(0);
  }
  for (std::size_t p = 0; p < rgb.planes.size(); ++p) b.rgb[p] = rgb.planes[p];
  return b;
}

namespace {

std::string layer_name(const char* base, int i) { return base + std::to_string(i); }

// Heads start close to the constant mid-range depth. At full Kaiming scale the
// initial output is metres of noise; SGD then first shrinks the whole decoder
// towards a constant and takes hundreds of steps to recover.
void init_output_head(Conv& head) {
  for (Real& v : head.weight.data()) v *= Real(0.1);
  for (Real& v : head.bias.data()) v = Real(0.5);
}

}  // namespace

AggNet::AggNet(const ModelConfig& config, std::uint64_t seed)
    : config_(config), traits_(traits(config.scheme)) {
  config_.validate();
  CounterRng rng(derive_seed(seed, 0x1417));
  Init init{rng, config_.leaky_slope};
  const int k = config_.k;
  const int m = config_.m;

  if (traits_.prefill) {
    const int p = config_.prefill_channels;
    const int pk = config_.prefill_kernel;
    prefill_down1_ = VConv(store_, "prefill.down1", 4, p, pk, 2, init);
    prefill_down2_ = VConv(store_, "prefill.down2", p, 2 * p, pk, 2, init);
    prefill_up1_ = VDeconv(store_, "prefill.up1", 2 * p, p, pk, 2, init);
    prefill_up2_ = VDeconv(store_, "prefill.up2", p, p, pk, 2, init);
    prefill_head_ = Conv(store_, "prefill.head", p, 1, 1, 1, init);
    init_output_head(prefill_head_);
  }

  encoder_.resize(m);
  for (int i = 1; i <= m; ++i) {
    EncoderLayer& L = encoder_[i - 1];
    const std::string enc = layer_name("enc", i);
    const int c_in = i == 1 ? 1 : config_.channels(i - 1);
    const int c = config_.channels(i);
    if (traits_.color_branch()) {
      const int color_in = i == 1 ? 3 : config_.channels(i - 1);
      L.color = VConv(store_, layer_name("color", i), color_in, c, k, 2, init);
    }
    if (traits_.ag_gconv) {
      L.guided = AgGConv(store_, enc + ".agg", c_in, c, k, config_.r, config_.height >> i,
                         config_.width >> i, init);
    } else if (traits_.gconv) {
      L.gated_s1 = GConv(store_, enc + ".s1", c_in, c, k, 1, init);
      L.gated_s2 = GConv(store_, enc + ".s2", c, c, k, 2, init);
    } else {
      L.plain_s1 = VConv(store_, enc + ".s1", c_in, c, k, 1, init);
      L.plain_s2 = VConv(store_, enc + ".s2", c, c, k, 2, init);
    }
    if (traits_.fusion == Fusion::Concat) {
      L.concat_1x1 = VConv(store_, enc + ".concat", 2 * c, c, 1, 1, init);
    }
  }

  const int cm = config_.channels(m);
  if (traits_.ag_gconv) {
    bottleneck_plain_.push_back(VConv(store_, "bottleneck.0", cm, cm, k, 1, init));
    bottleneck_plain_.push_back(VConv(store_, "bottleneck.1", cm, cm, k, 1, init));
  } else if (traits_.gconv) {
    bottleneck_gated_ = GConv(store_, "bottleneck.0", cm, cm, k, 1, init);
  } else {
    bottleneck_plain_.push_back(VConv(store_, "bottleneck.0", cm, cm, k, 1, init));
  }

  decoder_.resize(m);
  for (int i = m; i >= 1; --i) {
    DecoderLayer& L = decoder_[i - 1];
    const std::string dec = layer_name("dec", i);
    const int c = config_.channels(i);
    const int c_out = i > 1 ? config_.channels(i - 1) : config_.c0;
    const int s_all = (traits_.color_skip() ? 3 : 2) * c;
    if (traits_.ag_sc) L.ag_sc = AgSc(store_, dec + ".agsc", c, k, init);
    if (traits_.gated_decoder) {
      L.gated_up = DeGConv(store_, dec + ".up", s_all, c_out, k, 2, init);
    } else {
      L.plain_up = VDeconv(store_, dec + ".up", s_all, c_out, k, 2, init);
    }
  }
  head_ = Conv(store_, "head", config_.c0, 1, 1, 1, init);
  init_output_head(head_);
}

Tensor AggNet::prefill(const Tensor& raw, const Tensor& valid, const Tensor& rgb,
                       Mode mode) const {
  if (!traits_.prefill) throw ConfigError("scheme has no pre-filling network");
  const Shape& s = raw.shape();
  if (s.c != 1 || s.h % 4 != 0 || s.w % 4 != 0) {
    throw ConfigError("pre-filling needs (n, 1, H, W) with H, W divisible by 4, got " + s.str());
  }
  const Real scale = static_cast<Real>(config_.max_depth);
  Tensor x = ops::concat_channels({ops::scale(raw, Real(1) / scale), rgb});
  x = prefill_down2_.forward(prefill_down1_.forward(x, mode), mode);
  x = prefill_up2_.forward(prefill_up1_.forward(x, mode), mode);
  Tensor dense = ops::leaky_relu(prefill_head_.forward(x), static_cast<Real>(config_.leaky_slope));
  dense = ops::clamp_min(ops::scale(dense, scale), static_cast<Real>(kPrefillFloor));
  return ops::where(valid, raw, dense);
}

Encoded AggNet::encode(const Tensor& depth, const Tensor& rgb, Mode mode) const {
  const Shape& s = depth.shape();
  if (s.c != 1 || s.h != config_.height || s.w != config_.width) {
    throw ShapeError("encode: depth " + s.str() + " does not match the configured " +
                     std::to_string(config_.height) + "x" + std::to_string(config_.width));
  }
  if (rgb.shape() != Shape{s.n, 3, s.h, s.w}) {
    throw ShapeError("encode: rgb " + rgb.shape().str() + " does not match depth " + s.str());
  }
  Encoded out;
  Tensor d = ops::scale(depth, static_cast<Real>(1.0 / config_.max_depth));
  Tensor c = rgb;
  for (const EncoderLayer& L : encoder_) {
    if (traits_.color_branch()) c = L.color.forward(c, mode);
    if (traits_.ag_gconv) {
      d = L.guided.forward(d, c, mode);
    } else {
      if (traits_.gconv) {
        d = L.gated_s2.forward(L.gated_s1.forward(d, mode), mode);
      } else {
        d = L.plain_s2.forward(L.plain_s1.forward(d, mode), mode);
      }
      if (traits_.fusion == Fusion::Concat) {
        d = L.concat_1x1.forward(ops::concat_channels({d, c}), mode);
      }
    }
    out.depth_skips.push_back(d);
    if (traits_.color_branch()) out.color_skips.push_back(c);
  }
  out.bottleneck = bottleneck(d, mode);
  return out;
}

Tensor AggNet::bottleneck(const Tensor& x, Mode mode) const {
  if (traits_.gconv) return bottleneck_gated_.forward(x, mode);
  Tensor y = x;
  for (const auto& unit : bottleneck_plain_) y = unit.forward(y, mode);
  return y;
}

Tensor AggNet::decode(const Encoded& encoded, Mode mode) const {
  const int m = config_.m;
  if (static_cast<int>(encoded.depth_skips.size()) != m ||
      (traits_.color_skip() && static_cast<int>(encoded.color_skips.size()) != m)) {
    throw ShapeError("decode: skip count does not match m=" + std::to_string(m));
  }
  Tensor r = encoded.bottleneck;
  for (int i = m; i >= 1; --i) {
    const DecoderLayer& L = decoder_[i - 1];
    const Tensor& fd = encoded.depth_skips[i - 1];
    if (fd.shape() != r.shape()) {
      throw ShapeError("decode: depth skip " + fd.shape().str() + " vs decoder features " +
                       r.shape().str());
    }
    std::vector<Tensor> parts{r, fd};
    if (traits_.color_skip()) {
      const Tensor& fc = encoded.color_skips[i - 1];
      parts.push_back(traits_.ag_sc ? L.ag_sc.forward(fc, r, mode) : fc);
    }
    Tensor s_all = ops::concat_channels(parts);
    r = traits_.gated_decoder ? L.gated_up.forward(s_all, mode) : L.plain_up.forward(s_all, mode);
  }
  Tensor y = ops::leaky_relu(head_.forward(r), static_cast<Real>(config_.leaky_slope));
  // The clamp has no gradient below zero; applied during training it lets the
  // head die for good once every pixel goes negative.
  if (mode == Mode::Eval) y = ops::clamp_min(y, Real(0));
  return ops::scale(y, static_cast<Real>(config_.max_depth));
}

Tensor AggNet::forward(const Batch& batch, Mode mode) const {
  Tensor depth = traits_.prefill ? prefill(batch.raw, batch.valid, batch.rgb, mode) : batch.raw;
  return decode(encode(depth, batch.rgb, mode), mode);
}

DepthImage AggNet::prefill(const DepthImage& raw, const RgbImage& rgb) const {
  Batch b = make_batch(raw, rgb);
  Tensor filled = prefill(b.raw, b.valid, b.rgb, Mode::Eval);
  DepthImage out;
  out.values = DepthMap(raw.height(), raw.width());
  for (std::size_t p = 0; p < out.values.size(); ++p) {
    out.values.meters[p] = static_cast<float>(filled[p]);
  }
  out.valid = Mask(raw.height(), raw.width(), true);
  return out;
}

DepthMap AggNet::predict(const DepthImage& raw, const RgbImage& rgb) const {
  Tensor y = forward(make_batch(raw, rgb), Mode::Eval);
  DepthMap out(raw.height(), raw.width());
  for (std::size_t p = 0; p < out.size(); ++p) out.meters[p] = static_cast<float>(y[p]);
  return out;
}

AGGNET_END_NAMESPACE
