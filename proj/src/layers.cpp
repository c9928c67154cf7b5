#include "aggnet/layers.hpp"

#include <cmath>

#include "aggnet/errors.hpp"

AGGNET_BEGIN_NAMESPACE

Tensor ParamStore::add(const std::string& name, Shape shape, ParamKind kind) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  Tensor t(shape);
  if (kind == ParamKind::RunningVar) {
    for (Real& v : t.data()) v = Real(1);
  }
  Param p{name, t, kind};
  if (p.trainable()) p.value.set_requires_grad(true);
  index_.emplace(name, params_.size());
  params_.push_back(p);
  return t;
}

Tensor ParamStore::get(const std::string& name) const { return param(name).value; }

const Param& ParamStore::param(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return params_[it->second];
}

std::size_t ParamStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.trainable()) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.value.clear_grad();
}

std::size_t ParamStore::copy_matching(const ParamStore& other) {
  std::size_t copied = 0;
  for (auto& p : params_) {
    auto it = other.index_.find(p.name);
    if (it == other.index_.end()) continue;
    const Tensor& src = other.params_[it->second].value;
    if (src.shape() != p.value.shape()) continue;
    std::copy(src.data().begin(), src.data().end(), p.value.data().begin());
    ++copied;
  }
  return copied;
}

void Init::kaiming_uniform(Tensor& t, int fan_in) {
  const double gain = std::sqrt(2.0 / (1.0 + slope * slope));
  const double bound = gain * std::sqrt(3.0 / std::max(1, fan_in));
  uniform(t, bound);
}

void Init::uniform(Tensor& t, double bound) {
  for (Real& v : t.data()) v = static_cast<Real>(rng.uniform(-bound, bound));
}

Conv::Conv(ParamStore& store, const std::string& prefix, int c_in, int c_out, int k, int s,
           Init& init)
    : weight(store.add(prefix + ".weight", Shape{c_out, c_in, k, k}, ParamKind::ConvWeight)),
      bias(store.add(prefix + ".bias", Shape{1, c_out, 1, 1}, ParamKind::Bias)),
      stride(s) {
  init.kaiming_uniform(weight, c_in * k * k);
}

Deconv::Deconv(ParamStore& store, const std::string& prefix, int c_in, int c_out, int k, int s,
               Init& init)
    : weight(store.add(prefix + ".weight", Shape{c_in, c_out, k, k}, ParamKind::ConvWeight)),
      bias(store.add(prefix + ".bias", Shape{1, c_out, 1, 1}, ParamKind::Bias)),
      stride(s) {
  // Each output pixel sees about c_in * k * k / s^2 inputs.
  init.kaiming_uniform(weight, std::max(1, c_in * k * k / (s * s)));
}

BatchNorm::BatchNorm(ParamStore& store, const std::string& prefix, int channels)
    : gamma(store.add(prefix + ".gamma", Shape{1, channels, 1, 1}, ParamKind::Gamma)),
      beta(store.add(prefix + ".beta", Shape{1, channels, 1, 1}, ParamKind::Beta)),
      running_mean(store.add(prefix + ".running_mean", Shape{1, channels, 1, 1},
                             ParamKind::RunningMean)),
      running_var(
          store.add(prefix + ".running_var", Shape{1, channels, 1, 1}, ParamKind::RunningVar)) {
  for (Real& v : gamma.data()) v = Real(1);
}

Tensor BatchNorm::forward(const Tensor& x, Mode mode) const {
  ops::BatchNormState state{running_mean, running_var};
  return ops::batch_norm(x, gamma, beta, state, mode);
}

VConv::VConv(ParamStore& store, const std::string& prefix, int c_in, int c_out, int k, int stride,
             Init& init)
    : conv(store, prefix + ".conv", c_in, c_out, k, stride, init),
      bn(store, prefix + ".bn", c_out),
      slope(init.slope) {}

Tensor VConv::forward(const Tensor& x, Mode mode) const {
  return ops::leaky_relu(bn.forward(conv.forward(x), mode), static_cast<Real>(slope));
}

VDeconv::VDeconv(ParamStore& store, const std::string& prefix, int c_in, int c_out, int k,
                 int stride, Init& init)
    : deconv(store, prefix + ".deconv", c_in, c_out, k, stride, init),
      bn(store, prefix + ".bn", c_out),
      slope(init.slope) {}

Tensor VDeconv::forward(const Tensor& x, Mode mode) const {
  return ops::leaky_relu(bn.forward(deconv.forward(x), mode), static_cast<Real>(slope));
}

GConv::GConv(ParamStore& store, const std::string& prefix, int c_in, int c_out, int k, int stride,
             Init& init)
    : feature(store, prefix + ".feature", c_in, c_out, k, stride, init),
      bn(store, prefix + ".bn", c_out),
      gate(store, prefix + ".gate", c_in, c_out, k, stride, init),
      slope(init.slope) {}

Tensor GConv::forward(const Tensor& x, Mode mode) const {
  Tensor f = ops::leaky_relu(bn.forward(feature.forward(x), mode), static_cast<Real>(slope));
  return ops::mul(f, gate_values(x));
}

DeGConv::DeGConv(ParamStore& store, const std::string& prefix, int c_in, int c_out, int k,
                 int stride, Init& init)
    : feature(store, prefix + ".feature", c_in, c_out, k, stride, init),
      bn(store, prefix + ".bn", c_out),
      gate(store, prefix + ".gate", c_in, c_out, k, stride, init),
      slope(init.slope) {}

Tensor DeGConv::forward(const Tensor& x, Mode mode) const {
  Tensor f = ops::leaky_relu(bn.forward(feature.forward(x), mode), static_cast<Real>(slope));
  return ops::mul(f, gate_values(x));
}

void CaConfig::validate() const {
  if (length < 1 || ratio < 1) {
    throw ConfigError("contextual attention needs L >= 1 and r >= 1, got L=" +
                      std::to_string(length) + " r=" + std::to_string(ratio));
  }
}

ContextualAttention::ContextualAttention(ParamStore& store, const std::string& prefix,
                                         CaConfig cfg, Init& init)
    : config(cfg) {
  cfg.validate();
  const int L = cfg.length;
  const int M = cfg.hidden();
  fc1_weight = store.add(prefix + ".fc1.weight", Shape{M, L, 1, 1}, ParamKind::FcWeight);
  fc1_bias = store.add(prefix + ".fc1.bias", Shape{1, M, 1, 1}, ParamKind::Bias);
  fc2_weight = store.add(prefix + ".fc2.weight", Shape{L, M, 1, 1}, ParamKind::FcWeight);
  fc2_bias = store.add(prefix + ".fc2.bias", Shape{1, L, 1, 1}, ParamKind::Bias);
  init.uniform(fc1_weight, 1.0 / std::sqrt(static_cast<double>(L)));
  init.uniform(fc1_bias, 1.0 / std::sqrt(static_cast<double>(L)));
  init.uniform(fc2_weight, 1.0 / std::sqrt(static_cast<double>(M)));
  init.uniform(fc2_bias, 1.0 / std::sqrt(static_cast<double>(M)));
}

Tensor ContextualAttention::forward(const Tensor& features) const {
  const Shape& s = features.shape();
  if (static_cast<int>(s.plane()) != config.length) {
    throw ShapeError("contextual attention: slice length " + std::to_string(s.plane()) +
                     " does not match L=" + std::to_string(config.length));
  }
  // Every (batch, channel) slice is one row of the shared MLP.
  Tensor rows = ops::reshape(features, Shape{s.n * s.c, config.length, 1, 1});
  Tensor hidden = ops::relu(ops::fully_connected(rows, fc1_weight, fc1_bias));
  Tensor gate = ops::sigmoid(ops::fully_connected(hidden, fc2_weight, fc2_bias));
  return ops::reshape(gate, s);
}

AgGConv::AgGConv(ParamStore& store, const std::string& prefix, int c_in, int c_out, int k,
                 int ratio, int out_h, int out_w, Init& init)
    : depth_s1(store, prefix + ".depth_s1", c_in, c_out, k, 1, init),
      depth_s2(store, prefix + ".depth_s2", c_out, c_out, k, 2, init),
      fuse(store, prefix + ".fuse", 2 * c_out, c_out, k, 1, init),
      attention(store, prefix + ".ca", CaConfig{out_h * out_w, ratio}, init) {}

AgGConv::Trace AgGConv::trace(const Tensor& depth, const Tensor& color, Mode mode) const {
  const Shape& ds = depth.shape();
  const Shape& cs = color.shape();
  if (cs.n != ds.n || cs.h * 2 != ds.h || cs.w * 2 != ds.w) {
    throw ShapeError("AG-GConv: color features " + cs.str() +
                     " must be at half the spatial size of depth features " + ds.str());
  }
  Trace t;
  t.depth_features = depth_s2.forward(depth_s1.forward(depth, mode), mode);
  if (t.depth_features.shape().c != cs.c) {
    throw ShapeError("AG-GConv: color features " + cs.str() + " do not have " +
                     std::to_string(t.depth_features.shape().c) + " channels");
  }
  Tensor fused = fuse.forward(ops::concat_channels({t.depth_features, color}), mode);
  t.gate = attention.forward(fused);
  t.output = ops::mul(t.depth_features, t.gate);
  return t;
}

Tensor AgGConv::forward(const Tensor& depth, const Tensor& color, Mode mode) const {
  return trace(depth, color, mode).output;
}

AgSc::AgSc(ParamStore& store, const std::string& prefix, int channels, int k, Init& init)
    : depth_1x1(store, prefix + ".depth_1x1", channels, channels, 1, 1, init),
      color_kxk(store, prefix + ".color_kxk", channels, channels, k, 1, init),
      gate_conv(store, prefix + ".gate_conv", 2 * channels, channels, k, 1, init),
      gate_bn(store, prefix + ".gate_bn", channels),
      gate_out(store, prefix + ".gate_out", channels, channels, 1, 1, init) {}

Tensor AgSc::gate_values(const Tensor& color, const Tensor& depth, Mode mode) const {
  if (color.shape() != depth.shape()) {
    throw ShapeError("AG-SC: color skip " + color.shape().str() + " and decoder features " +
                     depth.shape().str() + " differ");
  }
  Tensor r = depth_1x1.forward(depth, mode);
  Tensor f = color_kxk.forward(color, mode);
  Tensor h = ops::relu(gate_bn.forward(gate_conv.forward(ops::concat_channels({r, f})), mode));
  return ops::sigmoid(gate_out.forward(h));
}

Tensor AgSc::forward(const Tensor& color, const Tensor& depth, Mode mode) const {
  return ops::mul(color, gate_values(color, depth, mode));
}

AGGNET_END_NAMESPACE
