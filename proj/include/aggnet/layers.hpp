#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "aggnet/ops.hpp"
#include "aggnet/rng.hpp"
#include "aggnet/tensor.hpp"

AGGNET_BEGIN_NAMESPACE

using ops::Mode;

enum class ParamKind { ConvWeight, FcWeight, Bias, Gamma, Beta, RunningMean, RunningVar };

struct Param {
  std::string name;
  Tensor value;
  ParamKind kind;

  bool trainable() const { return kind != ParamKind::RunningMean && kind != ParamKind::RunningVar; }
  /// Weight decay applies to conv/FC weights and biases, not to batch-norm affine terms.
  bool decays() const {
    return kind == ParamKind::ConvWeight || kind == ParamKind::FcWeight || kind == ParamKind::Bias;
  }
};

/// Every tensor of a model, addressed by a unique dotted path.
class ParamStore {
 public:
  /// Registers a zero-filled tensor; trainable kinds get requires_grad.
  /// Throws ConfigError on a duplicate name.
  Tensor add(const std::string& name, Shape shape, ParamKind kind);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor get(const std::string& name) const;
  const Param& param(const std::string& name) const;

  std::vector<Param>& entries() { return params_; }
  const std::vector<Param>& entries() const { return params_; }

  std::size_t trainable_count() const;
  void zero_grad();

  /// Copies values from `other` for every name present in both with equal
  /// shape. Returns how many tensors were copied.
  std::size_t copy_matching(const ParamStore& other);

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Weight initialization. Conv weights: Kaiming-uniform on fan-in with the
/// LeakyReLU gain; FC weights and biases: uniform +-1/sqrt(fan_in); conv
/// biases start at zero.
struct Init {
  CounterRng& rng;
  double slope = 0.2;
  void kaiming_uniform(Tensor& t, int fan_in);
  void uniform(Tensor& t, double bound);
};

struct Conv {
  Tensor weight;  // (c_out, c_in, k, k)
  Tensor bias;    // (1, c_out, 1, 1)
  int stride = 1;

  Conv() = default;
  Conv(ParamStore& store, const std::string& prefix, int c_in, int c_out, int k, int stride,
       Init& init);
  Tensor forward(const Tensor& x) const { return ops::conv2d(x, weight, bias, stride); }
};

struct Deconv {
  Tensor weight;  // (c_in, c_out, k, k)
  Tensor bias;
  int stride = 2;

  Deconv() = default;
  Deconv(ParamStore& store, const std::string& prefix, int c_in, int c_out, int k, int stride,
         Init& init);
  Tensor forward(const Tensor& x) const { return ops::deconv2d(x, weight, bias, stride); }
};

struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;

  BatchNorm() = default;
  BatchNorm(ParamStore& store, const std::string& prefix, int channels);
  Tensor forward(const Tensor& x, Mode mode) const;
};

/// conv -> batch norm -> LeakyReLU.
struct VConv {
  Conv conv;
  BatchNorm bn;
  double slope = 0.2;

  VConv() = default;
  VConv(ParamStore& store, const std::string& prefix, int c_in, int c_out, int k, int stride,
        Init& init);
  Tensor forward(const Tensor& x, Mode mode) const;
};

/// deconv -> batch norm -> LeakyReLU; the ungated upsampling unit.
struct VDeconv {
  Deconv deconv;
  BatchNorm bn;
  double slope = 0.2;

  VDeconv() = default;
  VDeconv(ParamStore& store, const std::string& prefix, int c_in, int c_out, int k, int stride,
          Init& init);
  Tensor forward(const Tensor& x, Mode mode) const;
};

/// Gated convolution: LeakyReLU(BN(conv_f(x))) * sigmoid(conv_g(x)).
struct GConv {
  Conv feature;
  BatchNorm bn;
  Conv gate;
  double slope = 0.2;

  GConv() = default;
  GConv(ParamStore& store, const std::string& prefix, int c_in, int c_out, int k, int stride,
        Init& init);
  Tensor forward(const Tensor& x, Mode mode) const;
  Tensor gate_values(const Tensor& x) const { return ops::sigmoid(gate.forward(x)); }
};

/// Gated transposed convolution (stride 2 doubles the spatial dims).
struct DeGConv {
  Deconv feature;
  BatchNorm bn;
  Deconv gate;
  double slope = 0.2;

  DeGConv() = default;
  DeGConv(ParamStore& store, const std::string& prefix, int c_in, int c_out, int k, int stride,
          Init& init);
  Tensor forward(const Tensor& x, Mode mode) const;
  Tensor gate_values(const Tensor& x) const { return ops::sigmoid(gate.forward(x)); }
};

/// CA sizing: each channel slice of length L = h * w goes through a hidden
/// layer of M = r * L ReLU units and back to L sigmoid units.
struct CaConfig {
  int length = 1;  // L
  int ratio = 4;   // r
  int hidden() const { return ratio * length; }
  void validate() const;
};

/// Contextual attention: a two-layer fully connected network shared by every
/// channel slice of every batch item. Returns a gate of the input's shape.
struct ContextualAttention {
  CaConfig config;
  Tensor fc1_weight;  // (M, L, 1, 1)
  Tensor fc1_bias;    // (1, M, 1, 1)
  Tensor fc2_weight;  // (L, M, 1, 1)
  Tensor fc2_bias;    // (1, L, 1, 1)

  ContextualAttention() = default;
  ContextualAttention(ParamStore& store, const std::string& prefix, CaConfig cfg, Init& init);
  Tensor forward(const Tensor& features) const;
};

/// Attention-guided gated convolution. Fuses depth features F_d (n, C, H, W)
/// with color features F_c (n, C', H/2, W/2):
///   F'_d   = VConv_s2(VConv_s1(F_d))
///   F'_all = VConv_s1([F'_d, F_c])
///   out    = F'_d * CA(F'_all)
struct AgGConv {
  VConv depth_s1;
  VConv depth_s2;
  VConv fuse;
  ContextualAttention attention;

  struct Trace {
    Tensor depth_features;  // F'_d
    Tensor gate;            // G_d
    Tensor output;          // F''_d
  };

  AgGConv() = default;
  /// out_h/out_w are the spatial dims at the output scale (H/2, W/2).
  AgGConv(ParamStore& store, const std::string& prefix, int c_in, int c_out, int k, int ratio,
          int out_h, int out_w, Init& init);
  Tensor forward(const Tensor& depth, const Tensor& color, Mode mode) const;
  Trace trace(const Tensor& depth, const Tensor& color, Mode mode) const;
};

/// Attention-guided skip connection. Gates the color skip F_c with a mask
/// learned from the previous decoder output R_d and F_c (both (n, C, H, W)):
///   R'_d = VConv_1x1(R_d), F'_c = VConv_kxk(F_c)
///   G_c  = sigmoid(conv_1x1(ReLU(BN(conv_kxk([R'_d, F'_c])))))
///   out  = F_c * G_c
struct AgSc {
  VConv depth_1x1;
  VConv color_kxk;
  Conv gate_conv;
  BatchNorm gate_bn;
  Conv gate_out;

  AgSc() = default;
  AgSc(ParamStore& store, const std::string& prefix, int channels, int k, Init& init);
  Tensor forward(const Tensor& color, const Tensor& depth, Mode mode) const;
  Tensor gate_values(const Tensor& color, const Tensor& depth, Mode mode) const;
};

AGGNET_END_NAMESPACE
