#pragma once

#include <vector>

#include "aggnet/tensor.hpp"

AGGNET_BEGIN_NAMESPACE

namespace ops {

/// 2-D convolution, weight (c_out, c_in, k, k), bias (1, c_out, 1, 1).
/// Same-padding: pad = k / 2, output (n, c_out, ceil(h / stride), ceil(w / stride)).
/// k must be odd, stride 1 or 2.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride);

/// Transposed convolution, weight (c_in, c_out, k, k): the adjoint of conv2d
/// with the same weight tensor. Output (n, c_out, stride * h, stride * w);
/// padding ceil((k - stride) / 2), the remainder taken as output padding.
/// With stride 1 the kernel must be odd.
Tensor deconv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride);

/// Padding used by deconv2d for a kernel/stride pair.
int deconv_padding(int k, int stride);

/// input (rows, L, 1, 1), weight (M, L, 1, 1), bias (1, M, 1, 1) -> (rows, M, 1, 1).
Tensor fully_connected(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, Real s);
Tensor concat_channels(const std::vector<Tensor>& parts);
/// Same data, new shape with the same element count.
Tensor reshape(const Tensor& x, Shape shape);

Tensor sigmoid(const Tensor& x);
/// Sub-gradient 0 at x == 0.
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, Real slope);
/// max(x, lo); gradient passes only where x > lo.
Tensor clamp_min(const Tensor& x, Real lo);

/// Element-wise Huber of (a - b): 0.5 e^2 for |e| <= delta, else
/// delta (|e| - 0.5 delta). At |e| == delta the quadratic branch's derivative is used.
Tensor huber_elem(const Tensor& a, const Tensor& b, Real delta);
/// |a - b|; sub-gradient 0 at a == b.
Tensor abs_diff(const Tensor& a, const Tensor& b);

/// Forward differences x[y+1] - x[y] (vertical) or x[:, x+1] - x[:, x] (horizontal).
Tensor diff_vertical(const Tensor& x);
Tensor diff_horizontal(const Tensor& x);

/// mask ? a : b element-wise. `mask` is a constant 0/1 tensor.
Tensor where(const Tensor& mask, const Tensor& a, const Tensor& b);

/// Sum of all elements as a (1,1,1,1) tensor.
Tensor sum(const Tensor& x);

enum class Mode { Train, Eval };

struct BatchNormState {
  Tensor running_mean;  // (1, c, 1, 1)
  Tensor running_var;   // (1, c, 1, 1)
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Per-channel normalization. Train mode uses batch statistics (biased
/// variance) and blends the running stats with momentum 0.1 (unbiased
/// variance); Eval mode uses the running stats. gamma/beta are (1, c, 1, 1).
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, Mode mode);

}  // namespace ops

AGGNET_END_NAMESPACE
