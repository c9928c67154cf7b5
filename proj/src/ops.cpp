#include "aggnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aggnet/errors.hpp"
#include "aggnet/parallel.hpp"
#include "kernels.hpp"

AGGNET_BEGIN_NAMESPACE

namespace ops {

namespace {

using kernels::ConvGeometry;

void require_defined(const Tensor& t, const char* op, const char* what) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": " + what + " is undefined");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op, "lhs");
  require_defined(b, op, "rhs");
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

void require_bias(const Tensor& bias, int channels, const char* op) {
  require_defined(bias, op, "bias");
  if (bias.size() != static_cast<std::size_t>(channels)) {
    throw ShapeError(std::string(op) + ": bias " + bias.shape().str() + " does not match " +
                     std::to_string(channels) + " output channels");
  }
}

/// Element-wise unary op with derivative expressed through (x, y).
template <typename Fwd, typename Deriv>
Tensor unary(const char* name, const Tensor& x, Fwd fwd, Deriv deriv) {
  require_defined(x, name, "input");
  Tensor out(x.shape());
  auto xs = x.data();
  auto ys = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = fwd(xs[i]);
  if (Graph::should_record({&x})) {
    Graph::current()->record(name, {x}, out, [x, out, deriv]() mutable {
      if (!x.requires_grad()) return;
      auto gy = out.grad();
      auto xv = x.data();
      auto yv = out.data();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * deriv(xv[i], yv[i]);
    });
  }
  return out;
}

/// Element-wise binary op on equal shapes; dfa/dfb give partial derivatives.
template <typename Fwd, typename Da, typename Db>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, Da da, Db db) {
  require_same_shape(a, b, name);
  Tensor out(a.shape());
  auto av = a.data();
  auto bv = b.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(av[i], bv[i]);
  if (Graph::should_record({&a, &b})) {
    Graph::current()->record(name, {a, b}, out, [a, b, out, da, db]() mutable {
      auto gy = out.grad();
      auto av = a.data();
      auto bv = b.data();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * da(av[i], bv[i]);
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * db(av[i], bv[i]);
      }
    });
  }
  return out;
}

void add_bias(Real* out, const Real* bias, int channels, std::size_t plane) {
  for (int c = 0; c < channels; ++c) std::fill_n(out + c * plane, plane, bias[c]);
}

void accumulate_bias_grad(const Tensor& out, const Tensor& bias) {
  const Shape& s = out.shape();
  auto gy = out.grad();
  auto gb = bias.grad_buffer();
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const Real* g = gy.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      Real acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += g[i];
      gb[c] += acc;
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride) {
  require_defined(input, "conv2d", "input");
  require_defined(weight, "conv2d", "weight");
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (ws.h != ws.w || ws.h % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd size, got " + ws.str());
  }
  if (ws.c != is.c) {
    throw ShapeError("conv2d: input has " + std::to_string(is.c) + " channels but weight " +
                     ws.str() + " expects " + std::to_string(ws.c));
  }
  if (stride != 1 && stride != 2) throw ShapeError("conv2d: stride must be 1 or 2");
  require_bias(bias, ws.n, "conv2d");

  ConvGeometry g;
  g.channels = is.c;
  g.height = is.h;
  g.width = is.w;
  g.k = ws.h;
  g.stride = stride;
  g.pad = ws.h / 2;
  g.out_h = (is.h + 2 * g.pad - g.k) / stride + 1;
  g.out_w = (is.w + 2 * g.pad - g.k) / stride + 1;

  const int c_out = ws.n;
  Tensor out(Shape{is.n, c_out, g.out_h, g.out_w});
  const std::size_t K = g.col_rows();
  const std::size_t P = g.col_cols();
  const std::size_t in_stride = static_cast<std::size_t>(is.c) * is.plane();
  const std::size_t out_stride = static_cast<std::size_t>(c_out) * P;
  {
    const Real* x = input.data().data();
    const Real* w = weight.data().data();
    const Real* b = bias.data().data();
    Real* y = out.data().data();
    parallel_for(static_cast<std::size_t>(is.n), [&](std::size_t n) {
      std::vector<Real> col(K * P);
      kernels::im2col(x + n * in_stride, g, col.data());
      Real* yn = y + n * out_stride;
      add_bias(yn, b, c_out, P);
      kernels::gemm_nn(c_out, P, K, w, col.data(), yn);
    });
  }

  if (Graph::should_record({&input, &weight, &bias})) {
    Graph::current()->record(
        "conv2d", {input, weight, bias}, out,
        [input, weight, bias, out, g, K, P, in_stride, out_stride, c_out]() mutable {
          const Shape& is = input.shape();
          const Real* gy = out.grad().data();
          std::vector<Real> col(K * P);
          if (input.requires_grad()) {
            Real* gx = input.grad_buffer().data();
            const Real* w = weight.data().data();
            for (int n = 0; n < is.n; ++n) {
              std::fill(col.begin(), col.end(), Real(0));
              kernels::gemm_tn(K, P, c_out, w, gy + n * out_stride, col.data());
              kernels::col2im(col.data(), g, gx + n * in_stride);
            }
          }
          if (weight.requires_grad()) {
            Real* gw = weight.grad_buffer().data();
            const Real* x = input.data().data();
            for (int n = 0; n < is.n; ++n) {
              kernels::im2col(x + n * in_stride, g, col.data());
              kernels::gemm_nt(c_out, K, P, gy + n * out_stride, col.data(), gw);
            }
          }
          if (bias.requires_grad()) accumulate_bias_grad(out, bias);
        });
  }
  return out;
}

int deconv_padding(int k, int stride) { return k > stride ? (k - stride + 1) / 2 : 0; }

Tensor deconv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride) {
  require_defined(input, "deconv2d", "input");
  require_defined(weight, "deconv2d", "weight");
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (ws.h != ws.w || ws.h < 1) throw ShapeError("deconv2d: kernel must be square, got " + ws.str());
  if (ws.n != is.c) {
    throw ShapeError("deconv2d: input has " + std::to_string(is.c) + " channels but weight " +
                     ws.str() + " expects " + std::to_string(ws.n));
  }
  if (stride != 1 && stride != 2) throw ShapeError("deconv2d: stride must be 1 or 2");
  const int c_out = ws.c;
  require_bias(bias, c_out, "deconv2d");

  ConvGeometry g;
  g.channels = c_out;
  g.height = stride * is.h;
  g.width = stride * is.w;
  g.k = ws.h;
  g.stride = stride;
  g.pad = deconv_padding(g.k, stride);
  g.out_h = is.h;
  g.out_w = is.w;
  if ((g.height + 2 * g.pad - g.k) / stride + 1 != is.h ||
      (g.width + 2 * g.pad - g.k) / stride + 1 != is.w) {
    throw ShapeError("deconv2d: kernel " + std::to_string(g.k) + " incompatible with stride " +
                     std::to_string(stride));
  }

  Tensor out(Shape{is.n, c_out, g.height, g.width});
  const std::size_t K = g.col_rows();  // c_out * k * k
  const std::size_t Q = g.col_cols();  // h * w of the input
  const std::size_t in_stride = static_cast<std::size_t>(is.c) * Q;
  const std::size_t out_plane = static_cast<std::size_t>(g.height) * g.width;
  const std::size_t out_stride = static_cast<std::size_t>(c_out) * out_plane;
  {
    const Real* x = input.data().data();
    const Real* w = weight.data().data();
    const Real* b = bias.data().data();
    Real* y = out.data().data();
    parallel_for(static_cast<std::size_t>(is.n), [&](std::size_t n) {
      std::vector<Real> col(K * Q, Real(0));
      kernels::gemm_tn(K, Q, is.c, w, x + n * in_stride, col.data());
      Real* yn = y + n * out_stride;
      add_bias(yn, b, c_out, out_plane);
      kernels::col2im(col.data(), g, yn);
    });
  }

  if (Graph::should_record({&input, &weight, &bias})) {
    Graph::current()->record(
        "deconv2d", {input, weight, bias}, out,
        [input, weight, bias, out, g, K, Q, in_stride, out_stride]() mutable {
          const Shape& is = input.shape();
          const Real* gy = out.grad().data();
          std::vector<Real> col(K * Q);
          Real* gx = input.requires_grad() ? input.grad_buffer().data() : nullptr;
          Real* gw = weight.requires_grad() ? weight.grad_buffer().data() : nullptr;
          const Real* w = weight.data().data();
          const Real* x = input.data().data();
          if (gx || gw) {
            for (int n = 0; n < is.n; ++n) {
              kernels::im2col(gy + n * out_stride, g, col.data());
              if (gx) kernels::gemm_nn(is.c, Q, K, w, col.data(), gx + n * in_stride);
              if (gw) kernels::gemm_nt(is.c, K, Q, x + n * in_stride, col.data(), gw);
            }
          }
          if (bias.requires_grad()) accumulate_bias_grad(out, bias);
        });
  }
  return out;
}

Tensor fully_connected(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_defined(input, "fully_connected", "input");
  require_defined(weight, "fully_connected", "weight");
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (is.h != 1 || is.w != 1 || ws.h != 1 || ws.w != 1) {
    throw ShapeError("fully_connected: expects (rows, L, 1, 1) operands, got " + is.str() +
                     " and " + ws.str());
  }
  if (ws.c != is.c) {
    throw ShapeError("fully_connected: input length " + std::to_string(is.c) +
                     " does not match weight " + ws.str());
  }
  const std::size_t rows = is.n;
  const std::size_t L = is.c;
  const std::size_t M = ws.n;
  require_bias(bias, static_cast<int>(M), "fully_connected");

  Tensor out(Shape{is.n, static_cast<int>(M), 1, 1});
  {
    Real* y = out.data().data();
    const Real* b = bias.data().data();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(b, M, y + r * M);
    kernels::gemm_nt(rows, M, L, input.data().data(), weight.data().data(), y);
  }
  if (Graph::should_record({&input, &weight, &bias})) {
    Graph::current()->record("fully_connected", {input, weight, bias}, out,
                             [input, weight, bias, out, rows, L, M]() mutable {
                               const Real* gy = out.grad().data();
                               if (input.requires_grad()) {
                                 kernels::gemm_nn(rows, L, M, gy, weight.data().data(),
                                                  input.grad_buffer().data());
                               }
                               if (weight.requires_grad()) {
                                 kernels::gemm_tn(M, L, rows, gy, input.data().data(),
                                                  weight.grad_buffer().data());
                               }
                               if (bias.requires_grad()) {
                                 auto gb = bias.grad_buffer();
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t m = 0; m < M; ++m) gb[m] += gy[r * M + m];
                                 }
                               }
                             });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](Real x, Real y) { return x + y; }, [](Real, Real) { return Real(1); },
      [](Real, Real) { return Real(1); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](Real x, Real y) { return x - y; }, [](Real, Real) { return Real(1); },
      [](Real, Real) { return Real(-1); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](Real x, Real y) { return x * y; }, [](Real, Real y) { return y; },
      [](Real x, Real) { return x; });
}

Tensor scale(const Tensor& x, Real s) {
  return unary(
      "scale", x, [s](Real v) { return v * s; }, [s](Real, Real) { return s; });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  for (const auto& p : parts) require_defined(p, "concat_channels", "part");
  const Shape& s0 = parts.front().shape();
  int channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w) {
      throw ShapeError("concat_channels: spatial/batch mismatch " + s0.str() + " vs " + s.str());
    }
    channels += s.c;
  }
  Tensor out(Shape{s0.n, channels, s0.h, s0.w});
  const std::size_t plane = s0.plane();
  auto ov = out.data();
  for (int n = 0; n < s0.n; ++n) {
    std::size_t offset = static_cast<std::size_t>(n) * channels * plane;
    for (const auto& p : parts) {
      const std::size_t len = static_cast<std::size_t>(p.shape().c) * plane;
      auto pv = p.data();
      std::copy_n(pv.data() + n * len, len, ov.data() + offset);
      offset += len;
    }
  }
  if (Graph::should_record(parts)) {
    Graph::current()->record("concat_channels", parts, out, [parts, out, channels]() mutable {
      const Shape& s = out.shape();
      const std::size_t plane = s.plane();
      auto gy = out.grad();
      std::size_t c_offset = 0;
      for (auto& p : parts) {
        const std::size_t len = static_cast<std::size_t>(p.shape().c) * plane;
        if (p.requires_grad()) {
          auto gp = p.grad_buffer();
          for (int n = 0; n < s.n; ++n) {
            const Real* src = gy.data() + static_cast<std::size_t>(n) * channels * plane + c_offset;
            Real* dst = gp.data() + n * len;
            for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
          }
        }
        c_offset += len;
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape", "input");
  if (shape.size() != x.size()) {
    throw ShapeError("reshape: " + x.shape().str() + " -> " + shape.str() + " changes size");
  }
  Tensor out(shape, std::vector<Real>(x.data().begin(), x.data().end()));
  if (Graph::should_record({&x})) {
    Graph::current()->record("reshape", {x}, out, [x, out]() mutable {
      auto gy = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](Real v) {
        // Stable for large |v|; saturates to exactly 0 or 1.
        if (v >= 0) return Real(1) / (Real(1) + std::exp(-v));
        const Real e = std::exp(v);
        return e / (Real(1) + e);
      },
      [](Real, Real y) { return y * (Real(1) - y); });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](Real v) { return v > 0 ? v : Real(0); },
      [](Real v, Real) { return v > 0 ? Real(1) : Real(0); });
}

Tensor leaky_relu(const Tensor& x, Real slope) {
  return unary(
      "leaky_relu", x, [slope](Real v) { return v > 0 ? v : slope * v; },
      [slope](Real v, Real) { return v > 0 ? Real(1) : slope; });
}

Tensor clamp_min(const Tensor& x, Real lo) {
  return unary(
      "clamp_min", x, [lo](Real v) { return v > lo ? v : lo; },
      [lo](Real v, Real) { return v > lo ? Real(1) : Real(0); });
}

Tensor huber_elem(const Tensor& a, const Tensor& b, Real delta) {
  auto d = [delta](Real x, Real y) {
    const Real e = x - y;
    if (e > delta) return delta;
    if (e < -delta) return -delta;
    return e;
  };
  return binary(
      "huber_elem", a, b,
      [delta](Real x, Real y) {
        const Real e = std::abs(x - y);
        return e <= delta ? Real(0.5) * e * e : delta * (e - Real(0.5) * delta);
      },
      d, [d](Real x, Real y) { return -d(x, y); });
}

Tensor abs_diff(const Tensor& a, const Tensor& b) {
  auto sgn = [](Real x, Real y) {
    return x > y ? Real(1) : (x < y ? Real(-1) : Real(0));
  };
  return binary(
      "abs_diff", a, b, [](Real x, Real y) { return std::abs(x - y); }, sgn,
      [sgn](Real x, Real y) { return -sgn(x, y); });
}

namespace {

Tensor forward_diff(const Tensor& x, bool vertical) {
  const char* name = vertical ? "diff_vertical" : "diff_horizontal";
  require_defined(x, name, "input");
  const Shape& s = x.shape();
  if ((vertical && s.h < 2) || (!vertical && s.w < 2)) {
    throw ShapeError(std::string(name) + ": needs at least 2 pixels along the axis, got " +
                     s.str());
  }
  const int dy = vertical ? 1 : 0;
  const int dx = vertical ? 0 : 1;
  const Shape os{s.n, s.c, s.h - dy, s.w - dx};
  Tensor out(os);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < os.h; ++y)
        for (int xx = 0; xx < os.w; ++xx)
          out.at(n, c, y, xx) = x.at(n, c, y + dy, xx + dx) - x.at(n, c, y, xx);
  if (Graph::should_record({&x})) {
    Graph::current()->record(name, {x}, out, [x, out, os, dy, dx]() mutable {
      auto gy = out.grad();
      auto gx = x.grad_buffer();
      const Shape& s = x.shape();
      std::size_t i = 0;
      for (int n = 0; n < os.n; ++n)
        for (int c = 0; c < os.c; ++c)
          for (int y = 0; y < os.h; ++y)
            for (int xx = 0; xx < os.w; ++xx, ++i) {
              const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * s.plane();
              gx[base + static_cast<std::size_t>(y + dy) * s.w + xx + dx] += gy[i];
              gx[base + static_cast<std::size_t>(y) * s.w + xx] -= gy[i];
            }
    });
  }
  return out;
}

}  // namespace

Tensor diff_vertical(const Tensor& x) { return forward_diff(x, true); }
Tensor diff_horizontal(const Tensor& x) { return forward_diff(x, false); }

Tensor where(const Tensor& mask, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "where");
  require_same_shape(mask, a, "where");
  Tensor out(a.shape());
  auto mv = mask.data();
  auto av = a.data();
  auto bv = b.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = mv[i] != Real(0) ? av[i] : bv[i];
  if (Graph::should_record({&a, &b})) {
    Graph::current()->record("where", {a, b}, out, [mask, a, b, out]() mutable {
      auto gy = out.grad();
      auto mv = mask.data();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i)
          if (mv[i] != Real(0)) ga[i] += gy[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < gb.size(); ++i)
          if (mv[i] == Real(0)) gb[i] += gy[i];
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum", "input");
  double acc = 0;
  for (Real v : x.data()) acc += v;
  Tensor out = Tensor::scalar(static_cast<Real>(acc));
  if (Graph::should_record({&x})) {
    Graph::current()->record("sum", {x}, out, [x, out]() mutable {
      const Real g = out.grad()[0];
      for (Real& v : x.grad_buffer()) v += g;
    });
  }
  return out;
}

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, Mode mode) {
  require_defined(input, "batch_norm", "input");
  const Shape& s = input.shape();
  const auto channels = static_cast<std::size_t>(s.c);
  if (gamma.size() != channels || beta.size() != channels ||
      state.running_mean.size() != channels || state.running_var.size() != channels) {
    throw ShapeError("batch_norm: parameter size does not match " + std::to_string(s.c) +
                     " channels");
  }
  const std::size_t plane = s.plane();
  const std::size_t count = static_cast<std::size_t>(s.n) * plane;
  if (mode == Mode::Train && count < 2) {
    throw ShapeError("batch_norm: train mode needs at least 2 values per channel, got " +
                     s.str());
  }

  std::vector<Real> mean(channels), inv_std(channels);
  auto xv = input.data();
  if (mode == Mode::Train) {
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    for (std::size_t c = 0; c < channels; ++c) {
      double m = 0;
      for (int n = 0; n < s.n; ++n) {
        const Real* p = xv.data() + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) m += p[i];
      }
      m /= static_cast<double>(count);
      double v = 0;
      for (int n = 0; n < s.n; ++n) {
        const Real* p = xv.data() + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - m;
          v += d * d;
        }
      }
      v /= static_cast<double>(count);
      mean[c] = static_cast<Real>(m);
      inv_std[c] = static_cast<Real>(1.0 / std::sqrt(v + kBatchNormEps));
      const double unbiased = v * static_cast<double>(count) / static_cast<double>(count - 1);
      rm[c] = static_cast<Real>((1.0 - kBatchNormMomentum) * rm[c] + kBatchNormMomentum * m);
      rv[c] = static_cast<Real>((1.0 - kBatchNormMomentum) * rv[c] +
                                kBatchNormMomentum * unbiased);
    }
  } else {
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = rm[c];
      inv_std[c] = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(rv[c]) + kBatchNormEps));
    }
  }

  Tensor normalized(s);
  Tensor out(s);
  {
    auto xh = normalized.data();
    auto yv = out.data();
    auto gv = gamma.data();
    auto bv = beta.data();
    for (int n = 0; n < s.n; ++n) {
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t off = (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const Real h = (xv[off + i] - mean[c]) * inv_std[c];
          xh[off + i] = h;
          yv[off + i] = gv[c] * h + bv[c];
        }
      }
    }
  }

  if (Graph::should_record({&input, &gamma, &beta})) {
    Graph::current()->record(
        "batch_norm", {input, gamma, beta}, out,
        [input, gamma, beta, out, normalized, inv_std, mode, channels, plane, count]() mutable {
          const Shape& s = input.shape();
          auto gy = out.grad();
          auto xh = normalized.data();
          std::vector<double> sum_dy(channels, 0.0), sum_dy_xh(channels, 0.0);
          for (int n = 0; n < s.n; ++n) {
            for (std::size_t c = 0; c < channels; ++c) {
              const std::size_t off = (n * channels + c) * plane;
              for (std::size_t i = 0; i < plane; ++i) {
                sum_dy[c] += gy[off + i];
                sum_dy_xh[c] += gy[off + i] * xh[off + i];
              }
            }
          }
          if (gamma.requires_grad()) {
            auto gg = gamma.grad_buffer();
            for (std::size_t c = 0; c < channels; ++c) gg[c] += static_cast<Real>(sum_dy_xh[c]);
          }
          if (beta.requires_grad()) {
            auto gb = beta.grad_buffer();
            for (std::size_t c = 0; c < channels; ++c) gb[c] += static_cast<Real>(sum_dy[c]);
          }
          if (!input.requires_grad()) return;
          auto gx = input.grad_buffer();
          auto gv = gamma.data();
          const double inv_count = 1.0 / static_cast<double>(count);
          for (int n = 0; n < s.n; ++n) {
            for (std::size_t c = 0; c < channels; ++c) {
              const std::size_t off = (n * channels + c) * plane;
              const Real scale_c = gv[c] * inv_std[c];
              if (mode == Mode::Eval) {
                for (std::size_t i = 0; i < plane; ++i) gx[off + i] += gy[off + i] * scale_c;
              } else {
                const Real mean_dy = static_cast<Real>(sum_dy[c] * inv_count);
                const Real mean_dy_xh = static_cast<Real>(sum_dy_xh[c] * inv_count);
                for (std::size_t i = 0; i < plane; ++i) {
                  gx[off + i] += scale_c * (gy[off + i] - mean_dy - xh[off + i] * mean_dy_xh);
                }
              }
            }
          }
        });
  }
  return out;
}

}  // namespace ops

AGGNET_END_NAMESPACE
