#pragma once

// Naive loop references used to cross-check the optimized kernels. Everything
// here works on plain vectors of double so it shares no code with the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

struct Dims {
  int n, c, h, w;
  std::size_t at(int a, int b, int y, int x) const {
    return ((static_cast<std::size_t>(a) * c + b) * h + y) * w + x;
  }
  std::size_t size() const { return static_cast<std::size_t>(n) * c * h * w; }
};

// Same-padded convolution, pad = k / 2, output ceil(h / s).
inline std::vector<double> conv2d(const std::vector<double>& in, Dims d,
                                  const std::vector<double>& weight, int c_out, int k,
                                  const std::vector<double>& bias, int s, Dims* out_dims) {
  const int pad = k / 2;
  const Dims o{d.n, c_out, (d.h + s - 1) / s, (d.w + s - 1) / s};
  std::vector<double> out(o.size(), 0.0);
  for (int b = 0; b < d.n; ++b)
    for (int co = 0; co < c_out; ++co)
      for (int oy = 0; oy < o.h; ++oy)
        for (int ox = 0; ox < o.w; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[co];
          for (int ci = 0; ci < d.c; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int y = oy * s - pad + ky;
                const int x = ox * s - pad + kx;
                if (y < 0 || y >= d.h || x < 0 || x >= d.w) continue;
                acc += in[d.at(b, ci, y, x)] *
                       weight[((static_cast<std::size_t>(co) * d.c + ci) * k + ky) * k + kx];
              }
          out[o.at(b, co, oy, ox)] = acc;
        }
  if (out_dims) *out_dims = o;
  return out;
}

// Transposed convolution as a scatter: every input pixel stamps its kernel
// onto the (s*h, s*w) output shifted by the padding; stamps past the border
// are dropped.
inline std::vector<double> deconv2d(const std::vector<double>& in, Dims d,
                                    const std::vector<double>& weight, int c_out, int k,
                                    const std::vector<double>& bias, int s, Dims* out_dims) {
  const int pad = (k - s + 1) / 2;
  const Dims o{d.n, c_out, d.h * s, d.w * s};
  std::vector<double> out(o.size(), 0.0);
  for (int b = 0; b < d.n; ++b)
    for (int ci = 0; ci < d.c; ++ci)
      for (int y = 0; y < d.h; ++y)
        for (int x = 0; x < d.w; ++x)
          for (int co = 0; co < c_out; ++co)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int oy = y * s - pad + ky;
                const int ox = x * s - pad + kx;
                if (oy < 0 || oy >= o.h || ox < 0 || ox >= o.w) continue;
                out[o.at(b, co, oy, ox)] +=
                    in[d.at(b, ci, y, x)] *
                    weight[((static_cast<std::size_t>(ci) * c_out + co) * k + ky) * k + kx];
              }
  if (!bias.empty())
    for (int b = 0; b < o.n; ++b)
      for (int co = 0; co < c_out; ++co)
        for (int p = 0; p < o.h * o.w; ++p) out[o.at(b, co, 0, 0) + p] += bias[co];
  if (out_dims) *out_dims = o;
  return out;
}

// rows x L times (M x L)^T plus bias.
inline std::vector<double> fully_connected(const std::vector<double>& in, int rows, int L,
                                           const std::vector<double>& weight, int M,
                                           const std::vector<double>& bias) {
  std::vector<double> out(static_cast<std::size_t>(rows) * M);
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < M; ++j) {
      double acc = bias[j];
      for (int i = 0; i < L; ++i) acc += in[r * L + i] * weight[j * L + i];
      out[r * M + j] = acc;
    }
  return out;
}

struct Metrics {
  double rmse = 0, rel = 0;
  std::array<double, 4> delta{};
  std::size_t pixels = 0;
};

// Metrics over pixels with gt > 0 (and mask != 0 when a mask is given).
inline Metrics evaluate(const std::vector<double>& pred, const std::vector<double>& gt,
                        const std::vector<double>& mask = {}) {
  const double thresholds[4] = {1.10, 1.25, 1.5625, 1.953125};
  Metrics m;
  double sq = 0, rel = 0;
  std::array<std::size_t, 4> hits{};
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] <= 0) continue;
    if (!mask.empty() && mask[i] == 0) continue;
    const double e = pred[i] - gt[i];
    sq += e * e;
    rel += std::fabs(e) / gt[i];
    const double ratio = std::max(pred[i] / gt[i], gt[i] / pred[i]);
    for (int t = 0; t < 4; ++t)
      if (ratio < thresholds[t]) ++hits[t];
    ++m.pixels;
  }
  m.rmse = std::sqrt(sq / m.pixels);
  m.rel = rel / m.pixels;
  for (int t = 0; t < 4; ++t) m.delta[t] = 100.0 * hits[t] / m.pixels;
  return m;
}

inline double rel_diff(double a, double b) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1e-300});
  return std::fabs(a - b) / scale;
}

}  // namespace oracle
