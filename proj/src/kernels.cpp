#include "kernels.hpp"

#include <algorithm>
#include <cstring>

AGGNET_BEGIN_NAMESPACE

namespace kernels {

namespace {

inline void axpy(std::size_t n, Real a, const Real* __restrict x, Real* __restrict y) {
#pragma omp simd
  for (std::size_t j = 0; j < n; ++j) y[j] += a * x[j];
}

inline Real dot(std::size_t n, const Real* __restrict x, const Real* __restrict y) {
  Real s = 0;
#pragma omp simd reduction(+ : s)
  for (std::size_t j = 0; j < n; ++j) s += x[j] * y[j];
  return s;
}

}  // namespace

void im2col(const Real* img, const ConvGeometry& g, Real* col) {
  const std::size_t cols = g.col_cols();
  for (int c = 0; c < g.channels; ++c) {
    const Real* plane = img + static_cast<std::size_t>(c) * g.height * g.width;
    for (int kh = 0; kh < g.k; ++kh) {
      for (int kw = 0; kw < g.k; ++kw) {
        Real* row = col + ((static_cast<std::size_t>(c) * g.k + kh) * g.k + kw) * cols;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int y = oy * g.stride - g.pad + kh;
          Real* dst = row + static_cast<std::size_t>(oy) * g.out_w;
          if (y < 0 || y >= g.height) {
            std::fill(dst, dst + g.out_w, Real(0));
            continue;
          }
          const Real* src = plane + static_cast<std::size_t>(y) * g.width;
          if (g.stride == 1) {
            // x = ox - pad + kw; copy the in-range span, zero the borders.
            const int x0 = kw - g.pad;
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int x = ox + x0;
              dst[ox] = (x >= 0 && x < g.width) ? src[x] : Real(0);
            }
          } else {
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int x = ox * g.stride - g.pad + kw;
              dst[ox] = (x >= 0 && x < g.width) ? src[x] : Real(0);
            }
          }
        }
      }
    }
  }
}

void col2im(const Real* col, const ConvGeometry& g, Real* img) {
  const std::size_t cols = g.col_cols();
  for (int c = 0; c < g.channels; ++c) {
    Real* plane = img + static_cast<std::size_t>(c) * g.height * g.width;
    for (int kh = 0; kh < g.k; ++kh) {
      for (int kw = 0; kw < g.k; ++kw) {
        const Real* row = col + ((static_cast<std::size_t>(c) * g.k + kh) * g.k + kw) * cols;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int y = oy * g.stride - g.pad + kh;
          if (y < 0 || y >= g.height) continue;
          const Real* src = row + static_cast<std::size_t>(oy) * g.out_w;
          Real* dst = plane + static_cast<std::size_t>(y) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int x = ox * g.stride - g.pad + kw;
            if (x >= 0 && x < g.width) dst[x] += src[ox];
          }
        }
      }
    }
  }
}

void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const Real* A, const Real* B, Real* C) {
  // k outer: each row of B is streamed once while C stays cache resident.
  for (std::size_t k = 0; k < K; ++k) {
    const Real* b = B + k * N;
    for (std::size_t i = 0; i < M; ++i) {
      const Real a = A[i * K + k];
      if (a != Real(0)) axpy(N, a, b, C + i * N);
    }
  }
}

void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const Real* A, const Real* B, Real* C) {
  // j outer so each row of B is reused across all rows of A.
  for (std::size_t j = 0; j < N; ++j) {
    const Real* b = B + j * K;
    for (std::size_t i = 0; i < M; ++i) C[i * N + j] += dot(K, A + i * K, b);
  }
}

void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const Real* A, const Real* B, Real* C) {
  for (std::size_t i = 0; i < M; ++i) {
    Real* c = C + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      const Real a = A[k * M + i];
      if (a != Real(0)) axpy(N, a, B + k * N, c);
    }
  }
}

}  // namespace kernels

AGGNET_END_NAMESPACE
