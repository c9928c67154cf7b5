#pragma once

// Dense CPU kernels behind the differentiable ops. Row-major throughout.
// Every output element is accumulated in a fixed order (ascending reduction
// index), so results are independent of how callers split work.

#include <cstddef>

#include "aggnet/precision.hpp"

AGGNET_BEGIN_NAMESPACE

namespace kernels {

struct ConvGeometry {
  int channels = 0;  // channels of the image side
  int height = 0;    // image side spatial dims
  int width = 0;
  int k = 1;
  int stride = 1;
  int pad = 0;
  int out_h = 0;  // column side spatial dims
  int out_w = 0;

  std::size_t col_rows() const { return static_cast<std::size_t>(channels) * k * k; }
  std::size_t col_cols() const { return static_cast<std::size_t>(out_h) * out_w; }
};

/// col[(c*k + kh)*k + kw][oy*out_w + ox] = img[c][oy*s - p + kh][ox*s - p + kw] (0 outside).
void im2col(const Real* img, const ConvGeometry& g, Real* col);
/// Adjoint of im2col: scatters-adds columns back into img (img is accumulated into).
void col2im(const Real* col, const ConvGeometry& g, Real* img);

/// C(M x N) += A(M x K) * B(K x N)
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const Real* A, const Real* B, Real* C);
/// C(M x N) += A(M x K) * B(N x K)^T
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const Real* A, const Real* B, Real* C);
/// C(M x N) += A(K x M)^T * B(K x N)
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const Real* A, const Real* B, Real* C);

}  // namespace kernels

AGGNET_END_NAMESPACE
