// SPDX-License-Identifier: Apache-2.0
#pragma once

// Straight-line serial implementations of the compute kernels. These are the
// ground truth the OpenMP kernels are tested against and the baseline the
// benchmark compares with. Keep them obviously correct; never optimize.

#include "cigan/kernels.hpp"
#include "cigan/tensor.hpp"

namespace cigan::reference {

template <typename T>
void gemm(const T* A, const T* B, T* C, int M, int N, int K, bool accumulate = false) {
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < N; ++j) {
      T acc = accumulate ? C[static_cast<size_t>(i) * N + j] : T(0);
      for (int k = 0; k < K; ++k)
        acc += A[static_cast<size_t>(i) * K + k] * B[static_cast<size_t>(k) * N + j];
      C[static_cast<size_t>(i) * N + j] = acc;
    }
  }
}

// direct convolution, no lowering
template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, Tensor<T>& y,
                    int stride, int pad) {
  kernels::ConvGeom g =
      kernels::conv_geometry(x.c(), x.h(), x.w(), w.n(), w.h(), w.w(), stride, pad);
  for (int b = 0; b < x.n(); ++b)
    for (int m = 0; m < g.out_c; ++m)
      for (int oy = 0; oy < g.out_h; ++oy)
        for (int ox = 0; ox < g.out_w; ++ox) {
          T acc = bias.empty() ? T(0) : bias[m];
          for (int ci = 0; ci < g.in_c; ++ci)
            for (int ky = 0; ky < g.kh; ++ky)
              for (int kx = 0; kx < g.kw; ++kx) {
                int iy = oy * stride - pad + ky;
                int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                acc += w.at(m, ci, ky, kx) * x.at(b, ci, iy, ix);
              }
          y.at(b, m, oy, ox) = acc;
        }
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, Tensor<T>* dx,
                     Tensor<T>* dw, Tensor<T>* db, int stride, int pad) {
  kernels::ConvGeom g =
      kernels::conv_geometry(x.c(), x.h(), x.w(), w.n(), w.h(), w.w(), stride, pad);
  for (int b = 0; b < x.n(); ++b)
    for (int m = 0; m < g.out_c; ++m)
      for (int oy = 0; oy < g.out_h; ++oy)
        for (int ox = 0; ox < g.out_w; ++ox) {
          T d = dy.at(b, m, oy, ox);
          if (db) (*db)[m] += d;
          for (int ci = 0; ci < g.in_c; ++ci)
            for (int ky = 0; ky < g.kh; ++ky)
              for (int kx = 0; kx < g.kw; ++kx) {
                int iy = oy * stride - pad + ky;
                int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                if (dw) dw->at(m, ci, ky, kx) += d * x.at(b, ci, iy, ix);
                if (dx) dx->at(b, ci, iy, ix) += d * w.at(m, ci, ky, kx);
              }
        }
}

template <typename T>
void maxpool2_forward(const Tensor<T>& x, Tensor<T>& y, Tensor<int32_t>& argmax) {
  int oh = (x.h() + 1) / 2, ow = (x.w() + 1) / 2;
  for (int b = 0; b < x.n(); ++b)
    for (int ci = 0; ci < x.c(); ++ci)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          T best = x.at(b, ci, 2 * oy, 2 * ox);
          int32_t bi = 2 * oy * x.w() + 2 * ox;
          for (int yy = 2 * oy; yy < std::min(2 * oy + 2, x.h()); ++yy)
            for (int xx = 2 * ox; xx < std::min(2 * ox + 2, x.w()); ++xx)
              if (x.at(b, ci, yy, xx) > best) {
                best = x.at(b, ci, yy, xx);
                bi = yy * x.w() + xx;
              }
          y.at(b, ci, oy, ox) = best;
          argmax.at(b, ci, oy, ox) = bi;
        }
}

template <typename T>
void upsample2_forward(const Tensor<T>& x, Tensor<T>& y) {
  for (int b = 0; b < x.n(); ++b)
    for (int ci = 0; ci < x.c(); ++ci)
      for (int y0 = 0; y0 < 2 * x.h(); ++y0)
        for (int x0 = 0; x0 < 2 * x.w(); ++x0)
          y.at(b, ci, y0, x0) = x.at(b, ci, y0 / 2, x0 / 2);
}

}  // namespace cigan::reference
