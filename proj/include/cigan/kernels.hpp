// SPDX-License-Identifier: Apache-2.0
#pragma once

// OpenMP-parallel compute kernels. Every kernel assigns each output element
// to exactly one task and keeps its summation order independent of the
// thread count, so results are bitwise reproducible for any OMP_NUM_THREADS.
// Serial twins used by the tests and the benchmark live in
// reference_kernels.hpp.

#include <algorithm>
#include <cstring>
#include <type_traits>
#include <vector>

#include "cigan/tensor.hpp"

namespace cigan::kernels {

// ---------------------------------------------------------------------------
// GEMM: C(M,N) = A*B (+ C), row-major. A is (M,K), or (K,M) read transposed.
// Packed panels with an MR x NR register tile.
// ---------------------------------------------------------------------------

template <typename T>
struct GemmTile {
  static constexpr int MR = 8;
  static constexpr int NR = std::is_same_v<T, float> ? 32 : 16;
  static constexpr int KC = 320;
  static constexpr int NC = 1024;
};

namespace detail {

template <typename T>
inline void micro_full(const T* Ap, const T* B, T* C, int kb, int mr, int ldb, int ldc,
                       bool load_c) {
  constexpr int MR = GemmTile<T>::MR;
  constexpr int NR = GemmTile<T>::NR;
  T acc[MR][NR];
  if (load_c) {
    for (int r = 0; r < mr; ++r)
      for (int j = 0; j < NR; ++j) acc[r][j] = C[static_cast<size_t>(r) * ldc + j];
    for (int r = mr; r < MR; ++r)
      for (int j = 0; j < NR; ++j) acc[r][j] = T(0);
  } else {
    for (int r = 0; r < MR; ++r)
      for (int j = 0; j < NR; ++j) acc[r][j] = T(0);
  }
  for (int k = 0; k < kb; ++k) {
    const T* b = B + static_cast<size_t>(k) * ldb;
    const T* a = Ap + static_cast<size_t>(k) * MR;
    for (int r = 0; r < MR; ++r) {
      T av = a[r];
#pragma omp simd
      for (int j = 0; j < NR; ++j) acc[r][j] += av * b[j];
    }
  }
  for (int r = 0; r < mr; ++r)
    for (int j = 0; j < NR; ++j) C[static_cast<size_t>(r) * ldc + j] = acc[r][j];
}

// column tail: nr < NR
template <typename T>
inline void micro_tail(const T* Ap, const T* B, T* C, int kb, int mr, int nr, int ldb, int ldc,
                       bool load_c) {
  constexpr int MR = GemmTile<T>::MR;
  constexpr int NR = GemmTile<T>::NR;
  T acc[MR][NR];
  for (int r = 0; r < mr; ++r)
    for (int j = 0; j < nr; ++j) acc[r][j] = load_c ? C[static_cast<size_t>(r) * ldc + j] : T(0);
  for (int k = 0; k < kb; ++k) {
    const T* b = B + static_cast<size_t>(k) * ldb;
    const T* a = Ap + static_cast<size_t>(k) * MR;
    for (int r = 0; r < mr; ++r) {
      T av = a[r];
      for (int j = 0; j < nr; ++j) acc[r][j] += av * b[j];
    }
  }
  for (int r = 0; r < mr; ++r)
    for (int j = 0; j < nr; ++j) C[static_cast<size_t>(r) * ldc + j] = acc[r][j];
}

}  // namespace detail

// a_trans=false: A is (M,K). a_trans=true: A is stored (K,M) and read as A^T.
// accumulate=false overwrites C, true adds into it.
template <typename T, bool a_trans = false>
void gemm(const T* A, const T* B, T* C, int M, int N, int K, bool accumulate = false) {
  constexpr int MR = GemmTile<T>::MR;
  constexpr int NR = GemmTile<T>::NR;
  constexpr int KC = GemmTile<T>::KC;
  constexpr int NC = GemmTile<T>::NC;

#pragma omp parallel
  {
    std::vector<T> Ap(static_cast<size_t>(KC) * MR);
#pragma omp for schedule(dynamic)
    for (int i0 = 0; i0 < M; i0 += MR) {
      int mr = std::min(MR, M - i0);
      for (int kc = 0; kc < K; kc += KC) {
        int kb = std::min(KC, K - kc);
        // pack the A panel as [k][r], zero-padded to MR rows
        if constexpr (a_trans) {
          for (int k = 0; k < kb; ++k) {
            const T* src = A + static_cast<size_t>(kc + k) * M + i0;
            T* dst = Ap.data() + static_cast<size_t>(k) * MR;
            for (int r = 0; r < mr; ++r) dst[r] = src[r];
            for (int r = mr; r < MR; ++r) dst[r] = T(0);
          }
        } else {
          for (int k = 0; k < kb; ++k) {
            T* dst = Ap.data() + static_cast<size_t>(k) * MR;
            for (int r = 0; r < mr; ++r) dst[r] = A[static_cast<size_t>(i0 + r) * K + kc + k];
            for (int r = mr; r < MR; ++r) dst[r] = T(0);
          }
        }
        bool load_c = accumulate || kc > 0;
        for (int jc = 0; jc < N; jc += NC) {
          int nc = std::min(NC, N - jc);
          int j = jc;
          for (; j + NR <= jc + nc; j += NR)
            detail::micro_full(Ap.data(), B + static_cast<size_t>(kc) * N + j,
                               C + static_cast<size_t>(i0) * N + j, kb, mr, N, N, load_c);
          if (j < jc + nc)
            detail::micro_tail(Ap.data(), B + static_cast<size_t>(kc) * N + j,
                               C + static_cast<size_t>(i0) * N + j, kb, mr, jc + nc - j, N, N,
                               load_c);
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Convolution lowering
// ---------------------------------------------------------------------------

struct ConvGeom {
  int in_c, in_h, in_w;
  int out_c, kh, kw;
  int stride, pad;
  int out_h, out_w;
};

inline ConvGeom conv_geometry(int in_c, int in_h, int in_w, int out_c, int kh, int kw, int stride,
                              int pad) {
  ConvGeom g{in_c, in_h, in_w, out_c, kh, kw, stride, pad, 0, 0};
  g.out_h = (in_h + 2 * pad - kh) / stride + 1;
  g.out_w = (in_w + 2 * pad - kw) / stride + 1;
  check(g.out_h >= 1 && g.out_w >= 1, "conv: input smaller than kernel");
  return g;
}

// col is (K = in_c*kh*kw) x (N = out_h*out_w), for one batch item
template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  int N = g.out_h * g.out_w;
#pragma omp parallel for schedule(static) collapse(2)
  for (int ci = 0; ci < g.in_c; ++ci) {
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        T* dst = col + (static_cast<size_t>(ci) * g.kh * g.kw + ky * g.kw + kx) * N;
        const T* src = x + static_cast<size_t>(ci) * g.in_h * g.in_w;
        for (int oy = 0; oy < g.out_h; ++oy) {
          int y = oy * g.stride - g.pad + ky;
          T* drow = dst + static_cast<size_t>(oy) * g.out_w;
          if (y < 0 || y >= g.in_h) {
            std::fill(drow, drow + g.out_w, T(0));
            continue;
          }
          const T* srow = src + static_cast<size_t>(y) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            int x0 = ox * g.stride - g.pad + kx;
            drow[ox] = (x0 >= 0 && x0 < g.in_w) ? srow[x0] : T(0);
          }
        }
      }
    }
  }
}

// transposed layout, (N) x (K); used to form weight gradients with one gemm
template <typename T>
void im2col_t(const T* x, const ConvGeom& g, T* colt) {
  int K = g.in_c * g.kh * g.kw;
#pragma omp parallel for schedule(static)
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      T* dst = colt + (static_cast<size_t>(oy) * g.out_w + ox) * K;
      for (int ci = 0; ci < g.in_c; ++ci) {
        const T* src = x + static_cast<size_t>(ci) * g.in_h * g.in_w;
        for (int ky = 0; ky < g.kh; ++ky) {
          int y = oy * g.stride - g.pad + ky;
          for (int kx = 0; kx < g.kw; ++kx) {
            int x0 = ox * g.stride - g.pad + kx;
            *dst++ = (y >= 0 && y < g.in_h && x0 >= 0 && x0 < g.in_w)
                         ? src[static_cast<size_t>(y) * g.in_w + x0]
                         : T(0);
          }
        }
      }
    }
  }
}

// gather form of col2im: each output element owned by one task, no atomics
template <typename T>
void col2im(const T* col, const ConvGeom& g, T* dx, bool accumulate) {
  int N = g.out_h * g.out_w;
#pragma omp parallel for schedule(static) collapse(2)
  for (int ci = 0; ci < g.in_c; ++ci) {
    for (int y = 0; y < g.in_h; ++y) {
      T* drow = dx + (static_cast<size_t>(ci) * g.in_h + y) * g.in_w;
      for (int x0 = 0; x0 < g.in_w; ++x0) {
        T acc = accumulate ? drow[x0] : T(0);
        for (int ky = 0; ky < g.kh; ++ky) {
          int ty = y + g.pad - ky;
          if (ty < 0 || ty % g.stride != 0) continue;
          int oy = ty / g.stride;
          if (oy >= g.out_h) continue;
          for (int kx = 0; kx < g.kw; ++kx) {
            int tx = x0 + g.pad - kx;
            if (tx < 0 || tx % g.stride != 0) continue;
            int ox = tx / g.stride;
            if (ox >= g.out_w) continue;
            acc += col[(static_cast<size_t>(ci) * g.kh * g.kw + ky * g.kw + kx) * N +
                       static_cast<size_t>(oy) * g.out_w + ox];
          }
        }
        drow[x0] = acc;
      }
    }
  }
}

// y = W*im2col(x) + bias, batched. w is (out_c, in_c, kh, kw), bias (1, out_c, 1, 1)
// or empty. scratch must hold K*N elements.
template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, Tensor<T>& y,
                    int stride, int pad, std::vector<T>& scratch) {
  ConvGeom g = conv_geometry(x.c(), x.h(), x.w(), w.n(), w.h(), w.w(), stride, pad);
  int K = g.in_c * g.kh * g.kw;
  int N = g.out_h * g.out_w;
  bool one_by_one = g.kh == 1 && g.kw == 1 && stride == 1 && pad == 0;
  if (!one_by_one) scratch.resize(static_cast<size_t>(K) * N);
  for (int b = 0; b < x.n(); ++b) {
    const T* col;
    if (one_by_one) {
      col = x.plane(b, 0);
    } else {
      im2col(x.plane(b, 0), g, scratch.data());
      col = scratch.data();
    }
    T* out = y.plane(b, 0);
    if (!bias.empty()) {
#pragma omp parallel for schedule(static)
      for (int m = 0; m < g.out_c; ++m)
        std::fill(out + static_cast<size_t>(m) * N, out + static_cast<size_t>(m + 1) * N,
                  bias[m]);
      gemm<T>(w.data(), col, out, g.out_c, N, K, /*accumulate=*/true);
    } else {
      gemm<T>(w.data(), col, out, g.out_c, N, K, /*accumulate=*/false);
    }
  }
}

// dx += W^T*dy lowered back through col2im; dw += dy*im2col(x)^T; db += sum dy.
// Any of dx/dw/db may be null to skip that gradient.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, Tensor<T>* dx,
                     Tensor<T>* dw, Tensor<T>* db, int stride, int pad, std::vector<T>& scratch) {
  ConvGeom g = conv_geometry(x.c(), x.h(), x.w(), w.n(), w.h(), w.w(), stride, pad);
  int K = g.in_c * g.kh * g.kw;
  int N = g.out_h * g.out_w;
  bool one_by_one = g.kh == 1 && g.kw == 1 && stride == 1 && pad == 0;

  if (db) {
    for (int b = 0; b < dy.n(); ++b) {
      const T* d = dy.plane(b, 0);
#pragma omp parallel for schedule(static)
      for (int m = 0; m < g.out_c; ++m) {
        T s = T(0);
        const T* row = d + static_cast<size_t>(m) * N;
        for (int i = 0; i < N; ++i) s += row[i];
        (*db)[m] += s;
      }
    }
  }

  if (dw) {
    scratch.resize(static_cast<size_t>(K) * N);
    for (int b = 0; b < x.n(); ++b) {
      // colt is (N, K) so dW(out_c, K) += dY(out_c, N) * colt
      im2col_t(x.plane(b, 0), g, scratch.data());
      gemm<T>(dy.plane(b, 0), scratch.data(), dw->data(), g.out_c, K, N, /*accumulate=*/true);
    }
  }

  if (dx) {
    scratch.resize(static_cast<size_t>(K) * N);
    for (int b = 0; b < x.n(); ++b) {
      // dcol(K, N) = W^T(K, out_c) * dY(out_c, N)
      gemm<T, /*a_trans=*/true>(w.data(), dy.plane(b, 0), scratch.data(), K, N, g.out_c,
                                /*accumulate=*/false);
      if (one_by_one) {
        T* d = dx->plane(b, 0);
        const T* s = scratch.data();
        size_t total = static_cast<size_t>(K) * N;
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < static_cast<long long>(total); ++i) d[i] += s[i];
      } else {
        col2im(scratch.data(), g, dx->plane(b, 0), /*accumulate=*/true);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Pooling / resampling
// ---------------------------------------------------------------------------

// 2x2 stride-2 max pool, ceil mode (edge windows shrink). Stores flat argmax
// per output element for the backward pass.
template <typename T>
void maxpool2_forward(const Tensor<T>& x, Tensor<T>& y, Tensor<int32_t>& argmax) {
  int oh = (x.h() + 1) / 2, ow = (x.w() + 1) / 2;
  long long planes = static_cast<long long>(x.n()) * x.c();
#pragma omp parallel for schedule(static)
  for (long long p = 0; p < planes; ++p) {
    const T* src = x.data() + p * x.h() * x.w();
    T* dst = y.data() + p * oh * ow;
    int32_t* am = argmax.data() + p * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      int y1 = std::min(2 * oy + 2, x.h());
      for (int ox = 0; ox < ow; ++ox) {
        int x1 = std::min(2 * ox + 2, x.w());
        T best = src[static_cast<size_t>(2 * oy) * x.w() + 2 * ox];
        int32_t bi = 2 * oy * x.w() + 2 * ox;
        for (int yy = 2 * oy; yy < y1; ++yy)
          for (int xx = 2 * ox; xx < x1; ++xx) {
            T v = src[static_cast<size_t>(yy) * x.w() + xx];
            if (v > best) {
              best = v;
              bi = yy * x.w() + xx;
            }
          }
        dst[static_cast<size_t>(oy) * ow + ox] = best;
        am[static_cast<size_t>(oy) * ow + ox] = bi;
      }
    }
  }
}

template <typename T>
void maxpool2_backward(const Tensor<T>& dy, const Tensor<int32_t>& argmax, Tensor<T>& dx) {
  int oh = dy.h(), ow = dy.w();
  long long planes = static_cast<long long>(dy.n()) * dy.c();
  // windows are disjoint, so scattering by argmax is race-free per plane
#pragma omp parallel for schedule(static)
  for (long long p = 0; p < planes; ++p) {
    const T* d = dy.data() + p * oh * ow;
    const int32_t* am = argmax.data() + p * oh * ow;
    T* out = dx.data() + p * dx.h() * dx.w();
    for (int i = 0; i < oh * ow; ++i) out[am[i]] += d[i];
  }
}

template <typename T>
void upsample2_forward(const Tensor<T>& x, Tensor<T>& y) {
  int oh = 2 * x.h(), ow = 2 * x.w();
  long long planes = static_cast<long long>(x.n()) * x.c();
#pragma omp parallel for schedule(static)
  for (long long p = 0; p < planes; ++p) {
    const T* src = x.data() + p * x.h() * x.w();
    T* dst = y.data() + p * oh * ow;
    for (int y0 = 0; y0 < oh; ++y0) {
      const T* srow = src + static_cast<size_t>(y0 / 2) * x.w();
      T* drow = dst + static_cast<size_t>(y0) * ow;
      for (int x0 = 0; x0 < ow; ++x0) drow[x0] = srow[x0 / 2];
    }
  }
}

template <typename T>
void upsample2_backward(const Tensor<T>& dy, Tensor<T>& dx) {
  long long planes = static_cast<long long>(dx.n()) * dx.c();
#pragma omp parallel for schedule(static)
  for (long long p = 0; p < planes; ++p) {
    const T* d = dy.data() + p * dy.h() * dy.w();
    T* out = dx.data() + p * dx.h() * dx.w();
    for (int y0 = 0; y0 < dx.h(); ++y0)
      for (int x0 = 0; x0 < dx.w(); ++x0)
        out[static_cast<size_t>(y0) * dx.w() + x0] +=
            d[static_cast<size_t>(2 * y0) * dy.w() + 2 * x0] +
            d[static_cast<size_t>(2 * y0) * dy.w() + 2 * x0 + 1] +
            d[static_cast<size_t>(2 * y0 + 1) * dy.w() + 2 * x0] +
            d[static_cast<size_t>(2 * y0 + 1) * dy.w() + 2 * x0 + 1];
  }
}

// ---------------------------------------------------------------------------
// Pointwise helpers
// ---------------------------------------------------------------------------

template <typename T, typename F>
void map_unary(const Tensor<T>& x, Tensor<T>& y, F f) {
  long long n = static_cast<long long>(x.numel());
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < n; ++i) y[i] = f(x[i]);
}

template <typename T, typename F>
void map_binary(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& y, F f) {
  long long n = static_cast<long long>(a.numel());
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < n; ++i) y[i] = f(a[i], b[i]);
}

}  // namespace cigan::kernels
