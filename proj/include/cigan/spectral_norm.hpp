// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "cigan/autodiff.hpp"
#include "cigan/rng.hpp"
#include "cigan/tensor.hpp"

namespace cigan::nn {

template <typename T>
class ParameterStore;

// Keeps every constrained weight's top singular value near 1 by rescaling the
// weight after each optimizer step. The weight is viewed as an
// (out_c) x (in_c*kh*kw) matrix; u/v are persistent power-iteration vectors
// that live in the parameter store so checkpoints carry them. One iteration
// per apply() once warm; a cold weight (fresh or previously all-zero) gets a
// 100-iteration warmup: He-init conv matrices have near-degenerate top
// singular values and 20 iterations still underestimate sigma_1 by ~1.5%.
template <typename T>
class SpectralNorm {
 public:
  void constrain(ParameterStore<T>& store, const ad::Var<T>& w, const std::string& name,
                 Rng& rng);

  // rescale all constrained weights in place; call after each optimizer step
  void apply();

  size_t size() const { return items_.size(); }

  // estimate sigma_1 of an arbitrary weight tensor with `iters` fresh power
  // iterations (used by apply() internally; tests carry their own oracle)
  static T estimate_sigma(const Tensor<T>& w, int iters, Rng& rng);

 private:
  struct Item {
    ad::Var<T> w;
    ad::Var<T> u;     // (1,1,1,M)
    ad::Var<T> v;     // (1,1,1,K)
    ad::Var<T> warm;  // scalar 0/1
  };
  std::vector<Item> items_;

  static void power_iterate(const Tensor<T>& w, Tensor<T>& u, Tensor<T>& v, int iters);
  static T sigma_from(const Tensor<T>& w, const Tensor<T>& u, const Tensor<T>& v);
};

template <typename T>
void SpectralNorm<T>::power_iterate(const Tensor<T>& w, Tensor<T>& u, Tensor<T>& v, int iters) {
  int m = w.n();
  int k = static_cast<int>(w.numel()) / m;
  const T* W = w.data();
  for (int it = 0; it < iters; ++it) {
    // v = normalize(W^T u); each v[j] is one fixed-order column sum
#pragma omp parallel for schedule(static)
    for (int j = 0; j < k; ++j) {
      T s = T(0);
      for (int i = 0; i < m; ++i) s += W[static_cast<size_t>(i) * k + j] * u[i];
      v[j] = s;
    }
    T nv = T(0);
    for (int j = 0; j < k; ++j) nv += v[j] * v[j];
    nv = std::sqrt(nv);
    if (nv < T(1e-20)) return;  // effectively zero matrix, leave u/v alone
    for (int j = 0; j < k; ++j) v[j] /= nv;
    // u = normalize(W v)
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
      const T* row = W + static_cast<size_t>(i) * k;
      T s = T(0);
      for (int j = 0; j < k; ++j) s += row[j] * v[j];
      u[i] = s;
    }
    T nu = T(0);
    for (int i = 0; i < m; ++i) nu += u[i] * u[i];
    nu = std::sqrt(nu);
    if (nu < T(1e-20)) return;
    for (int i = 0; i < m; ++i) u[i] /= nu;
  }
}

template <typename T>
T SpectralNorm<T>::sigma_from(const Tensor<T>& w, const Tensor<T>& u, const Tensor<T>& v) {
  int m = w.n();
  int k = static_cast<int>(w.numel()) / m;
  T sigma = T(0);
  for (int i = 0; i < m; ++i) {
    const T* row = w.data() + static_cast<size_t>(i) * k;
    T s = T(0);
    for (int j = 0; j < k; ++j) s += row[j] * v[j];
    sigma += u[i] * s;
  }
  return sigma;
}

template <typename T>
T SpectralNorm<T>::estimate_sigma(const Tensor<T>& w, int iters, Rng& rng) {
  int m = w.n();
  int k = static_cast<int>(w.numel()) / m;
  Tensor<T> u(1, 1, 1, m), v(1, 1, 1, k);
  T norm = T(0);
  for (int i = 0; i < m; ++i) {
    u[i] = static_cast<T>(rng.normal());
    norm += u[i] * u[i];
  }
  norm = std::sqrt(norm);
  for (int i = 0; i < m; ++i) u[i] /= norm;
  power_iterate(w, u, v, iters);
  return sigma_from(w, u, v);
}

template <typename T>
void SpectralNorm<T>::apply() {
  for (auto& item : items_) {
    Tensor<T>& w = item.w.value();
    T maxabs = T(0);
    for (size_t i = 0; i < w.numel(); ++i) maxabs = std::max(maxabs, std::abs(w[i]));
    if (maxabs == T(0)) continue;  // zero weight stays zero, stays cold

    bool warm = item.warm.value()[0] != T(0);
    power_iterate(w, item.u.value(), item.v.value(), warm ? 1 : 100);
    T sigma = sigma_from(w, item.u.value(), item.v.value());
    if (sigma > T(1e-12)) {
      T inv = T(1) / sigma;
      for (size_t i = 0; i < w.numel(); ++i) w[i] *= inv;
    }
    item.warm.value()[0] = T(1);
  }
}

}  // namespace cigan::nn
