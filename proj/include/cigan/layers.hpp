// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "cigan/autodiff.hpp"
#include "cigan/rng.hpp"
#include "cigan/spectral_norm.hpp"
#include "cigan/tensor.hpp"

namespace cigan::nn {

// Named registry of learnable tensors and persistent buffers. Iteration is
// always in sorted name order, which pins serialization layout.
template <typename T>
class ParameterStore {
 public:
  ad::Var<T> add(const std::string& name, Tensor<T> init, bool trainable = true) {
    check(!entries_.count(name), "ParameterStore: duplicate name " + name);
    auto v = ad::Var<T>::leaf(std::move(init), trainable);
    entries_.emplace(name, Entry{v, trainable});
    return v;
  }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }

  ad::Var<T> get(const std::string& name) const {
    auto it = entries_.find(name);
    check(it != entries_.end(), "ParameterStore: unknown name " + name);
    return it->second.var;
  }

  std::vector<std::pair<std::string, ad::Var<T>>> trainable() const {
    std::vector<std::pair<std::string, ad::Var<T>>> out;
    for (const auto& [name, e] : entries_)
      if (e.trainable) out.push_back({name, e.var});
    return out;
  }

  std::vector<std::pair<std::string, ad::Var<T>>> all() const {
    std::vector<std::pair<std::string, ad::Var<T>>> out;
    for (const auto& [name, e] : entries_) out.push_back({name, e.var});
    return out;
  }

  void zero_grads() {
    for (auto& [name, e] : entries_) {
      auto node = e.var.node();
      if (node->grad.numel()) node->grad.zero();
    }
  }

  size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    ad::Var<T> var;
    bool trainable;
  };
  std::map<std::string, Entry> entries_;
};

template <typename T>
void SpectralNorm<T>::constrain(ParameterStore<T>& store, const ad::Var<T>& w,
                                const std::string& name, Rng& rng) {
  int m = w.value().n();
  int k = static_cast<int>(w.value().numel()) / m;
  Tensor<T> u(1, 1, 1, m), v(1, 1, 1, k);
  T norm = T(0);
  for (int i = 0; i < m; ++i) {
    u[i] = static_cast<T>(rng.normal());
    norm += u[i] * u[i];
  }
  norm = std::sqrt(norm);
  for (int i = 0; i < m; ++i) u[i] /= norm;
  Item item;
  item.w = w;
  item.u = store.add(name + ".sn_u", std::move(u), /*trainable=*/false);
  item.v = store.add(name + ".sn_v", std::move(v), /*trainable=*/false);
  item.warm = store.add(name + ".sn_warm", Tensor<T>::scalar(T(0)), /*trainable=*/false);
  items_.push_back(std::move(item));
}

// ---------------------------------------------------------------------------
// initializers
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> he_normal(int out_c, int in_c, int kh, int kw, Rng& rng) {
  Tensor<T> w(out_c, in_c, kh, kw);
  T std_dev = std::sqrt(T(2) / static_cast<T>(in_c * kh * kw));
  for (size_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal()) * std_dev;
  return w;
}

template <typename T>
Tensor<T> normal_init(int n, int c, int h, int w, T std_dev, Rng& rng) {
  Tensor<T> t(n, c, h, w);
  for (size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal()) * std_dev;
  return t;
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

template <typename T>
struct Conv2d {
  ad::Var<T> w, b;
  int stride = 1, pad = 0;

  Conv2d() = default;

  // sn == nullptr leaves the weight unconstrained (frozen backbone)
  Conv2d(ParameterStore<T>& store, SpectralNorm<T>* sn, const std::string& name, int in_c,
         int out_c, int k, int stride_, int pad_, Rng& rng, bool zero_init = false)
      : stride(stride_), pad(pad_) {
    Tensor<T> wt = zero_init ? Tensor<T>(out_c, in_c, k, k) : he_normal<T>(out_c, in_c, k, k, rng);
    w = store.add(name + ".w", std::move(wt));
    b = store.add(name + ".b", Tensor<T>(1, out_c, 1, 1));
    if (sn) sn->constrain(store, w, name, rng);
  }

  ad::Var<T> operator()(const ad::Var<T>& x) const { return ad::conv2d(x, w, b, stride, pad); }
};

}  // namespace cigan::nn
