// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cigan/autodiff.hpp"
#include "cigan/tensor.hpp"

namespace cigan::train {

// Adam over a fixed parameter list. A parameter whose grad was never touched
// this step is treated as having a zero gradient. Moment tensors and the step
// counter serialize into checkpoints.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<std::pair<std::string, ad::Var<T>>> params, double beta1, double beta2,
       double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& [name, v] : params) {
      const auto& s = v.value();
      slots_.push_back({name, v, Tensor<T>(s.n(), s.c(), s.h(), s.w()),
                        Tensor<T>(s.n(), s.c(), s.h(), s.w())});
    }
  }

  void step(double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& s : slots_) {
      Tensor<T>& w = s.param.value();
      const Tensor<T>& g = s.param.grad();
      bool has_grad = g.numel() == w.numel();
      long long n = static_cast<long long>(w.numel());
#pragma omp parallel for schedule(static)
      for (long long i = 0; i < n; ++i) {
        double gi = has_grad ? static_cast<double>(g[i]) : 0.0;
        double m = beta1_ * s.m[i] + (1.0 - beta1_) * gi;
        double v = beta2_ * s.v[i] + (1.0 - beta2_) * gi * gi;
        s.m[i] = static_cast<T>(m);
        s.v[i] = static_cast<T>(v);
        w[i] -= static_cast<T>(lr * (m / bc1) / (std::sqrt(v / bc2) + eps_));
      }
    }
  }

  long long step_count() const { return t_; }

  void export_state(const std::string& prefix,
                    std::vector<std::pair<std::string, const Tensor<T>*>>& out) {
    t_tensor_ = Tensor<T>::scalar(static_cast<T>(t_));
    out.push_back({prefix + ".t", &t_tensor_});
    for (const auto& s : slots_) {
      out.push_back({prefix + "." + s.name + ".m", &s.m});
      out.push_back({prefix + "." + s.name + ".v", &s.v});
    }
  }

  void import_state(const std::string& prefix, const std::map<std::string, Tensor<T>>& tensors) {
    auto need = [&](const std::string& key) -> const Tensor<T>& {
      auto it = tensors.find(key);
      check(it != tensors.end(), "checkpoint missing optimizer tensor " + key);
      return it->second;
    };
    t_ = static_cast<long long>(need(prefix + ".t")[0]);
    for (auto& s : slots_) {
      s.m = need(prefix + "." + s.name + ".m");
      s.v = need(prefix + "." + s.name + ".v");
    }
  }

 private:
  struct Slot {
    std::string name;
    ad::Var<T> param;
    Tensor<T> m, v;
  };
  std::vector<Slot> slots_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long long t_ = 0;
  Tensor<T> t_tensor_;  // staging for export
};

}  // namespace cigan::train
