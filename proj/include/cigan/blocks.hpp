// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>

#include "cigan/autodiff.hpp"
#include "cigan/layers.hpp"
#include "cigan/rng.hpp"

namespace cigan::nn {

// Elementwise affine modulation of content features by weights/biases
// convolved from a reference feature map: out = content .* w(ref) + b(ref).
// One shared 3x3 conv + LeakyReLU feeds two separate 3x3 convs for w and b;
// hidden width equals the scale's channel count.
template <typename T>
class Lgt {
 public:
  Lgt() = default;
  Lgt(ParameterStore<T>& store, SpectralNorm<T>* sn, const std::string& name, int channels,
      Rng& rng)
      : shared_(store, sn, name + ".shared", channels, channels, 3, 1, 1, rng),
        wconv_(store, sn, name + ".wconv", channels, channels, 3, 1, 1, rng),
        bconv_(store, sn, name + ".bconv", channels, channels, 3, 1, 1, rng) {}

  ad::Var<T> modulate(const ad::Var<T>& content, const ad::Var<T>& reference) const {
    check(content.value().shape() == reference.value().shape(),
          "lgt_modulate: content " + content.value().shape_str() + " vs reference " +
              reference.value().shape_str());
    auto t = ad::leaky_relu(shared_(reference), T(0.2));
    return ad::add(ad::mul(content, wconv_(t)), bconv_(t));
  }

 private:
  Conv2d<T> shared_, wconv_, bconv_;
};

// Learnable randomized feature perturbation:
//   x~ = (1 + theta1*alpha) .* x + theta2*beta
// with alpha ~ N(0,1) per (batch, channel) broadcast over space and
// beta ~ N(0,1) per (batch, pixel) broadcast over channels. theta start at
// zero so the path begins as the identity. Draws are alpha first, then beta,
// elementwise in scan order, so a seeded stream reproduces exactly. The
// samples are constants; gradients reach x and the thetas only.
template <typename T>
class Frp {
 public:
  Frp() = default;
  Frp(ParameterStore<T>& store, const std::string& name, int channels) {
    theta1_ = store.add(name + ".theta1", Tensor<T>(1, channels, 1, 1));
    theta2_ = store.add(name + ".theta2", Tensor<T>(1, channels, 1, 1));
  }

  ad::Var<T> perturb(const ad::Var<T>& x, Rng& rng) const {
    const auto& v = x.value();
    Tensor<T> alpha(v.n(), v.c(), 1, 1);
    for (size_t i = 0; i < alpha.numel(); ++i) alpha[i] = static_cast<T>(rng.normal());
    Tensor<T> beta(v.n(), 1, v.h(), v.w());
    for (size_t i = 0; i < beta.numel(); ++i) beta[i] = static_cast<T>(rng.normal());
    auto scale = ad::mul(theta1_, ad::Var<T>::constant(std::move(alpha)));
    auto shift = ad::mul(theta2_, ad::Var<T>::constant(std::move(beta)));
    return ad::add(ad::add(x, ad::mul(scale, x)), shift);
  }

  ad::Var<T> theta1() const { return theta1_; }
  ad::Var<T> theta2() const { return theta2_; }

 private:
  ad::Var<T> theta1_, theta2_;
};

// Dual attention: a channel branch squeezed by spatial mean/std and a spatial
// branch squeezed by channel mean/max, each excited into a sigmoid gate.
// The channel gate applies first, the spatial gate second, and the gated
// signal is added back onto the input.
template <typename T>
class Dam {
 public:
  Dam() = default;
  Dam(ParameterStore<T>& store, SpectralNorm<T>* sn, const std::string& name, int channels,
      Rng& rng) {
    int mid = std::max(channels / 4, 4);
    ca1_ = Conv2d<T>(store, sn, name + ".ca1", 2 * channels, mid, 1, 1, 0, rng);
    ca2_ = Conv2d<T>(store, sn, name + ".ca2", mid, channels, 1, 1, 0, rng);
    sa1_ = Conv2d<T>(store, sn, name + ".sa1", 2, 8, 3, 1, 1, rng);
    sa2_ = Conv2d<T>(store, sn, name + ".sa2", 8, 1, 3, 1, 1, rng);
  }

  // (spatial mean, unbiased spatial std) per channel, each (b,c,1,1)
  static std::pair<ad::Var<T>, ad::Var<T>> channel_squeeze(const ad::Var<T>& x) {
    return {ad::mean_spatial(x), ad::std_spatial(x)};
  }

  // (channel mean, channel max) per pixel, each (b,1,h,w)
  static std::pair<ad::Var<T>, ad::Var<T>> spatial_squeeze(const ad::Var<T>& x) {
    return {ad::mean_channel(x), ad::max_channel(x)};
  }

  ad::Var<T> attend(const ad::Var<T>& x) const {
    check(x.value().h() * x.value().w() >= 2,
          "dam_attend: degenerate 1x1 spatial input, std undefined");
    auto [cm, cs] = channel_squeeze(x);
    auto ca_gate = ad::sigmoid(ca2_(ad::leaky_relu(ca1_(ad::concat_c(cm, cs)), T(0.2))));
    auto y = ad::mul(x, ca_gate);
    auto [sm, sx] = spatial_squeeze(y);
    auto sa_gate = ad::sigmoid(sa2_(ad::leaky_relu(sa1_(ad::concat_c(sm, sx)), T(0.2))));
    y = ad::mul(y, sa_gate);
    return ad::add(x, y);
  }

 private:
  Conv2d<T> ca1_, ca2_, sa1_, sa2_;
};

// Logarithmic image processing fusion (a+b)/(lambda + a*b). Closed and
// monotone on [0,1]^2 for lambda >= 1, with 0 as identity element.
template <typename T>
ad::Var<T> lip_fuse(const ad::Var<T>& a, const ad::Var<T>& b, double lambda) {
  check(a.value().shape() == b.value().shape(),
        "lip_fuse: shape mismatch " + a.value().shape_str() + " vs " + b.value().shape_str());
  check(lambda >= 1.0, "lip_fuse: lambda must be >= 1 to stay closed on [0,1]");
  return ad::div(ad::add(a, b), ad::mul(a, b) + lambda);
}

}  // namespace cigan::nn
