// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cigan/autodiff.hpp"
#include "cigan/discriminator.hpp"
#include "cigan/encoder.hpp"

namespace cigan::losses {

// Per-step scalar losses in the order they are logged.
struct LossBundle {
  double lg_adv_L = 0, lg_adv_N = 0;
  double l_exp = 0, l_con = 0, l_per = 0;
  double lg_total = 0;
  double ld_L = 0, ld_N = 0, ld_total = 0;
};

struct LossWeights {
  double exp = 10.0;
  double con = 10.0;
  double per = 1.0;
};

inline double total_generator_loss(const LossBundle& b, const LossWeights& w) {
  return b.lg_adv_L + b.lg_adv_N + w.exp * b.l_exp + w.con * b.l_con + w.per * b.l_per;
}

inline double total_discriminator_loss(const LossBundle& b) { return b.ld_L + b.ld_N; }

// Penalizes local mean intensity away from the target e. The image reduces
// to gray (unweighted RGB mean) unless per_channel is set; means are taken
// over non-overlapping window x window regions (edge regions over their
// actual pixels) and each region contributes 1 - exp(-(i-e)^2 / (2 sigma^2)).
template <typename T>
ad::Var<T> exposure_loss(const ad::Var<T>& img, double e, double sigma, int window,
                         bool per_channel = false) {
  check(window >= 1, "exposure_loss: window must be >= 1");
  ad::Var<T> intensity = img;
  if (!per_channel && img.value().c() == 3) intensity = ad::mean_channel(img);
  auto regions = ad::box_mean(intensity, window);
  auto d = regions - e;
  auto t = ad::mul(d, d) * (-1.0 / (2.0 * sigma * sigma));
  return ad::mean_all(1.0 - ad::exp_(t));
}

namespace detail {

template <typename T>
long long logit_count(const nn::ScoreSet<T>& s) {
  long long total = 0;
  for (const auto& l : s.logits) total += static_cast<long long>(l.value().numel());
  return total;
}

template <typename T>
ad::Var<T> pooled_mean(const nn::ScoreSet<T>& s) {
  check(!s.logits.empty(), "rahinge: empty score set");
  ad::Var<T> acc;
  for (size_t i = 0; i < s.logits.size(); ++i) {
    auto part = ad::sum_all(s.logits[i]);
    acc = i == 0 ? part : ad::add(acc, part);
  }
  return acc * (1.0 / static_cast<double>(logit_count(s)));
}

// mean over all logits of relu(1 + sign*(logit - other_mean))
template <typename T>
ad::Var<T> hinge_term(const nn::ScoreSet<T>& s, const ad::Var<T>& other_mean, double sign) {
  ad::Var<T> acc;
  for (size_t i = 0; i < s.logits.size(); ++i) {
    auto rel = ad::sub(s.logits[i], other_mean);
    auto part = ad::sum_all(ad::relu(1.0 + sign * rel));
    acc = i == 0 ? part : ad::add(acc, part);
  }
  return acc * (1.0 / static_cast<double>(logit_count(s)));
}

}  // namespace detail

// relativistic average hinge, generator side:
//   E_fake[max(0, 1 - (D(fake) - E D(real)))] + E_real[max(0, 1 + (D(real) - E D(fake)))]
template <typename T>
ad::Var<T> rahinge_generator_loss(const nn::ScoreSet<T>& fake, const nn::ScoreSet<T>& real) {
  auto m_real = detail::pooled_mean(real);
  auto m_fake = detail::pooled_mean(fake);
  return ad::add(detail::hinge_term(fake, m_real, -1.0), detail::hinge_term(real, m_fake, +1.0));
}

// discriminator side: signs swapped
template <typename T>
ad::Var<T> rahinge_discriminator_loss(const nn::ScoreSet<T>& fake, const nn::ScoreSet<T>& real) {
  auto m_real = detail::pooled_mean(real);
  auto m_fake = detail::pooled_mean(fake);
  return ad::add(detail::hinge_term(fake, m_real, +1.0), detail::hinge_term(real, m_fake, -1.0));
}

// mean absolute error; one half of the cycle-consistency pair
template <typename T>
ad::Var<T> l1_mean(const ad::Var<T>& a, const ad::Var<T>& b) {
  check(a.value().shape() == b.value().shape(), "l1_mean: shape mismatch");
  return ad::mean_all(ad::abs_(ad::sub(a, b)));
}

// root-mean-square of a feature difference (L2 normalized by element count)
template <typename T>
ad::Var<T> rms_diff(const ad::Var<T>& a, const ad::Var<T>& b) {
  check(a.value().shape() == b.value().shape(), "rms_diff: shape mismatch");
  auto d = ad::sub(a, b);
  return ad::sqrt_(ad::mean_all(ad::mul(d, d)));
}

// (l_con, l_per) over both cycle pairs; the perceptual term compares relu4_1
// features of the frozen encoder
template <typename T>
std::pair<ad::Var<T>, ad::Var<T>> cycle_losses(const ad::Var<T>& in_n, const ad::Var<T>& cyc_n,
                                               const ad::Var<T>& in_l, const ad::Var<T>& cyc_l,
                                               const nn::VggEncoder<T>& backbone) {
  auto l_con = ad::add(l1_mean(in_n, cyc_n), l1_mean(in_l, cyc_l));
  auto f_in_n = backbone.extract_layer(in_n, "relu4_1");
  auto f_cy_n = backbone.extract_layer(cyc_n, "relu4_1");
  auto f_in_l = backbone.extract_layer(in_l, "relu4_1");
  auto f_cy_l = backbone.extract_layer(cyc_l, "relu4_1");
  auto l_per = ad::add(rms_diff(f_in_n, f_cy_n), rms_diff(f_in_l, f_cy_l));
  return {l_con, l_per};
}

}  // namespace cigan::losses
