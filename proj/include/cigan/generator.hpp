// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "cigan/blocks.hpp"
#include "cigan/encoder.hpp"
#include "cigan/layers.hpp"

namespace cigan::nn {

struct Toggles {
  bool lgt = true;
  bool frp = true;
  bool dam = true;
  bool mfpd = true;
  bool lip = true;
  bool exp_loss = true;
};

// Shared decoder topology: five stages coarse-to-fine with widths
// (512,512,256,128,64). Stage i consumes the scale-i encoder feature
// concatenated with the 2x-upsampled previous stage, runs two 3x3 convs with
// LeakyReLU(0.2), then DAM, then (degradation path only) FRP. The head is a
// 3x3 conv to RGB followed by a sigmoid.
template <typename T>
class Decoder {
 public:
  static constexpr std::array<int, 5> kWidths{64, 128, 256, 512, 512};  // per scale index

  Decoder() = default;
  Decoder(ParameterStore<T>& store, SpectralNorm<T>* sn, const std::string& name, bool with_dam,
          bool with_frp, Rng& rng)
      : with_dam_(with_dam), with_frp_(with_frp) {
    for (int s = 4; s >= 0; --s) {
      int in_c = VggEncoder<T>::kTapChannels[s] + (s == 4 ? 0 : kWidths[s + 1]);
      int w = kWidths[s];
      std::string base = name + ".dec" + std::to_string(s + 1);
      c1_[s] = Conv2d<T>(store, sn, base + ".c1", in_c, w, 3, 1, 1, rng);
      c2_[s] = Conv2d<T>(store, sn, base + ".c2", w, w, 3, 1, 1, rng);
      if (with_dam_) dam_[s] = Dam<T>(store, sn, base + ".dam", w, rng);
      if (with_frp_) frp_[s] = Frp<T>(store, base + ".frp", w);
    }
    head_ = Conv2d<T>(store, sn, name + ".head", kWidths[0], 3, 3, 1, 1, rng);
  }

  // feats: pyramid (possibly LGT-modulated). rng used only when frp_active.
  ad::Var<T> decode(const std::array<ad::Var<T>, 5>& feats, Rng* rng, bool frp_active) const {
    ad::Var<T> x;
    for (int s = 4; s >= 0; --s) {
      ad::Var<T> in = feats[s];
      if (s < 4) {
        auto up = ad::upsample2(x);
        up = ad::crop_to(up, in.value().h(), in.value().w());
        in = ad::concat_c(in, up);
      }
      x = ad::leaky_relu(c1_[s](in), T(0.2));
      x = ad::leaky_relu(c2_[s](x), T(0.2));
      if (with_dam_) x = dam_[s].attend(x);
      if (with_frp_ && frp_active) x = frp_[s].perturb(x, *rng);
    }
    return ad::sigmoid(head_(x));
  }

  const std::array<Frp<T>, 5>& frp() const { return frp_; }
  bool has_frp() const { return with_frp_; }

 private:
  std::array<Conv2d<T>, 5> c1_, c2_;
  std::array<Dam<T>, 5> dam_;
  std::array<Frp<T>, 5> frp_;
  Conv2d<T> head_;
  bool with_dam_ = true, with_frp_ = false;
};

// Degradation generator: synthesizes a low-light version of `normal` guided
// by a real low-light reference. The reference enters through per-scale LGT
// modulation of the content pyramid; FRP injects learned noise at every
// decoder stage unless the call is deterministic.
template <typename T>
class GeneratorGL {
 public:
  GeneratorGL() = default;
  GeneratorGL(ParameterStore<T>& store, SpectralNorm<T>* sn, const VggEncoder<T>* encoder,
              const Toggles& toggles, Rng& rng)
      : encoder_(encoder), use_lgt_(toggles.lgt) {
    if (use_lgt_)
      for (int s = 0; s < 5; ++s)
        lgt_[s] = Lgt<T>(store, sn, "gl.lgt" + std::to_string(s + 1),
                         VggEncoder<T>::kTapChannels[s], rng);
    decoder_ = Decoder<T>(store, sn, "gl", toggles.dam, toggles.frp, rng);
  }

  ad::Var<T> degrade(const ad::Var<T>& normal, const ad::Var<T>& reference_low, Rng& rng,
                     bool deterministic) const {
    check_pair(normal.value(), reference_low.value());
    auto content = encoder_->extract_pyramid(normal);
    auto ref = encoder_->extract_pyramid(reference_low);
    return degrade_from(content, ref, rng, deterministic);
  }

  // trainer entry point with pyramids already extracted (they get reused)
  ad::Var<T> degrade_from(const std::array<ad::Var<T>, 5>& content,
                          const std::array<ad::Var<T>, 5>& reference, Rng& rng,
                          bool deterministic) const {
    std::array<ad::Var<T>, 5> feats;
    for (int s = 0; s < 5; ++s)
      feats[s] = use_lgt_ ? lgt_[s].modulate(content[s], reference[s]) : content[s];
    return decoder_.decode(feats, &rng, !deterministic);
  }

  const Decoder<T>& decoder() const { return decoder_; }
  const std::array<Lgt<T>, 5>& lgt() const { return lgt_; }
  bool uses_lgt() const { return use_lgt_; }

 private:
  static void check_pair(const Tensor<T>& a, const Tensor<T>& b) {
    check(a.c() == 3 && b.c() == 3, "degrade: inputs must be 3-channel");
    check(a.h() == b.h() && a.w() == b.w(),
          "degrade: dimension mismatch between normal " + a.shape_str() + " and reference " +
              b.shape_str());
  }

  const VggEncoder<T>* encoder_ = nullptr;
  std::array<Lgt<T>, 5> lgt_;
  Decoder<T> decoder_;
  bool use_lgt_ = true;
};

// Enhancement generator: decodes the low-light pyramid and fuses the decoder
// output with the input through LIP (or an additive residual clamped to
// [0,1] when the LIP toggle is off). Fully deterministic.
template <typename T>
class GeneratorGN {
 public:
  GeneratorGN() = default;
  GeneratorGN(ParameterStore<T>& store, SpectralNorm<T>* sn, const VggEncoder<T>* encoder,
              const Toggles& toggles, double lip_lambda, Rng& rng)
      : encoder_(encoder), use_lip_(toggles.lip), lip_lambda_(lip_lambda) {
    decoder_ = Decoder<T>(store, sn, "gn", toggles.dam, /*with_frp=*/false, rng);
  }

  ad::Var<T> enhance(const ad::Var<T>& low) const {
    const auto& v = low.value();
    check(v.c() == 3, "enhance: input must be 3-channel");
    auto taps = encoder_->extract_pyramid(low);
    return enhance_from(taps, low);
  }

  ad::Var<T> enhance_from(const std::array<ad::Var<T>, 5>& taps, const ad::Var<T>& low) const {
    auto decoded = decoder_.decode(taps, nullptr, false);
    if (use_lip_) return lip_fuse(decoded, low, lip_lambda_);
    return ad::clamp01(ad::add(low, decoded));
  }

  const Decoder<T>& decoder() const { return decoder_; }

 private:
  const VggEncoder<T>* encoder_ = nullptr;
  Decoder<T> decoder_;
  bool use_lip_ = true;
  double lip_lambda_ = 1.0;
};

}  // namespace cigan::nn
