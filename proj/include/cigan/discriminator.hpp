// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "cigan/layers.hpp"

namespace cigan::nn {

// Patch logits from one or more pyramid levels plus the per-image mean over
// every logit. Raw scores, no sigmoid: the hinge losses consume them as-is.
template <typename T>
struct ScoreSet {
  std::vector<ad::Var<T>> logits;  // each (b,1,h_l,w_l)
  ad::Var<T> aggregate;            // (b,1,1,1)
};

// Multi-scale feature pyramid discriminator: five stride-2 conv blocks with
// widths (64,128,256,512,512) and LeakyReLU(0.2). Zero-initialized 1x1 heads
// sit on stages 3, 4 and 5 (stage 5 only when the pyramid is disabled), so an
// untrained discriminator scores everything 0. Every conv is spectrally
// constrained; there is no other normalization.
template <typename T>
class Mfpd {
 public:
  static constexpr std::array<int, 5> kWidths{64, 128, 256, 512, 512};

  Mfpd() = default;
  Mfpd(ParameterStore<T>& store, SpectralNorm<T>& sn, const std::string& name, bool pyramid,
       Rng& rng)
      : pyramid_(pyramid) {
    int in_c = 3;
    for (int s = 0; s < 5; ++s) {
      blocks_[s] =
          Conv2d<T>(store, &sn, name + ".b" + std::to_string(s + 1), in_c, kWidths[s], 3, 2, 1,
                    rng);
      in_c = kWidths[s];
    }
    for (int s : head_stages()) {
      heads_.push_back(Conv2d<T>(store, &sn, name + ".head" + std::to_string(s + 1),
                                 kWidths[s], 1, 1, 1, 0, rng, /*zero_init=*/true));
    }
  }

  std::vector<int> head_stages() const {
    return pyramid_ ? std::vector<int>{2, 3, 4} : std::vector<int>{4};
  }

  ScoreSet<T> score(const ad::Var<T>& img) const {
    const auto& v = img.value();
    check(v.c() == 3, "mfpd_score: input must be 3-channel");
    check(v.h() >= 16 && v.w() >= 16, "mfpd_score: undersized input " + v.shape_str());
    ScoreSet<T> out;
    ad::Var<T> x = img;
    auto stages = head_stages();
    size_t next = 0;
    for (int s = 0; s < 5; ++s) {
      x = ad::leaky_relu(blocks_[s](x), T(0.2));
      if (next < stages.size() && stages[next] == s) {
        out.logits.push_back(heads_[next](x));
        ++next;
      }
    }
    // per-image mean over every logit at every level
    long long total = 0;
    for (const auto& l : out.logits) total += l.value().h() * l.value().w();
    for (size_t i = 0; i < out.logits.size(); ++i) {
      long long count = out.logits[i].value().h() * out.logits[i].value().w();
      auto part = ad::mean_spatial(out.logits[i]) *
                  (static_cast<double>(count) / static_cast<double>(total));
      out.aggregate = i == 0 ? part : ad::add(out.aggregate, part);
    }
    return out;
  }

 private:
  std::array<Conv2d<T>, 5> blocks_;
  std::vector<Conv2d<T>> heads_;
  bool pyramid_ = true;
};

}  // namespace cigan::nn
