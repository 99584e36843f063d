// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "cigan/autodiff.hpp"
#include "cigan/checkpoint.hpp"
#include "cigan/layers.hpp"

namespace cigan::nn {

// Frozen VGG-19-shaped multi-scale feature extractor. Taps are the post-ReLU
// activations of the first conv in each block (relu1_1 .. relu5_1), giving a
// 5-scale pyramid with channel counts (64, 128, 256, 512, 512) and spatial
// dims halving per scale. Weights are either loaded from an archive of
// pretrained tensors or drawn from a seeded generator for self-contained
// runs; they never receive gradients.
template <typename T>
class VggEncoder {
 public:
  static constexpr std::array<int, 5> kTapChannels{64, 128, 256, 512, 512};
  static constexpr const char* kTapNames[5] = {"relu1_1", "relu2_1", "relu3_1", "relu4_1",
                                               "relu5_1"};

  // random-weight backbone; deterministic in `seed`
  VggEncoder(ParameterStore<T>& store, uint64_t seed) {
    Rng rng(seed);
    build(store, [&](const Layer& l) {
      return std::pair{he_normal<T>(l.out_c, l.in_c, 3, 3, rng),
                       normal_init<T>(1, l.out_c, 1, 1, T(0.1), rng)};
    });
  }

  // pretrained weights from an archive holding convN_M.w / convN_M.b tensors;
  // meta key "imagenet_normalize"="1" enables the standard input normalization
  VggEncoder(ParameterStore<T>& store, const std::string& weights_path) {
    std::map<std::string, std::string> meta;
    auto tensors = io::load_archive<T>(weights_path, &meta);
    normalize_input_ = meta.count("imagenet_normalize") && meta["imagenet_normalize"] == "1";
    build(store, [&](const Layer& l) {
      auto wit = tensors.find(l.name + ".w");
      auto bit = tensors.find(l.name + ".b");
      check(wit != tensors.end() && bit != tensors.end(),
            weights_path + ": missing tensor for layer " + l.name);
      check(wit->second.n() == l.out_c && wit->second.c() == l.in_c,
            weights_path + ": bad shape for " + l.name);
      return std::pair{wit->second, bit->second};
    });
  }

  bool normalizes_input() const { return normalize_input_; }

  std::array<ad::Var<T>, 5> extract_pyramid(const ad::Var<T>& img) const {
    std::array<ad::Var<T>, 5> taps;
    forward_to(img, 4, &taps);
    return taps;
  }

  // runs only the prefix of the network the tap needs
  ad::Var<T> extract_layer(const ad::Var<T>& img, const std::string& tap) const {
    int idx = -1;
    for (int i = 0; i < 5; ++i)
      if (tap == kTapNames[i]) idx = i;
    check(idx >= 0, "extract_layer: unknown tap name " + tap);
    std::array<ad::Var<T>, 5> taps;
    forward_to(img, idx, &taps);
    return taps[idx];
  }

 private:
  struct Layer {
    std::string name;
    int in_c, out_c;
    bool pool_before;
    int tap;  // -1 if not a tap
  };

  template <typename WeightsFn>
  void build(ParameterStore<T>& store, WeightsFn weights_for) {
    layers_ = {{"conv1_1", 3, 64, false, 0},    {"conv1_2", 64, 64, false, -1},
               {"conv2_1", 64, 128, true, 1},   {"conv2_2", 128, 128, false, -1},
               {"conv3_1", 128, 256, true, 2},  {"conv3_2", 256, 256, false, -1},
               {"conv3_3", 256, 256, false, -1}, {"conv3_4", 256, 256, false, -1},
               {"conv4_1", 256, 512, true, 3},  {"conv4_2", 512, 512, false, -1},
               {"conv4_3", 512, 512, false, -1}, {"conv4_4", 512, 512, false, -1},
               {"conv5_1", 512, 512, true, 4}};
    for (const auto& l : layers_) {
      auto [w, b] = weights_for(l);
      ws_.push_back(store.add(l.name + ".w", std::move(w), /*trainable=*/false));
      bs_.push_back(store.add(l.name + ".b", std::move(b), /*trainable=*/false));
    }
  }

  void forward_to(const ad::Var<T>& img, int last_tap, std::array<ad::Var<T>, 5>* taps) const {
    const auto& v = img.value();
    check(v.c() == 3, "encoder: expected 3-channel input, got " + std::to_string(v.c()));
    check(v.h() >= 32 && v.w() >= 32,
          "encoder: input " + v.shape_str() + " smaller than 32x32");
    ad::Var<T> x = img;
    if (normalize_input_) {
      Tensor<T> mean(1, 3, 1, 1), inv_std(1, 3, 1, 1);
      mean[0] = T(0.485); mean[1] = T(0.456); mean[2] = T(0.406);
      inv_std[0] = T(1.0 / 0.229); inv_std[1] = T(1.0 / 0.224); inv_std[2] = T(1.0 / 0.225);
      x = ad::mul(ad::sub(x, ad::Var<T>::constant(mean)), ad::Var<T>::constant(inv_std));
    }
    for (size_t i = 0; i < layers_.size(); ++i) {
      if (layers_[i].pool_before) x = ad::maxpool2(x);
      x = ad::relu(ad::conv2d(x, ws_[i], bs_[i], 1, 1));
      if (layers_[i].tap >= 0) {
        (*taps)[layers_[i].tap] = x;
        if (layers_[i].tap == last_tap) return;
      }
    }
  }

  std::vector<Layer> layers_;
  std::vector<ad::Var<T>> ws_, bs_;
  bool normalize_input_ = false;
};

}  // namespace cigan::nn
