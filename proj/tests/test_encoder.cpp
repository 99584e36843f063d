// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "cigan/encoder.hpp"
#include "cigan/reference_kernels.hpp"
#include "support/test_util.hpp"

using namespace cigan;
using ad::Var;
namespace fs = std::filesystem;

namespace {

// independent layer-by-layer forward pass: direct convolution + scalar loops
template <typename T>
std::array<Tensor<T>, 5> oracle_pyramid(const Tensor<T>& img, const nn::ParameterStore<T>& store) {
  struct L { const char* name; int in_c, out_c; bool pool; int tap; };
  const L layers[] = {{"conv1_1", 3, 64, false, 0},    {"conv1_2", 64, 64, false, -1},
                      {"conv2_1", 64, 128, true, 1},   {"conv2_2", 128, 128, false, -1},
                      {"conv3_1", 128, 256, true, 2},  {"conv3_2", 256, 256, false, -1},
                      {"conv3_3", 256, 256, false, -1}, {"conv3_4", 256, 256, false, -1},
                      {"conv4_1", 256, 512, true, 3},  {"conv4_2", 512, 512, false, -1},
                      {"conv4_3", 512, 512, false, -1}, {"conv4_4", 512, 512, false, -1},
                      {"conv5_1", 512, 512, true, 4}};
  std::array<Tensor<T>, 5> taps;
  Tensor<T> x = img;
  for (const auto& l : layers) {
    if (l.pool) {  // 2x2 ceil-mode max pool, scalar loops
      Tensor<T> pooled(x.n(), x.c(), (x.h() + 1) / 2, (x.w() + 1) / 2);
      for (int b = 0; b < x.n(); ++b)
        for (int c = 0; c < x.c(); ++c)
          for (int oy = 0; oy < pooled.h(); ++oy)
            for (int ox = 0; ox < pooled.w(); ++ox) {
              T best = x.at(b, c, 2 * oy, 2 * ox);
              for (int yy = 2 * oy; yy < std::min(2 * oy + 2, x.h()); ++yy)
                for (int xx = 2 * ox; xx < std::min(2 * ox + 2, x.w()); ++xx)
                  best = std::max(best, x.at(b, c, yy, xx));
              pooled.at(b, c, oy, ox) = best;
            }
      x = pooled;
    }
    Tensor<T> y(x.n(), l.out_c, x.h(), x.w());
    reference::conv2d_forward(x, store.get(std::string(l.name) + ".w").value(),
                              store.get(std::string(l.name) + ".b").value(), y, 1, 1);
    for (size_t i = 0; i < y.numel(); ++i) y[i] = std::max(y[i], T(0));
    x = y;
    if (l.tap >= 0) taps[l.tap] = x;
    if (l.tap == 4) break;
  }
  return taps;
}

}  // namespace

TEST_CASE("pyramid shape contract: 64x64 input") {
  nn::ParameterStore<float> store;
  nn::VggEncoder<float> enc(store, 42);
  Tensor<float> x(1, 3, 64, 64, 0.25f);
  auto taps = enc.extract_pyramid(Var<float>::constant(x));
  const int dims[5] = {64, 32, 16, 8, 4};
  for (int i = 0; i < 5; ++i) {
    CHECK(taps[i].value().c() == nn::VggEncoder<float>::kTapChannels[i]);
    CHECK(taps[i].value().h() == dims[i]);
    CHECK(taps[i].value().w() == dims[i]);
  }
}

TEST_CASE("pyramid dims are ceil(H/2^i) for odd inputs") {
  nn::ParameterStore<float> store;
  nn::VggEncoder<float> enc(store, 42);
  Tensor<float> x(1, 3, 33, 45, 0.5f);
  auto taps = enc.extract_pyramid(Var<float>::constant(x));
  const int hs[5] = {33, 17, 9, 5, 3};
  const int ws[5] = {45, 23, 12, 6, 3};
  for (int i = 0; i < 5; ++i) {
    CHECK(taps[i].value().h() == hs[i]);
    CHECK(taps[i].value().w() == ws[i]);
  }
}

TEST_CASE("same input twice gives bitwise-identical pyramids") {
  nn::ParameterStore<float> store;
  nn::VggEncoder<float> enc(store, 7);
  Rng rng(71);
  auto x = testutil::random_tensor<float>(1, 3, 48, 48, rng, 0.0f, 1.0f);
  auto a = enc.extract_pyramid(Var<float>::constant(x));
  auto b = enc.extract_pyramid(Var<float>::constant(x));
  for (int i = 0; i < 5; ++i)
    CHECK(testutil::max_abs_diff(a[i].value(), b[i].value()) == 0.0f);
}

TEST_CASE("random-weight backbone matches an independent forward oracle") {
  nn::ParameterStore<double> store;
  nn::VggEncoder<double> enc(store, 99);

  SUBCASE("zero image") {
    Tensor<double> x(1, 3, 32, 32, 0.0);
    auto got = enc.extract_pyramid(Var<double>::constant(x));
    auto want = oracle_pyramid(x, store);
    for (int i = 0; i < 5; ++i) CHECK(testutil::max_abs_diff(got[i].value(), want[i]) < 1e-5);
  }
  SUBCASE("random image") {
    Rng rng(72);
    auto x = testutil::random_tensor<double>(1, 3, 32, 32, rng, 0.0, 1.0);
    auto got = enc.extract_pyramid(Var<double>::constant(x));
    auto want = oracle_pyramid(x, store);
    for (int i = 0; i < 5; ++i) CHECK(testutil::max_abs_diff(got[i].value(), want[i]) < 1e-5);
  }
}

TEST_CASE("extract_layer agrees with the pyramid and rejects bad taps") {
  nn::ParameterStore<float> store;
  nn::VggEncoder<float> enc(store, 5);
  Rng rng(73);
  auto x = testutil::random_tensor<float>(1, 3, 64, 64, rng, 0.0f, 1.0f);
  auto v = Var<float>::constant(x);
  auto taps = enc.extract_pyramid(v);
  for (int i = 0; i < 5; ++i) {
    auto single = enc.extract_layer(v, nn::VggEncoder<float>::kTapNames[i]);
    CHECK(testutil::max_abs_diff(single.value(), taps[i].value()) == 0.0f);
  }
  auto r4 = enc.extract_layer(v, "relu4_1");
  CHECK(r4.value().c() == 512);
  CHECK(r4.value().h() == 8);
  CHECK_THROWS_AS(enc.extract_layer(v, "relu6_1"), std::invalid_argument);
}

TEST_CASE("relu4_1 input gradient matches finite differences") {
  nn::ParameterStore<double> store;
  nn::VggEncoder<double> enc(store, 3);
  Rng rng(74);
  for (int inst = 0; inst < 2; ++inst) {
    auto x = testutil::random_tensor<double>(1, 3, 32, 32, rng, 0.05, 0.95);
    auto leaf = Var<double>::leaf(x, true);
    auto out = ad::mean_all(enc.extract_layer(leaf, "relu4_1"));
    ad::backward(out);
    // relu/maxpool make the net piecewise-linear; h must be small enough that
    // few kinks fall inside [x-hv, x+hv]
    double err = testutil::directional_grad_error(
        [&](const Tensor<double>& xt) {
          return ad::mean_all(enc.extract_layer(Var<double>::constant(xt), "relu4_1")).item();
        },
        x, leaf.grad(), rng, 3, /*h=*/1e-6);
    CHECK(err < 1e-3);
  }
}

TEST_CASE("backbone is frozen: no trainables, no grads after backward") {
  nn::ParameterStore<double> store;
  nn::VggEncoder<double> enc(store, 11);
  CHECK(store.trainable().empty());

  Rng rng(75);
  auto x = testutil::random_tensor<double>(1, 3, 32, 32, rng, 0.0, 1.0);
  auto leaf = Var<double>::leaf(x, true);
  ad::backward(ad::mean_all(enc.extract_layer(leaf, "relu2_1")));
  for (const auto& [name, v] : store.all()) CHECK(v.grad().numel() == 0);
}

TEST_CASE("pretrained archive path applies input normalization") {
  // build a random backbone, save its weights as a fake pretrained archive
  nn::ParameterStore<float> src_store;
  nn::VggEncoder<float> src(src_store, 123);
  std::vector<std::pair<std::string, const Tensor<float>*>> tensors;
  for (const auto& [name, v] : src_store.all()) tensors.push_back({name, &v.value()});
  auto path = (fs::temp_directory_path() / "cigan_fake_vgg.ar").string();
  io::save_archive<float>(path, tensors, {{"imagenet_normalize", "1"}});

  nn::ParameterStore<float> store;
  nn::VggEncoder<float> enc(store, path);
  CHECK(enc.normalizes_input());

  Rng rng(76);
  auto x = testutil::random_tensor<float>(1, 3, 32, 32, rng, 0.0f, 1.0f);
  // manual normalization fed to the raw backbone must match
  Tensor<float> xn = x;
  const float mean[3] = {0.485f, 0.456f, 0.406f};
  const float stdd[3] = {0.229f, 0.224f, 0.225f};
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 32 * 32; ++i)
      xn.plane(0, c)[i] = (x.plane(0, c)[i] - mean[c]) * (1.0f / stdd[c]);
  auto got = enc.extract_layer(Var<float>::constant(x), "relu1_1");
  auto want = src.extract_layer(Var<float>::constant(xn), "relu1_1");
  CHECK(testutil::max_abs_diff(got.value(), want.value()) < 1e-5f);
}

TEST_CASE("undersized or non-RGB input is rejected") {
  nn::ParameterStore<float> store;
  nn::VggEncoder<float> enc(store, 1);
  Tensor<float> small(1, 3, 16, 16, 0.5f);
  CHECK_THROWS_AS(enc.extract_pyramid(Var<float>::constant(small)), std::invalid_argument);
  Tensor<float> gray(1, 1, 64, 64, 0.5f);
  CHECK_THROWS_AS(enc.extract_pyramid(Var<float>::constant(gray)), std::invalid_argument);
}
