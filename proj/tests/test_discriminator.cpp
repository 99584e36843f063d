// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cigan/discriminator.hpp"
#include "support/test_util.hpp"

using namespace cigan;
using ad::Var;
using testutil::random_tensor;

namespace {

// independent power-iteration oracle on the unrolled (out_c, rest) matrix
double sigma_oracle(const Tensor<float>& w, int iters, uint64_t seed) {
  int m = w.n();
  int k = static_cast<int>(w.numel()) / m;
  Rng rng(seed);
  std::vector<double> u(m), v(k);
  double norm = 0;
  for (auto& x : u) {
    x = rng.normal();
    norm += x * x;
  }
  for (auto& x : u) x /= std::sqrt(norm);
  for (int it = 0; it < iters; ++it) {
    for (auto& x : v) x = 0;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < k; ++j) v[j] += w[static_cast<size_t>(i) * k + j] * u[i];
    double nv = 0;
    for (auto x : v) nv += x * x;
    nv = std::sqrt(nv);
    if (nv == 0) return 0;
    for (auto& x : v) x /= nv;
    for (int i = 0; i < m; ++i) {
      double s = 0;
      for (int j = 0; j < k; ++j) s += w[static_cast<size_t>(i) * k + j] * v[j];
      u[i] = s;
    }
    double nu = 0;
    for (auto x : u) nu += x * x;
    nu = std::sqrt(nu);
    for (auto& x : u) x /= nu;
  }
  double sigma = 0;
  for (int i = 0; i < m; ++i) {
    double s = 0;
    for (int j = 0; j < k; ++j) s += w[static_cast<size_t>(i) * k + j] * v[j];
    sigma += u[i] * s;
  }
  return sigma;
}

}  // namespace

TEST_CASE("mfpd: 64x64 input yields logit maps at 8x8, 4x4, 2x2") {
  nn::ParameterStore<float> store;
  nn::SpectralNorm<float> sn;
  Rng rng(61);
  nn::Mfpd<float> d(store, sn, "d", /*pyramid=*/true, rng);
  auto x = random_tensor<float>(2, 3, 64, 64, rng, 0.0f, 1.0f);
  auto s = d.score(Var<float>::constant(x));
  REQUIRE(s.logits.size() == 3);
  CHECK(s.logits[0].value().h() == 8);
  CHECK(s.logits[1].value().h() == 4);
  CHECK(s.logits[2].value().h() == 2);
  for (const auto& l : s.logits) CHECK(l.value().c() == 1);
  CHECK(s.aggregate.value().n() == 2);
  CHECK(s.aggregate.value().numel() == 2);
}

TEST_CASE("mfpd: zero-initialized heads score everything 0") {
  nn::ParameterStore<float> store;
  nn::SpectralNorm<float> sn;
  Rng rng(62);
  nn::Mfpd<float> d(store, sn, "d", true, rng);
  auto x = random_tensor<float>(1, 3, 32, 32, rng, 0.0f, 1.0f);
  auto s = d.score(Var<float>::constant(x));
  for (const auto& l : s.logits)
    for (size_t i = 0; i < l.value().numel(); ++i) CHECK(l.value()[i] == 0.0f);
  CHECK(s.aggregate.value()[0] == 0.0f);
}

TEST_CASE("mfpd: deterministic") {
  nn::ParameterStore<float> store;
  nn::SpectralNorm<float> sn;
  Rng rng(63);
  nn::Mfpd<float> d(store, sn, "d", true, rng);
  auto x = random_tensor<float>(1, 3, 48, 48, rng, 0.0f, 1.0f);
  auto a = d.score(Var<float>::constant(x));
  auto b = d.score(Var<float>::constant(x));
  for (size_t i = 0; i < a.logits.size(); ++i)
    CHECK(testutil::max_abs_diff(a.logits[i].value(), b.logits[i].value()) == 0.0f);
}

TEST_CASE("mfpd: spectral constraint holds after apply (power-iteration oracle)") {
  nn::ParameterStore<float> store;
  nn::SpectralNorm<float> sn;
  Rng rng(64);
  nn::Mfpd<float> d(store, sn, "d", true, rng);
  sn.apply();  // cold start runs the 20-iteration warmup
  int checked = 0;
  for (const auto& [name, v] : store.all()) {
    if (name.size() < 2 || name.substr(name.size() - 2) != ".w") continue;
    float maxabs = 0;
    for (size_t i = 0; i < v.value().numel(); ++i)
      maxabs = std::max(maxabs, std::abs(v.value()[i]));
    if (maxabs == 0.0f) continue;  // zero-init heads stay zero
    double sigma = sigma_oracle(v.value(), 20, 1234);
    CHECK(sigma <= 1.0 + 1e-2);
    ++checked;
  }
  CHECK(checked == 5);  // the five backbone convs
}

TEST_CASE("mfpd: single head when the pyramid is disabled") {
  nn::ParameterStore<float> store;
  nn::SpectralNorm<float> sn;
  Rng rng(65);
  nn::Mfpd<float> d(store, sn, "d", /*pyramid=*/false, rng);
  auto x = random_tensor<float>(1, 3, 64, 64, rng, 0.0f, 1.0f);
  auto s = d.score(Var<float>::constant(x));
  CHECK(s.logits.size() == 1);
  CHECK(s.logits[0].value().h() == 2);
}

TEST_CASE("mfpd: aggregate is differentiable w.r.t. the input") {
  nn::ParameterStore<double> store;
  nn::SpectralNorm<double> sn;
  Rng rng(66);
  nn::Mfpd<double> d(store, sn, "d", true, rng);
  // heads are zero-init; nudge them so the aggregate is nontrivial
  for (int stage : {3, 4, 5}) {
    auto w = store.get("d.head" + std::to_string(stage) + ".w");
    for (size_t i = 0; i < w.value().numel(); ++i) w.value()[i] = 0.01 * (i % 7 - 3);
  }
  auto x = random_tensor<double>(1, 3, 32, 32, rng, 0.05, 0.95);
  auto leaf = Var<double>::leaf(x, true);
  ad::backward(ad::mean_all(d.score(leaf).aggregate));
  double err = testutil::directional_grad_error(
      [&](const Tensor<double>& t) {
        return ad::mean_all(d.score(Var<double>::constant(t)).aggregate).item();
      },
      x, leaf.grad(), rng, 4, /*h=*/1e-6);
  CHECK(err < 1e-3);
}

TEST_CASE("mfpd: undersized input rejected") {
  nn::ParameterStore<float> store;
  nn::SpectralNorm<float> sn;
  Rng rng(67);
  nn::Mfpd<float> d(store, sn, "d", true, rng);
  Tensor<float> tiny(1, 3, 8, 8, 0.5f);
  CHECK_THROWS_AS(d.score(Var<float>::constant(tiny)), std::invalid_argument);
}
