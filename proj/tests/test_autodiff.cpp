// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cigan/autodiff.hpp"
#include "support/test_util.hpp"

using namespace cigan;
using namespace cigan::ad;
using testutil::finite_difference_grad;
using testutil::grad_rel_error;
using testutil::random_tensor;

namespace {

// runs f on a leaf made from x, backprops, compares against central FD
template <typename F>
void check_grad(F build, Tensor<double> x, double tol = 1e-6) {
  auto leaf = Var<double>::leaf(x, /*requires_grad=*/true);
  Var<double> out = build(leaf);
  backward(out);
  auto fd = finite_difference_grad(
      [&](const Tensor<double>& xt) {
        auto v = Var<double>::leaf(xt, false);
        return build(v).item();
      },
      x);
  CHECK(grad_rel_error(leaf.grad(), fd) < tol);
}

}  // namespace

TEST_CASE("pointwise op gradients") {
  Rng rng(21);
  auto x = random_tensor<double>(1, 2, 4, 5, rng);
  check_grad([](Var<double> v) { return mean_all(relu(v)); }, x, 1e-5);
  check_grad([](Var<double> v) { return mean_all(leaky_relu(v, 0.2)); }, x, 1e-5);
  check_grad([](Var<double> v) { return mean_all(sigmoid(v)); }, x);
  check_grad([](Var<double> v) { return mean_all(exp_(v)); }, x);
  check_grad([](Var<double> v) { return mean_all(v * v); }, x);
  auto pos = random_tensor<double>(1, 1, 3, 3, rng, 0.5, 2.0);
  check_grad([](Var<double> v) { return mean_all(sqrt_(v)); }, pos);
}

TEST_CASE("broadcast binary ops: values and gradients") {
  Rng rng(22);
  auto a = random_tensor<double>(2, 3, 4, 4, rng);
  auto b = random_tensor<double>(1, 3, 1, 1, rng, 0.5, 1.5);

  auto va = Var<double>::leaf(a, true);
  auto vb = Var<double>::leaf(b, true);
  auto out = va * vb;
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
          CHECK(out.value().at(n, c, y, x) ==
                doctest::Approx(a.at(n, c, y, x) * b.at(0, c, 0, 0)));

  backward(mean_all(out * out));
  // FD on the broadcast operand
  auto fd = finite_difference_grad(
      [&](const Tensor<double>& bt) {
        auto v = Var<double>::leaf(a, false) * Var<double>::leaf(bt, false);
        return mean_all(v * v).item();
      },
      b);
  CHECK(grad_rel_error(vb.grad(), fd) < 1e-8);
}

TEST_CASE("division gradient, both sides") {
  Rng rng(23);
  auto a = random_tensor<double>(1, 2, 3, 3, rng);
  auto b = random_tensor<double>(1, 2, 3, 3, rng, 0.5, 2.0);
  auto va = Var<double>::leaf(a, true);
  auto vb = Var<double>::leaf(b, true);
  backward(mean_all(va / vb));
  auto fd_a = finite_difference_grad(
      [&](const Tensor<double>& t) {
        return mean_all(Var<double>::leaf(t, false) / Var<double>::leaf(b, false)).item();
      },
      a);
  auto fd_b = finite_difference_grad(
      [&](const Tensor<double>& t) {
        return mean_all(Var<double>::leaf(a, false) / Var<double>::leaf(t, false)).item();
      },
      b, 1e-5);  // 1/b is curved enough that h=1e-3 leaves visible truncation error
  CHECK(grad_rel_error(va.grad(), fd_a) < 1e-8);
  CHECK(grad_rel_error(vb.grad(), fd_b) < 1e-8);
}

TEST_CASE("conv2d gradient w.r.t. input, weight and bias") {
  Rng rng(24);
  auto x = random_tensor<double>(1, 2, 6, 6, rng);
  auto w = random_tensor<double>(3, 2, 3, 3, rng);
  auto b = random_tensor<double>(1, 3, 1, 1, rng);

  auto vx = Var<double>::leaf(x, true);
  auto vw = Var<double>::leaf(w, true);
  auto vb = Var<double>::leaf(b, true);
  backward(mean_all(sigmoid(conv2d(vx, vw, vb, 1, 1))));

  auto run = [&](const Tensor<double>& xt, const Tensor<double>& wt, const Tensor<double>& bt) {
    return mean_all(sigmoid(conv2d(Var<double>::leaf(xt, false), Var<double>::leaf(wt, false),
                                   Var<double>::leaf(bt, false), 1, 1)))
        .item();
  };
  CHECK(grad_rel_error(vx.grad(), finite_difference_grad(
                                      [&](const Tensor<double>& t) { return run(t, w, b); }, x)) <
        1e-6);
  CHECK(grad_rel_error(vw.grad(), finite_difference_grad(
                                      [&](const Tensor<double>& t) { return run(x, t, b); }, w)) <
        1e-6);
  CHECK(grad_rel_error(vb.grad(), finite_difference_grad(
                                      [&](const Tensor<double>& t) { return run(x, w, t); }, b)) <
        1e-6);
}

TEST_CASE("structure op gradients") {
  Rng rng(25);
  auto x = random_tensor<double>(1, 3, 6, 6, rng);
  check_grad([](Var<double> v) { return mean_all(maxpool2(v)); }, x, 1e-5);
  check_grad([](Var<double> v) { return mean_all(upsample2(v) * upsample2(v)); }, x);
  check_grad([](Var<double> v) { return mean_all(crop_to(v, 4, 3) * 2.0); }, x);
  check_grad([](Var<double> v) { return mean_all(concat_c(v, v * 2.0)); }, x);
  check_grad([](Var<double> v) { return mean_all(mean_spatial(v)); }, x);
  check_grad([](Var<double> v) { return mean_all(std_spatial(v)); }, x, 1e-5);
  check_grad([](Var<double> v) { return mean_all(mean_channel(v)); }, x);
  check_grad([](Var<double> v) { return mean_all(max_channel(v)); }, x, 1e-5);
  check_grad([](Var<double> v) { return mean_all(box_mean(v, 4)); }, x);
}

TEST_CASE("box_mean handles partial edge regions") {
  // 5x5 with window 2: edge regions average their actual pixels
  Tensor<double> x(1, 1, 5, 5);
  for (int i = 0; i < 25; ++i) x[i] = i;
  auto out = box_mean(Var<double>::leaf(x, false), 2).value();
  CHECK(out.h() == 3);
  CHECK(out.w() == 3);
  CHECK(out.at(0, 0, 0, 0) == doctest::Approx((0 + 1 + 5 + 6) / 4.0));
  CHECK(out.at(0, 0, 0, 2) == doctest::Approx((4 + 9) / 2.0));
  CHECK(out.at(0, 0, 2, 2) == doctest::Approx(24.0));
}

TEST_CASE("no-grad subgraphs record nothing") {
  Rng rng(26);
  auto x = Var<double>::constant(random_tensor<double>(1, 1, 4, 4, rng));
  auto y = sigmoid(x * 2.0);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("gradient accumulates across shared subexpressions") {
  Tensor<double> x0 = Tensor<double>::scalar(3.0);
  auto x = Var<double>::leaf(x0, true);
  auto y = x * x + x * 2.0;  // dy/dx = 2x + 2 = 8
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(8.0));
}

TEST_CASE("detach blocks gradient flow") {
  auto x = Var<double>::leaf(Tensor<double>::scalar(2.0), true);
  auto y = x.detach() * x;  // treated as const * x, dy/dx = 2
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
}
