// SPDX-License-Identifier: Apache-2.0
#pragma once

// Small reverse-mode autodiff over NCHW tensors. A Var is a shared handle to
// a graph node; ops record parents plus a backward closure. Subgraphs whose
// output does not require grad record nothing, so frozen-network forward
// passes release their intermediates as soon as the local handles die.

#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "cigan/kernels.hpp"
#include "cigan/tensor.hpp"

namespace cigan::ad {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward;

  void ensure_grad() {
    if (grad.numel() != value.numel())
      grad = Tensor<T>(value.n(), value.c(), value.h(), value.w());
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Var leaf(Tensor<T> value, bool requires_grad) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }
  static Var constant(Tensor<T> value) { return leaf(std::move(value), false); }
  static Var scalar(T v) { return constant(Tensor<T>::scalar(v)); }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }
  std::shared_ptr<Node<T>> node() const { return node_; }

  T item() const {
    check(node_->value.numel() == 1, "Var::item: not a scalar");
    return node_->value[0];
  }

  Var detach() const { return constant(node_->value); }

  void zero_grad() {
    if (node_->grad.numel()) node_->grad.zero();
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs,
               std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  for (const auto& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
  if (n->requires_grad) {
    for (const auto& in : inputs) n->parents.push_back(in.node());
    n->backward = std::move(backward);
  }
  return Var<T>(std::move(n));
}

// sum `src` into `dst` whose dims are each either equal to src's or 1
template <typename T>
void reduce_into(const Tensor<T>& src, Tensor<T>& dst) {
  if (src.shape() == dst.shape()) {
    long long n = static_cast<long long>(src.numel());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) dst[i] += src[i];
    return;
  }
  int rn = src.n() / dst.n(), rc = src.c() / dst.c(), rh = src.h() / dst.h(),
      rw = src.w() / dst.w();
  long long dn = static_cast<long long>(dst.numel());
#pragma omp parallel for schedule(static)
  for (long long di = 0; di < dn; ++di) {
    int iw = static_cast<int>(di) % dst.w();
    int ih = static_cast<int>(di / dst.w()) % dst.h();
    int ic = static_cast<int>(di / (static_cast<long long>(dst.w()) * dst.h())) % dst.c();
    int in = static_cast<int>(di / (static_cast<long long>(dst.w()) * dst.h() * dst.c()));
    T acc = dst[di];
    for (int bn = 0; bn < rn; ++bn)
      for (int bc = 0; bc < rc; ++bc)
        for (int bh = 0; bh < rh; ++bh)
          for (int bw = 0; bw < rw; ++bw)
            acc += src.at(in * rn + bn, ic * rc + bc, ih * rh + bh, iw * rw + bw);
    dst[di] = acc;
  }
}

inline std::array<int, 4> broadcast_shape(const std::array<int, 4>& a,
                                          const std::array<int, 4>& b) {
  std::array<int, 4> out{};
  for (int i = 0; i < 4; ++i) {
    check(a[i] == b[i] || a[i] == 1 || b[i] == 1, "broadcast: incompatible shapes");
    out[i] = std::max(a[i], b[i]);
  }
  return out;
}

// elementwise with numpy-style broadcasting; strides are zero on broadcast dims
template <typename T, typename F>
Tensor<T> broadcast_apply(const Tensor<T>& a, const Tensor<T>& b, F f) {
  if (a.shape() == b.shape()) {
    Tensor<T> out(a.n(), a.c(), a.h(), a.w());
    kernels::map_binary(a, b, out, f);
    return out;
  }
  auto shp = broadcast_shape(a.shape(), b.shape());
  Tensor<T> out(shp[0], shp[1], shp[2], shp[3]);
  long long sa[4], sb[4];
  long long stride_a = 1, stride_b = 1;
  for (int i = 3; i >= 0; --i) {
    sa[i] = a.shape()[i] == 1 ? 0 : stride_a;
    sb[i] = b.shape()[i] == 1 ? 0 : stride_b;
    stride_a *= a.shape()[i];
    stride_b *= b.shape()[i];
  }
  long long n = static_cast<long long>(out.numel());
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < n; ++i) {
    int iw = static_cast<int>(i) % shp[3];
    int ih = static_cast<int>(i / shp[3]) % shp[2];
    int ic = static_cast<int>(i / (static_cast<long long>(shp[3]) * shp[2])) % shp[1];
    int in = static_cast<int>(i / (static_cast<long long>(shp[3]) * shp[2] * shp[1]));
    out[i] = f(a[in * sa[0] + ic * sa[1] + ih * sa[2] + iw * sa[3]],
               b[in * sb[0] + ic * sb[1] + ih * sb[2] + iw * sb[3]]);
  }
  return out;
}

// dout * factor, reduced into the grad of input shaped like `target`
template <typename T, typename F>
void backprop_broadcast(Node<T>& self, const std::shared_ptr<Node<T>>& target, F factor_at) {
  if (!target->requires_grad) return;
  target->ensure_grad();
  const auto& shp = self.value.shape();
  Tensor<T> contrib(shp[0], shp[1], shp[2], shp[3]);
  long long n = static_cast<long long>(contrib.numel());
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < n; ++i) contrib[i] = self.grad[i] * factor_at(i);
  reduce_into(contrib, target->grad);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// arithmetic
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Tensor<T> v = detail::broadcast_apply(a.value(), b.value(), [](T x, T y) { return x + y; });
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(std::move(v), {a, b}, [an, bn](Node<T>& self) {
    detail::backprop_broadcast(self, an, [](long long) { return T(1); });
    detail::backprop_broadcast(self, bn, [](long long) { return T(1); });
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  Tensor<T> v = detail::broadcast_apply(a.value(), b.value(), [](T x, T y) { return x - y; });
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(std::move(v), {a, b}, [an, bn](Node<T>& self) {
    detail::backprop_broadcast(self, an, [](long long) { return T(1); });
    detail::backprop_broadcast(self, bn, [](long long) { return T(-1); });
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Tensor<T> v = detail::broadcast_apply(a.value(), b.value(), [](T x, T y) { return x * y; });
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(std::move(v), {a, b}, [an, bn](Node<T>& self) {
    // re-expand the counterpart operand at each output position
    const Tensor<T>&av = an->value, &bv = bn->value;
    auto shp = self.value.shape();
    auto pos = [shp](long long i, const Tensor<T>& t) -> T {
      int iw = static_cast<int>(i) % shp[3];
      int ih = static_cast<int>(i / shp[3]) % shp[2];
      int ic = static_cast<int>(i / (static_cast<long long>(shp[3]) * shp[2])) % shp[1];
      int in = static_cast<int>(i / (static_cast<long long>(shp[3]) * shp[2] * shp[1]));
      return t.at(in % t.n(), ic % t.c(), ih % t.h(), iw % t.w());
    };
    detail::backprop_broadcast(self, an, [&](long long i) { return pos(i, bv); });
    detail::backprop_broadcast(self, bn, [&](long long i) { return pos(i, av); });
  });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  Tensor<T> v = detail::broadcast_apply(a.value(), b.value(), [](T x, T y) { return x / y; });
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(std::move(v), {a, b}, [an, bn](Node<T>& self) {
    const Tensor<T>&av = an->value, &bv = bn->value;
    auto shp = self.value.shape();
    auto pos = [shp](long long i, const Tensor<T>& t) -> T {
      int iw = static_cast<int>(i) % shp[3];
      int ih = static_cast<int>(i / shp[3]) % shp[2];
      int ic = static_cast<int>(i / (static_cast<long long>(shp[3]) * shp[2])) % shp[1];
      int in = static_cast<int>(i / (static_cast<long long>(shp[3]) * shp[2] * shp[1]));
      return t.at(in % t.n(), ic % t.c(), ih % t.h(), iw % t.w());
    };
    detail::backprop_broadcast(self, an, [&](long long i) { return T(1) / pos(i, bv); });
    detail::backprop_broadcast(
        self, bn, [&](long long i) { return -pos(i, av) / (pos(i, bv) * pos(i, bv)); });
  });
}

template <typename T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <typename T>
Var<T> operator/(const Var<T>& a, const Var<T>& b) { return div(a, b); }

template <typename T, typename F, typename DF>
Var<T> unary_op(const Var<T>& x, F f, DF dfdx_from_xy) {
  Tensor<T> v(x.value().n(), x.value().c(), x.value().h(), x.value().w());
  kernels::map_unary(x.value(), v, f);
  auto xn = x.node();
  return detail::make_op<T>(std::move(v), {x}, [xn, dfdx_from_xy](Node<T>& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    long long n = static_cast<long long>(self.value.numel());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i)
      xn->grad[i] += self.grad[i] * dfdx_from_xy(xn->value[i], self.value[i]);
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return unary_op(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  return unary_op(
      x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return unary_op(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> exp_(const Var<T>& x) {
  return unary_op(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> abs_(const Var<T>& x) {
  return unary_op(
      x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

// forward is the exact sqrt; the backward guard only matters at 0
template <typename T>
Var<T> sqrt_(const Var<T>& x) {
  return unary_op(
      x, [](T v) { return std::sqrt(v); },
      [](T, T y) { return T(0.5) / std::max(y, T(1e-6)); });
}

template <typename T>
Var<T> clamp01(const Var<T>& x) {
  return unary_op(
      x, [](T v) { return std::min(std::max(v, T(0)), T(1)); },
      [](T v, T) { return (v >= T(0) && v <= T(1)) ? T(1) : T(0); });
}

template <typename T>
Var<T> scale_add(const Var<T>& x, T scale, T shift) {
  return unary_op(
      x, [scale, shift](T v) { return scale * v + shift; }, [scale](T, T) { return scale; });
}

template <typename T>
Var<T> operator*(const Var<T>& x, double s) { return scale_add(x, T(s), T(0)); }
template <typename T>
Var<T> operator*(double s, const Var<T>& x) { return scale_add(x, T(s), T(0)); }
template <typename T>
Var<T> operator+(const Var<T>& x, double s) { return scale_add(x, T(1), T(s)); }
template <typename T>
Var<T> operator+(double s, const Var<T>& x) { return scale_add(x, T(1), T(s)); }
template <typename T>
Var<T> operator-(double s, const Var<T>& x) { return scale_add(x, T(-1), T(s)); }
template <typename T>
Var<T> operator-(const Var<T>& x, double s) { return scale_add(x, T(1), T(-s)); }

// ---------------------------------------------------------------------------
// structure ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> concat_c(const Var<T>& a, const Var<T>& b) {
  check(a.value().n() == b.value().n() && a.value().h() == b.value().h() &&
            a.value().w() == b.value().w(),
        "concat_c: shape mismatch");
  int ca = a.value().c(), cb = b.value().c();
  Tensor<T> v(a.value().n(), ca + cb, a.value().h(), a.value().w());
  size_t plane = static_cast<size_t>(a.value().h()) * a.value().w();
  for (int bn = 0; bn < v.n(); ++bn) {
    std::memcpy(v.plane(bn, 0), a.value().plane(bn, 0), plane * ca * sizeof(T));
    std::memcpy(v.plane(bn, ca), b.value().plane(bn, 0), plane * cb * sizeof(T));
  }
  auto an = a.node(), bn_ = b.node();
  return detail::make_op<T>(std::move(v), {a, b}, [an, bn_, ca, cb, plane](Node<T>& self) {
    for (const auto& [node, off, cc] : {std::tuple{an, 0, ca}, std::tuple{bn_, ca, cb}}) {
      if (!node->requires_grad) continue;
      node->ensure_grad();
      for (int i = 0; i < self.value.n(); ++i) {
        const T* src = self.grad.plane(i, off);
        T* dst = node->grad.plane(i, 0);
        long long m = static_cast<long long>(plane) * cc;
#pragma omp parallel for schedule(static)
        for (long long k = 0; k < m; ++k) dst[k] += src[k];
      }
    }
  });
}

// top-left crop to (h, w)
template <typename T>
Var<T> crop_to(const Var<T>& x, int h, int w) {
  const auto& xv = x.value();
  check(h <= xv.h() && w <= xv.w(), "crop_to: target larger than input");
  if (h == xv.h() && w == xv.w()) return x;
  Tensor<T> v(xv.n(), xv.c(), h, w);
  for (int b = 0; b < xv.n(); ++b)
    for (int c = 0; c < xv.c(); ++c)
      for (int y = 0; y < h; ++y)
        std::memcpy(&v.at(b, c, y, 0), &xv.at(b, c, y, 0), static_cast<size_t>(w) * sizeof(T));
  auto xn = x.node();
  return detail::make_op<T>(std::move(v), {x}, [xn, h, w](Node<T>& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (int b = 0; b < self.value.n(); ++b)
      for (int c = 0; c < self.value.c(); ++c)
        for (int y = 0; y < h; ++y)
          for (int x0 = 0; x0 < w; ++x0) xn->grad.at(b, c, y, x0) += self.grad.at(b, c, y, x0);
  });
}

template <typename T>
Var<T> maxpool2(const Var<T>& x) {
  const auto& xv = x.value();
  Tensor<T> v(xv.n(), xv.c(), (xv.h() + 1) / 2, (xv.w() + 1) / 2);
  auto argmax =
      std::make_shared<Tensor<int32_t>>(xv.n(), xv.c(), (xv.h() + 1) / 2, (xv.w() + 1) / 2);
  kernels::maxpool2_forward(xv, v, *argmax);
  auto xn = x.node();
  return detail::make_op<T>(std::move(v), {x}, [xn, argmax](Node<T>& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    kernels::maxpool2_backward(self.grad, *argmax, xn->grad);
  });
}

template <typename T>
Var<T> upsample2(const Var<T>& x) {
  const auto& xv = x.value();
  Tensor<T> v(xv.n(), xv.c(), 2 * xv.h(), 2 * xv.w());
  kernels::upsample2_forward(xv, v);
  auto xn = x.node();
  return detail::make_op<T>(std::move(v), {x}, [xn](Node<T>& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    kernels::upsample2_backward(self.grad, xn->grad);
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  check(xv.c() == wv.c(), "conv2d: channel mismatch");
  auto g = kernels::conv_geometry(xv.c(), xv.h(), xv.w(), wv.n(), wv.h(), wv.w(), stride, pad);
  Tensor<T> v(xv.n(), g.out_c, g.out_h, g.out_w);
  std::vector<T> scratch;
  kernels::conv2d_forward(xv, wv, b.value(), v, stride, pad, scratch);
  auto xn = x.node(), wn = w.node(), bn = b.node();
  return detail::make_op<T>(std::move(v), {x, w, b}, [xn, wn, bn, stride, pad](Node<T>& self) {
    Tensor<T>* dx = nullptr;
    Tensor<T>* dw = nullptr;
    Tensor<T>* db = nullptr;
    if (xn->requires_grad) {
      xn->ensure_grad();
      dx = &xn->grad;
    }
    if (wn->requires_grad) {
      wn->ensure_grad();
      dw = &wn->grad;
    }
    if (bn->requires_grad && !bn->value.empty()) {
      bn->ensure_grad();
      db = &bn->grad;
    }
    if (!dx && !dw && !db) return;
    std::vector<T> scratch;
    kernels::conv2d_backward(xn->value, wn->value, self.grad, dx, dw, db, stride, pad, scratch);
  });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
Var<T> sum_all(const Var<T>& x) {
  T s = T(0);
  for (size_t i = 0; i < x.value().numel(); ++i) s += x.value()[i];
  auto xn = x.node();
  return detail::make_op<T>(Tensor<T>::scalar(s), {x}, [xn](Node<T>& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    T g = self.grad[0];
    long long n = static_cast<long long>(xn->value.numel());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) xn->grad[i] += g;
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& x) {
  return sum_all(x) * (1.0 / static_cast<double>(x.value().numel()));
}

template <typename T>
Var<T> mean_spatial(const Var<T>& x) {
  const auto& xv = x.value();
  int hw = xv.h() * xv.w();
  Tensor<T> v(xv.n(), xv.c(), 1, 1);
  for (int b = 0; b < xv.n(); ++b)
    for (int c = 0; c < xv.c(); ++c) {
      const T* p = xv.plane(b, c);
      T s = T(0);
      for (int i = 0; i < hw; ++i) s += p[i];
      v.at(b, c, 0, 0) = s / static_cast<T>(hw);
    }
  auto xn = x.node();
  return detail::make_op<T>(std::move(v), {x}, [xn, hw](Node<T>& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (int b = 0; b < self.value.n(); ++b)
      for (int c = 0; c < self.value.c(); ++c) {
        T g = self.grad.at(b, c, 0, 0) / static_cast<T>(hw);
        T* gp = xn->grad.plane(b, c);
        for (int i = 0; i < hw; ++i) gp[i] += g;
      }
  });
}

// unbiased standard deviation over the spatial extent of each channel
template <typename T>
Var<T> std_spatial(const Var<T>& x) {
  const auto& xv = x.value();
  int hw = xv.h() * xv.w();
  check(hw >= 2, "std_spatial: needs at least 2 spatial positions");
  Tensor<T> v(xv.n(), xv.c(), 1, 1);
  auto mu = std::make_shared<Tensor<T>>(xv.n(), xv.c(), 1, 1);
  for (int b = 0; b < xv.n(); ++b)
    for (int c = 0; c < xv.c(); ++c) {
      const T* p = xv.plane(b, c);
      T s = T(0);
      for (int i = 0; i < hw; ++i) s += p[i];
      T m = s / static_cast<T>(hw);
      T q = T(0);
      for (int i = 0; i < hw; ++i) q += (p[i] - m) * (p[i] - m);
      mu->at(b, c, 0, 0) = m;
      v.at(b, c, 0, 0) = std::sqrt(q / static_cast<T>(hw - 1) + T(1e-12));
    }
  auto xn = x.node();
  return detail::make_op<T>(std::move(v), {x}, [xn, mu, hw](Node<T>& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (int b = 0; b < self.value.n(); ++b)
      for (int c = 0; c < self.value.c(); ++c) {
        T g = self.grad.at(b, c, 0, 0);
        T s = self.value.at(b, c, 0, 0);
        T m = mu->at(b, c, 0, 0);
        const T* p = xn->value.plane(b, c);
        T* gp = xn->grad.plane(b, c);
        T k = g / (static_cast<T>(hw - 1) * s);
        for (int i = 0; i < hw; ++i) gp[i] += k * (p[i] - m);
      }
  });
}

template <typename T>
Var<T> mean_channel(const Var<T>& x) {
  const auto& xv = x.value();
  Tensor<T> v(xv.n(), 1, xv.h(), xv.w());
  int hw = xv.h() * xv.w();
  for (int b = 0; b < xv.n(); ++b) {
    T* out = v.plane(b, 0);
    std::fill(out, out + hw, T(0));
    for (int c = 0; c < xv.c(); ++c) {
      const T* p = xv.plane(b, c);
      for (int i = 0; i < hw; ++i) out[i] += p[i];
    }
    for (int i = 0; i < hw; ++i) out[i] /= static_cast<T>(xv.c());
  }
  auto xn = x.node();
  return detail::make_op<T>(std::move(v), {x}, [xn, hw](Node<T>& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    int cc = xn->value.c();
    for (int b = 0; b < self.value.n(); ++b) {
      const T* g = self.grad.plane(b, 0);
      for (int c = 0; c < cc; ++c) {
        T* gp = xn->grad.plane(b, c);
        for (int i = 0; i < hw; ++i) gp[i] += g[i] / static_cast<T>(cc);
      }
    }
  });
}

template <typename T>
Var<T> max_channel(const Var<T>& x) {
  const auto& xv = x.value();
  int hw = xv.h() * xv.w();
  Tensor<T> v(xv.n(), 1, xv.h(), xv.w());
  auto arg = std::make_shared<Tensor<int32_t>>(xv.n(), 1, xv.h(), xv.w());
  for (int b = 0; b < xv.n(); ++b) {
    T* out = v.plane(b, 0);
    int32_t* am = arg->plane(b, 0);
    for (int i = 0; i < hw; ++i) {
      T best = xv.plane(b, 0)[i];
      int32_t bc = 0;
      for (int c = 1; c < xv.c(); ++c) {
        T cand = xv.plane(b, c)[i];
        if (cand > best) {
          best = cand;
          bc = c;
        }
      }
      out[i] = best;
      am[i] = bc;
    }
  }
  auto xn = x.node();
  return detail::make_op<T>(std::move(v), {x}, [xn, arg, hw](Node<T>& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (int b = 0; b < self.value.n(); ++b) {
      const T* g = self.grad.plane(b, 0);
      const int32_t* am = arg->plane(b, 0);
      for (int i = 0; i < hw; ++i) xn->grad.plane(b, am[i])[i] += g[i];
    }
  });
}

// mean over non-overlapping win x win regions; partial edge regions use their
// actual pixel count
template <typename T>
Var<T> box_mean(const Var<T>& x, int win) {
  check(win >= 1, "box_mean: window must be >= 1");
  const auto& xv = x.value();
  int oh = (xv.h() + win - 1) / win, ow = (xv.w() + win - 1) / win;
  Tensor<T> v(xv.n(), xv.c(), oh, ow);
  for (int b = 0; b < xv.n(); ++b)
    for (int c = 0; c < xv.c(); ++c)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          int y1 = std::min((oy + 1) * win, xv.h());
          int x1 = std::min((ox + 1) * win, xv.w());
          T s = T(0);
          for (int y = oy * win; y < y1; ++y)
            for (int x0 = ox * win; x0 < x1; ++x0) s += xv.at(b, c, y, x0);
          v.at(b, c, oy, ox) = s / static_cast<T>((y1 - oy * win) * (x1 - ox * win));
        }
  auto xn = x.node();
  return detail::make_op<T>(std::move(v), {x}, [xn, win](Node<T>& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const auto& xsh = xn->value;
    for (int b = 0; b < self.value.n(); ++b)
      for (int c = 0; c < self.value.c(); ++c)
        for (int oy = 0; oy < self.value.h(); ++oy)
          for (int ox = 0; ox < self.value.w(); ++ox) {
            int y1 = std::min((oy + 1) * win, xsh.h());
            int x1 = std::min((ox + 1) * win, xsh.w());
            T g = self.grad.at(b, c, oy, ox) /
                  static_cast<T>((y1 - oy * win) * (x1 - ox * win));
            for (int y = oy * win; y < y1; ++y)
              for (int x0 = ox * win; x0 < x1; ++x0) xn->grad.at(b, c, y, x0) += g;
          }
  });
}

// ---------------------------------------------------------------------------
// backward driver
// ---------------------------------------------------------------------------

template <typename T>
void backward(const Var<T>& root) {
  check(root.value().numel() == 1, "backward: root must be a scalar");
  if (!root.requires_grad()) return;

  std::vector<Node<T>*> topo;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.push_back({root.node().get(), 0});
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* p = node->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad();
  root.node()->grad[0] = T(1);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && n->grad.numel()) n->backward(*n);
  }
}

}  // namespace cigan::ad
