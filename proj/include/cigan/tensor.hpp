// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cigan {

// Dense NCHW tensor. Everything in the pipeline is 4-d: images are
// (batch, channel, height, width), conv weights are (out_c, in_c, kh, kw),
// per-channel parameters are (1, c, 1, 1) and scalars are (1, 1, 1, 1).
template <typename T>
class Tensor {
 public:
  Tensor() : shape_{0, 0, 0, 0} {}

  Tensor(int n, int c, int h, int w, T fill = T(0))
      : shape_{n, c, h, w}, data_(static_cast<size_t>(n) * c * h * w, fill) {
    if (n < 0 || c < 0 || h < 0 || w < 0)
      throw std::invalid_argument("Tensor: negative dimension");
  }

  static Tensor scalar(T v) {
    Tensor t(1, 1, 1, 1);
    t.data_[0] = v;
    return t;
  }

  int n() const { return shape_[0]; }
  int c() const { return shape_[1]; }
  int h() const { return shape_[2]; }
  int w() const { return shape_[3]; }
  const std::array<int, 4>& shape() const { return shape_; }
  size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  T& at(int in, int ic, int ih, int iw) {
    return data_[((static_cast<size_t>(in) * shape_[1] + ic) * shape_[2] + ih) * shape_[3] + iw];
  }
  const T& at(int in, int ic, int ih, int iw) const {
    return data_[((static_cast<size_t>(in) * shape_[1] + ic) * shape_[2] + ih) * shape_[3] + iw];
  }

  // channel plane pointer, the common unit kernels operate on
  T* plane(int in, int ic) {
    return data_.data() + (static_cast<size_t>(in) * shape_[1] + ic) * shape_[2] * shape_[3];
  }
  const T* plane(int in, int ic) const {
    return data_.data() + (static_cast<size_t>(in) * shape_[1] + ic) * shape_[2] * shape_[3];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  void zero() { fill(T(0)); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(n(), c(), h(), w());
    for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(" << shape_[0] << "," << shape_[1] << "," << shape_[2] << "," << shape_[3] << ")";
    return os.str();
  }

 private:
  std::array<int, 4> shape_;
  std::vector<T> data_;
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace cigan
