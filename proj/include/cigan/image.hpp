// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "cigan/rng.hpp"
#include "cigan/tensor.hpp"

namespace cigan::img {

using Image = Tensor<float>;

// Decodes an 8-bit PNG or JPEG (gray or RGB) into a batch-1 tensor with
// values code/255. Bit depths other than 8 and channel counts other than
// 1/3 are rejected. Throws std::runtime_error naming the path.
Image load_image(const std::string& path);

// Writes a batch-1 tensor as an 8-bit PNG, quantizing with round-half-up.
void save_image(const Image& image, const std::string& path);

template <typename T>
Tensor<T> random_crop(const Tensor<T>& image, int size, Rng& rng) {
  check(image.h() >= size && image.w() >= size,
        "random_crop: image " + image.shape_str() + " smaller than crop " + std::to_string(size));
  // y offset drawn before x, always
  int oy = static_cast<int>(rng.uniform_int(image.h() - size + 1));
  int ox = static_cast<int>(rng.uniform_int(image.w() - size + 1));
  Tensor<T> out(image.n(), image.c(), size, size);
  for (int b = 0; b < image.n(); ++b)
    for (int c = 0; c < image.c(); ++c)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) out.at(b, c, y, x) = image.at(b, c, oy + y, ox + x);
  return out;
}

// unweighted RGB mean
template <typename T>
Tensor<T> to_grayscale(const Tensor<T>& image) {
  check(image.c() == 3, "to_grayscale: expected 3 channels, got " + std::to_string(image.c()));
  Tensor<T> out(image.n(), 1, image.h(), image.w());
  int hw = image.h() * image.w();
  for (int b = 0; b < image.n(); ++b) {
    T* dst = out.plane(b, 0);
    const T* r = image.plane(b, 0);
    const T* g = image.plane(b, 1);
    const T* bl = image.plane(b, 2);
    for (int i = 0; i < hw; ++i) dst[i] = (r[i] + g[i] + bl[i]) / T(3);
  }
  return out;
}

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& image) {
  Tensor<T> out(image.n(), image.c(), image.h(), image.w());
  for (int b = 0; b < image.n(); ++b)
    for (int c = 0; c < image.c(); ++c)
      for (int y = 0; y < image.h(); ++y)
        for (int x = 0; x < image.w(); ++x)
          out.at(b, c, y, x) = image.at(b, c, y, image.w() - 1 - x);
  return out;
}

// mean of the per-pixel RGB average (or the single channel for gray images)
double mean_gray_luminance(const Image& image);

}  // namespace cigan::img
