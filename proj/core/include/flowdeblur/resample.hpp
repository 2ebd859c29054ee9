#pragma once

#include <algorithm>
#include <cmath>

#include "flowdeblur/tensor.hpp"

namespace flowdeblur {

// Bilinear read of one plane at continuous pixel coordinates (pixel centers on
// integers). Coordinates are clamped to [0, w-1] x [0, h-1] first.
template <typename T>
T bilinear_sample(const T* plane, int h, int w, T x, T y) {
  x = std::clamp(x, T(0), static_cast<T>(w - 1));
  y = std::clamp(y, T(0), static_cast<T>(h - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const T fx = x - static_cast<T>(x0);
  const T fy = y - static_cast<T>(y0);
  const T top = plane[y0 * w + x0] * (T(1) - fx) + plane[y0 * w + x1] * fx;
  const T bottom = plane[y1 * w + x0] * (T(1) - fx) + plane[y1 * w + x1] * fx;
  return top * (T(1) - fy) + bottom * fy;
}

// Mean of each 2x2 block. Requires even h and w.
template <typename T>
Tensor<T> avg_downsample2x(const Tensor<T>& t);

// Align-corners-false resize: output center i maps to (i+0.5)*in/out-0.5,
// clamped into the input.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& t, int new_h, int new_w);

// Reflection padding (edge pixel not repeated) on the bottom/right so both
// extents become multiples of `multiple`.
template <typename T>
Tensor<T> reflect_pad_to_multiple(const Tensor<T>& t, int multiple);

template <typename T>
Tensor<T> crop(const Tensor<T>& t, int y0, int x0, int h, int w);

}  // namespace flowdeblur
