#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "flowdeblur/error.hpp"

namespace flowdeblur {

// NCHW extents.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense 4-D array stored row-major in NCHW order.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(validated(shape)), data_(shape.numel(), fill) {}
  Tensor(int n, int c, int h, int w, T fill = T(0)) : Tensor(Shape{n, c, h, w}, fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(validated(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
    }
  }

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  T at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  std::size_t plane() const { return shape_.plane(); }
  std::span<T> plane(int n, int c) {
    return {data_.data() + index(n, c, 0, 0), shape_.plane()};
  }
  std::span<const T> plane(int n, int c) const {
    return {data_.data() + index(n, c, 0, 0), shape_.plane()};
  }
  // All channels of one batch item.
  std::span<T> item(int n) { return {data_.data() + index(n, 0, 0, 0), shape_.plane() * shape_.c}; }
  std::span<const T> item(int n) const {
    return {data_.data() + index(n, 0, 0, 0), shape_.plane() * shape_.c};
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  static Shape validated(Shape s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
      throw ShapeError("negative tensor extent " + s.str());
    }
    return s;
  }

  Shape shape_;
  std::vector<T> data_;
};

// A flow field is a two-channel tensor: channel 0 horizontal, channel 1 vertical
// displacement in pixels per frame interval (frame interval T = 1).
template <typename T>
using FlowField = Tensor<T>;

// Throws ValueError naming `what` when any element is NaN or Inf.
template <typename T>
void require_finite(const Tensor<T>& t, const char* what) {
  if (!t.all_finite()) {
    throw ValueError(std::string(what) + " contains non-finite values");
  }
}

template <typename T>
void require_flow(const Tensor<T>& flow, const char* what) {
  if (flow.c() != 2) {
    throw ShapeError(std::string(what) + ": flow field must have 2 channels, got " +
                     flow.shape().str());
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

// Same batch and spatial extents; channels may differ.
template <typename T, typename U>
void require_same_spatial(const Tensor<T>& a, const Tensor<U>& b, const char* what) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw ShapeError(std::string(what) + ": spatial mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

inline std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

}  // namespace flowdeblur
