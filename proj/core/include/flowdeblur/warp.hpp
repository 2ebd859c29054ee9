#pragma once

#include <cstdint>
#include <vector>

#include "flowdeblur/tensor.hpp"

namespace flowdeblur {

// State retained by bilinear_warp for the backward pass.
template <typename T>
struct WarpCache {
  Tensor<T> image;          // the gathered-from image
  std::vector<T> sample_x;  // clamped sampling coordinates, one per (n, y, x)
  std::vector<T> sample_y;
  std::vector<std::uint8_t> clamped;  // bit 0: x clamped, bit 1: y clamped

  bool valid() const { return !image.empty(); }
};

template <typename T>
struct WarpResult {
  Tensor<T> warped;
  WarpCache<T> cache;
};

// Backward warp: warped(x,y) = bilinear(img, x + F_p(x,y), y + F_q(x,y)) with
// clamp-to-edge. A pixel in image 1 plus its flow lands on image 2; the result
// is image 2 resampled onto image 1's grid.
template <typename T>
WarpResult<T> bilinear_warp(const Tensor<T>& img, const FlowField<T>& flow);

template <typename T>
struct WarpGrads {
  Tensor<T> image;
  FlowField<T> flow;
};

// Exact gradients of the bilinear gather. The flow gradient is zero along an
// axis whose sample coordinate was clamped.
template <typename T>
WarpGrads<T> warp_backward(const Tensor<T>& grad_warped, const WarpCache<T>& cache);

template <typename T>
struct PhotometricLoss {
  double value = 0.0;
  FlowField<T> grad_flow;
};

// Sum over pixels and channels of (warp(b2, flow) - b1)^2 and its flow gradient.
template <typename T>
PhotometricLoss<T> photometric_loss(const Tensor<T>& b1, const Tensor<T>& b2,
                                    const FlowField<T>& flow);

}  // namespace flowdeblur
