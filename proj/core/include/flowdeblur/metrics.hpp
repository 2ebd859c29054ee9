#pragma once

#include <cmath>
#include <limits>

#include "flowdeblur/tensor.hpp"

namespace flowdeblur {

// Peak signal-to-noise ratio for [0,1] images: 10*log10(1/MSE) over all
// pixels and channels. Identical inputs give +infinity.
double psnr(const Tensor<float>& a, const Tensor<float>& b);

inline bool is_infinite_psnr(double db) { return std::isinf(db) && db > 0; }

// Mean structural similarity on luma (0.299R + 0.587G + 0.114B for 3-channel
// inputs). 11x11 Gaussian window, sigma 1.5, K1 = 0.01, K2 = 0.03, L = 1,
// evaluated at every position where the window fits. Batch items are averaged.
double ssim(const Tensor<float>& a, const Tensor<float>& b);

struct SsimConstants {
  static constexpr int kWindow = 11;
  static constexpr double kSigma = 1.5;
  static constexpr double kK1 = 0.01;
  static constexpr double kK2 = 0.03;
};

}  // namespace flowdeblur
