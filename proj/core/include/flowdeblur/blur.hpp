#pragma once

#include <vector>

#include "flowdeblur/tensor.hpp"

namespace flowdeblur {

struct BlurConfig {
  // Fraction of the frame interval the shutter is open, in (0, 1]. With the
  // frame interval fixed to 1 this is also the exposure time.
  double duty_cycle = 1.0;
  // Rasterization density along the blur segment, samples per pixel of length.
  double samples_per_pixel = 4.0;

  void validate() const;
};

struct KernelTap {
  int dp = 0;  // horizontal offset
  int dq = 0;  // vertical offset
  double weight = 0.0;
};

// Per-pixel motion blur kernel: nonnegative taps summing to one.
struct BlurKernel {
  std::vector<KernelTap> taps;

  double weight_sum() const;
};

// Discretized uniform line measure on the segment (0,0) -> r*(fp, fq).
// M = max(2, ceil(samples_per_pixel * r*|F|) + 1) evenly spaced points on
// t in [0,1], each bilinearly splatted with weight 1/M; coincident taps merged.
// Taps are ordered by (dq, dp).
BlurKernel line_kernel(double fp, double fq, const BlurConfig& cfg);

// Spatially variant convolution: out(x,y) = sum k(x,y;dp,dq) * sharp(x-dp, y-dq)
// with clamp-to-edge reads. flow must be (n, 2, h, w) matching sharp.
template <typename T>
Tensor<T> reblur(const Tensor<T>& sharp, const FlowField<T>& flow, const BlurConfig& cfg);

// Trajectory integration: average of bilinear samples of `sharp` at
// (x,y) - r*F*t_j, t_j = (j+0.5)/n_samples. Shares no code with reblur's
// kernel path.
template <typename T>
Tensor<T> reblur_oracle(const Tensor<T>& sharp, const FlowField<T>& flow, const BlurConfig& cfg,
                        int n_samples = 256);

}  // namespace flowdeblur
