#pragma once

#include "flowdeblur/tensor.hpp"

namespace flowdeblur {

// Scan directions, in the channel-block order used by gate maps and outputs.
enum class ScanDirection : int { kLeftToRight = 0, kRightToLeft = 1, kTopToBottom = 2, kBottomToTop = 3 };
inline constexpr int kScanDirections = 4;

// Gate maps for the four scans: 4*C channels, direction-major (block d holds
// the C per-channel gates for direction d). Values must lie in (-1, 1).
template <typename T>
using RnnWeightMaps = Tensor<T>;

template <typename T>
struct SvrnnCache {
  Tensor<T> g;  // forward outputs; the recurrence state for the backward pass
  bool valid() const { return !g.empty(); }
};

template <typename T>
struct SvrnnResult {
  Tensor<T> g;
  SvrnnCache<T> cache;
};

// Four one-directional linear recurrences
//   g[i] = (1 - w[i]) * f[i] + w[i] * g[i-1],  g[-1] = 0
// along rows (left/right) and columns (top/bottom). Output block d*C + c is the
// direction-d scan of input channel c with gate map d*C + c.
template <typename T>
SvrnnResult<T> svrnn_forward(const Tensor<T>& f, const RnnWeightMaps<T>& w);

template <typename T>
struct SvrnnGrads {
  Tensor<T> f;
  RnnWeightMaps<T> w;
};

// Adjoint scan in the opposite direction:
//   a[i] = grad_g[i] + w[i+1] * a[i+1]
//   grad_f[i] += (1 - w[i]) * a[i]   (summed over the four directions)
//   grad_w[i]  = a[i] * (g[i-1] - f[i])
template <typename T>
SvrnnGrads<T> svrnn_backward(const Tensor<T>& grad_g, const Tensor<T>& f,
                             const RnnWeightMaps<T>& w, const SvrnnCache<T>& cache);

}  // namespace flowdeblur
