#include "flowdeblur/warp.hpp"

#include <algorithm>
#include <cmath>

#include "flowdeblur/parallel.hpp"

namespace flowdeblur {

template <typename T>
WarpResult<T> bilinear_warp(const Tensor<T>& img, const FlowField<T>& flow) {
  require_flow(flow, "bilinear_warp");
  require_same_spatial(img, flow, "bilinear_warp");
  require_finite(flow, "bilinear_warp flow");
  const int h = img.h();
  const int w = img.w();
  const std::size_t pixels = static_cast<std::size_t>(img.n()) * h * w;

  WarpResult<T> r;
  r.warped = Tensor<T>(img.shape());
  r.cache.image = img;
  r.cache.sample_x.resize(pixels);
  r.cache.sample_y.resize(pixels);
  r.cache.clamped.resize(pixels);

  parallel_for(static_cast<std::size_t>(img.n()) * h, [&](std::size_t begin, std::size_t end) {
    for (std::size_t row = begin; row < end; ++row) {
      const int n = static_cast<int>(row / h);
      const int y = static_cast<int>(row % h);
      for (int x = 0; x < w; ++x) {
        const std::size_t p = row * w + x;
        const T raw_x = static_cast<T>(x) + flow.at(n, 0, y, x);
        const T raw_y = static_cast<T>(y) + flow.at(n, 1, y, x);
        const T sx = std::clamp(raw_x, T(0), static_cast<T>(w - 1));
        const T sy = std::clamp(raw_y, T(0), static_cast<T>(h - 1));
        r.cache.sample_x[p] = sx;
        r.cache.sample_y[p] = sy;
        r.cache.clamped[p] = static_cast<std::uint8_t>((sx != raw_x ? 1 : 0) | (sy != raw_y ? 2 : 0));
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const int x1 = std::min(x0 + 1, w - 1);
        const int y1 = std::min(y0 + 1, h - 1);
        const T ax = sx - static_cast<T>(x0);
        const T ay = sy - static_cast<T>(y0);
        for (int c = 0; c < img.c(); ++c) {
          const T* src = img.plane(n, c).data();
          const T top = src[y0 * w + x0] * (T(1) - ax) + src[y0 * w + x1] * ax;
          const T bottom = src[y1 * w + x0] * (T(1) - ax) + src[y1 * w + x1] * ax;
          r.warped.at(n, c, y, x) = top * (T(1) - ay) + bottom * ay;
        }
      }
    }
  });
  return r;
}

template <typename T>
WarpGrads<T> warp_backward(const Tensor<T>& grad_warped, const WarpCache<T>& cache) {
  if (!cache.valid()) throw Error("warp_backward: empty cache");
  const Tensor<T>& img = cache.image;
  if (grad_warped.shape() != img.shape() ||
      cache.sample_x.size() != static_cast<std::size_t>(img.n()) * img.h() * img.w()) {
    throw Error("warp_backward: stale cache, gradient shape " + grad_warped.shape().str() +
                " does not match forward shape " + img.shape().str());
  }
  const int h = img.h();
  const int w = img.w();
  WarpGrads<T> g{Tensor<T>(img.shape()), FlowField<T>(img.n(), 2, h, w)};

  // Scatter into grad.image is serial per batch item; flow gradients are per pixel.
  parallel_for(static_cast<std::size_t>(img.n()), [&](std::size_t begin, std::size_t end) {
    for (std::size_t ni = begin; ni < end; ++ni) {
      const int n = static_cast<int>(ni);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t p = (static_cast<std::size_t>(n) * h + y) * w + x;
          const T sx = cache.sample_x[p];
          const T sy = cache.sample_y[p];
          const int x0 = static_cast<int>(std::floor(sx));
          const int y0 = static_cast<int>(std::floor(sy));
          const int x1 = std::min(x0 + 1, w - 1);
          const int y1 = std::min(y0 + 1, h - 1);
          const T ax = sx - static_cast<T>(x0);
          const T ay = sy - static_cast<T>(y0);
          T dsx = 0;
          T dsy = 0;
          for (int c = 0; c < img.c(); ++c) {
            const T go = grad_warped.at(n, c, y, x);
            if (go == T(0)) continue;
            const T* src = img.plane(n, c).data();
            T* gi = g.image.plane(n, c).data();
            gi[y0 * w + x0] += go * (T(1) - ax) * (T(1) - ay);
            gi[y0 * w + x1] += go * ax * (T(1) - ay);
            gi[y1 * w + x0] += go * (T(1) - ax) * ay;
            gi[y1 * w + x1] += go * ax * ay;
            const T v00 = src[y0 * w + x0];
            const T v01 = src[y0 * w + x1];
            const T v10 = src[y1 * w + x0];
            const T v11 = src[y1 * w + x1];
            dsx += go * ((T(1) - ay) * (v01 - v00) + ay * (v11 - v10));
            dsy += go * ((T(1) - ax) * (v10 - v00) + ax * (v11 - v01));
          }
          const std::uint8_t clamp = cache.clamped[p];
          g.flow.at(n, 0, y, x) = (clamp & 1) ? T(0) : dsx;
          g.flow.at(n, 1, y, x) = (clamp & 2) ? T(0) : dsy;
        }
      }
    }
  });
  return g;
}

template <typename T>
PhotometricLoss<T> photometric_loss(const Tensor<T>& b1, const Tensor<T>& b2,
                                    const FlowField<T>& flow) {
  require_same_shape(b1, b2, "photometric_loss");
  WarpResult<T> fw = bilinear_warp(b2, flow);
  Tensor<T> grad(b1.shape());
  double loss = 0.0;
  for (std::size_t i = 0; i < b1.size(); ++i) {
    const T d = fw.warped.storage()[i] - b1.storage()[i];
    loss += static_cast<double>(d) * static_cast<double>(d);
    grad.storage()[i] = T(2) * d;
  }
  PhotometricLoss<T> out;
  out.value = loss;
  out.grad_flow = warp_backward(grad, fw.cache).flow;
  return out;
}

#define FLOWDEBLUR_INSTANTIATE(T)                                                          \
  template WarpResult<T> bilinear_warp(const Tensor<T>&, const FlowField<T>&);              \
  template WarpGrads<T> warp_backward(const Tensor<T>&, const WarpCache<T>&);               \
  template PhotometricLoss<T> photometric_loss(const Tensor<T>&, const Tensor<T>&,          \
                                               const FlowField<T>&);

FLOWDEBLUR_INSTANTIATE(float)
FLOWDEBLUR_INSTANTIATE(double)
#undef FLOWDEBLUR_INSTANTIATE

}  // namespace flowdeblur
