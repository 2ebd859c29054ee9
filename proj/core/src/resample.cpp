#include "flowdeblur/resample.hpp"

#include <string>

namespace flowdeblur {

template <typename T>
Tensor<T> avg_downsample2x(const Tensor<T>& t) {
  require_finite(t, "avg_downsample2x");
  if (t.h() % 2 != 0 || t.w() % 2 != 0) {
    throw ShapeError("avg_downsample2x: odd extent " + t.shape().str());
  }
  Tensor<T> out(t.n(), t.c(), t.h() / 2, t.w() / 2);
  for (int n = 0; n < t.n(); ++n) {
    for (int c = 0; c < t.c(); ++c) {
      const T* src = t.plane(n, c).data();
      T* dst = out.plane(n, c).data();
      const int w = t.w();
      for (int y = 0; y < out.h(); ++y) {
        for (int x = 0; x < out.w(); ++x) {
          const T* p = src + 2 * y * w + 2 * x;
          dst[y * out.w() + x] = (p[0] + p[1] + p[w] + p[w + 1]) * T(0.25);
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& t, int new_h, int new_w) {
  require_finite(t, "bilinear_resize");
  if (new_h < 1 || new_w < 1) {
    throw ShapeError("bilinear_resize: target extent must be >= 1");
  }
  if (t.h() < 1 || t.w() < 1) throw ShapeError("bilinear_resize: empty input");
  if (new_h == t.h() && new_w == t.w()) return t;
  Tensor<T> out(t.n(), t.c(), new_h, new_w);
  const double sy = static_cast<double>(t.h()) / new_h;
  const double sx = static_cast<double>(t.w()) / new_w;
  for (int n = 0; n < t.n(); ++n) {
    for (int c = 0; c < t.c(); ++c) {
      const T* src = t.plane(n, c).data();
      T* dst = out.plane(n, c).data();
      for (int y = 0; y < new_h; ++y) {
        const T fy = static_cast<T>((y + 0.5) * sy - 0.5);
        for (int x = 0; x < new_w; ++x) {
          const T fx = static_cast<T>((x + 0.5) * sx - 0.5);
          dst[y * new_w + x] = bilinear_sample(src, t.h(), t.w(), fx, fy);
        }
      }
    }
  }
  return out;
}

namespace {
int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}
}  // namespace

template <typename T>
Tensor<T> reflect_pad_to_multiple(const Tensor<T>& t, int multiple) {
  if (multiple < 1) throw ValueError("reflect_pad_to_multiple: multiple must be >= 1");
  const int h = (t.h() + multiple - 1) / multiple * multiple;
  const int w = (t.w() + multiple - 1) / multiple * multiple;
  if (h == t.h() && w == t.w()) return t;
  Tensor<T> out(t.n(), t.c(), h, w);
  for (int n = 0; n < t.n(); ++n) {
    for (int c = 0; c < t.c(); ++c) {
      for (int y = 0; y < h; ++y) {
        const int sy = reflect(y, t.h());
        for (int x = 0; x < w; ++x) out.at(n, c, y, x) = t.at(n, c, sy, reflect(x, t.w()));
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& t, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || h < 0 || w < 0 || y0 + h > t.h() || x0 + w > t.w()) {
    throw ShapeError("crop: window (" + std::to_string(y0) + "," + std::to_string(x0) + "," +
                     std::to_string(h) + "," + std::to_string(w) + ") outside " +
                     t.shape().str());
  }
  Tensor<T> out(t.n(), t.c(), h, w);
  if (out.empty()) return out;
  for (int n = 0; n < t.n(); ++n) {
    for (int c = 0; c < t.c(); ++c) {
      for (int y = 0; y < h; ++y) {
        const T* src = &t.storage()[t.index(n, c, y0 + y, x0)];
        std::copy(src, src + w, &out.at(n, c, y, 0));
      }
    }
  }
  return out;
}

#define FLOWDEBLUR_INSTANTIATE(T)                                               \
  template Tensor<T> avg_downsample2x(const Tensor<T>&);                        \
  template Tensor<T> bilinear_resize(const Tensor<T>&, int, int);               \
  template Tensor<T> reflect_pad_to_multiple(const Tensor<T>&, int);            \
  template Tensor<T> crop(const Tensor<T>&, int, int, int, int);

FLOWDEBLUR_INSTANTIATE(float)
FLOWDEBLUR_INSTANTIATE(double)
#undef FLOWDEBLUR_INSTANTIATE

}  // namespace flowdeblur
