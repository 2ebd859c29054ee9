#include "flowdeblur/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace flowdeblur {
namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

struct Geometry {
  int n, channels, in_h, in_w, k, stride, pad, out_h, out_w;

  std::size_t rows() const { return static_cast<std::size_t>(channels) * k * k; }
  std::size_t cols() const { return static_cast<std::size_t>(n) * out_h * out_w; }
};

Geometry conv_geometry(const Shape& in, int k, int stride, int pad) {
  Geometry g{in.n, in.c, in.h, in.w, k, stride, pad, 0, 0};
  g.out_h = (in.h + 2 * pad - k) / stride + 1;
  g.out_w = (in.w + 2 * pad - k) / stride + 1;
  if (in.h + 2 * pad < k || in.w + 2 * pad < k || g.out_h < 1 || g.out_w < 1) {
    throw ShapeError("convolution: input " + in.str() + " too small for kernel " +
                     std::to_string(k));
  }
  return g;
}

// col[(c, ky, kx), (n, oy, ox)] = x[n, c, oy*s - p + ky, ox*s - p + kx], zero outside.
template <typename T>
void im2col(const T* x, const Geometry& g, T* col) {
  const std::size_t ncols = g.cols();
  const int out_plane = g.out_h * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        T* row = col + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * ncols;
        for (int n = 0; n < g.n; ++n) {
          const T* src = x + (static_cast<std::size_t>(n) * g.channels + c) * g.in_h * g.in_w;
          T* dst = row + static_cast<std::size_t>(n) * out_plane;
          for (int oy = 0; oy < g.out_h; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            T* d = dst + oy * g.out_w;
            if (iy < 0 || iy >= g.in_h) {
              std::fill(d, d + g.out_w, T(0));
              continue;
            }
            const T* s = src + iy * g.in_w;
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              d[ox] = (ix >= 0 && ix < g.in_w) ? s[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates col entries back into x (which is not cleared).
template <typename T>
void col2im(const T* col, const Geometry& g, T* x) {
  const std::size_t ncols = g.cols();
  const int out_plane = g.out_h * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * ncols;
        for (int n = 0; n < g.n; ++n) {
          T* dst = x + (static_cast<std::size_t>(n) * g.channels + c) * g.in_h * g.in_w;
          const T* src = row + static_cast<std::size_t>(n) * out_plane;
          for (int oy = 0; oy < g.out_h; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.in_h) continue;
            T* d = dst + iy * g.in_w;
            const T* s = src + oy * g.out_w;
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < g.in_w) d[ix] += s[ox];
            }
          }
        }
      }
    }
  }
}

// NCHW tensor <-> (C, N*H*W) matrix.
template <typename T>
MatRM<T> to_channel_major(const Tensor<T>& t) {
  MatRM<T> m(t.c(), static_cast<Eigen::Index>(t.n()) * t.h() * t.w());
  const std::size_t plane = t.plane();
  for (int n = 0; n < t.n(); ++n) {
    for (int c = 0; c < t.c(); ++c) {
      const auto src = t.plane(n, c);
      std::copy(src.begin(), src.end(), m.data() + c * m.cols() + n * plane);
    }
  }
  return m;
}

template <typename T>
Tensor<T> from_channel_major(const MatRM<T>& m, int n, int h, int w) {
  Tensor<T> t(n, static_cast<int>(m.rows()), h, w);
  const std::size_t plane = t.plane();
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < t.c(); ++c) {
      const T* src = m.data() + c * m.cols() + b * plane;
      std::copy(src, src + plane, t.plane(b, c).data());
    }
  }
  return t;
}

template <typename T>
void check_conv_input(const Tensor<T>& x, const LayerParams<T>& p, int in_channels, const char* what) {
  if (x.c() != in_channels) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(in_channels) +
                     " input channels, got " + std::to_string(x.c()));
  }
  if (p.weight.h() != p.weight.w()) throw ShapeError(std::string(what) + ": kernel not square");
  if (static_cast<int>(p.bias.size()) != p.weight.n()) {
    throw ShapeError(std::string(what) + ": bias length mismatch");
  }
}

// Deconv weights rearranged to ((out, ky, kx), in).
template <typename T>
MatRM<T> deconv_matrix(const LayerParams<T>& p) {
  const int out_c = p.weight.n();
  const int in_c = p.weight.c();
  const int kk = p.weight.h() * p.weight.w();
  MatRM<T> a(static_cast<Eigen::Index>(out_c) * kk, in_c);
  for (int o = 0; o < out_c; ++o) {
    for (int i = 0; i < in_c; ++i) {
      const T* src = &p.weight.storage()[p.weight.index(o, i, 0, 0)];
      for (int k = 0; k < kk; ++k) a(o * kk + k, i) = src[k];
    }
  }
  return a;
}

}  // namespace

template <typename T>
LayerParams<T> make_layer_params(int out_c, int in_c, int kernel) {
  LayerParams<T> p;
  p.weight = Tensor<T>(out_c, in_c, kernel, kernel);
  p.bias.assign(out_c, T(0));
  p.m_weight = Tensor<T>(p.weight.shape());
  p.v_weight = Tensor<T>(p.weight.shape());
  p.m_bias.assign(out_c, T(0));
  p.v_bias.assign(out_c, T(0));
  return p;
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const LayerParams<T>& p, int stride, int pad) {
  check_conv_input(x, p, p.in_channels(), "conv2d_forward");
  const Geometry g = conv_geometry(x.shape(), p.kernel(), stride, pad);
  MatRM<T> col(g.rows(), g.cols());
  im2col(x.data(), g, col.data());
  CMapRM<T> wmat(p.weight.data(), p.out_channels(), static_cast<Eigen::Index>(g.rows()));
  MatRM<T> y(p.out_channels(), g.cols());
  y.noalias() = wmat * col;
  for (int o = 0; o < p.out_channels(); ++o) y.row(o).array() += p.bias[o];
  return from_channel_major(y, g.n, g.out_h, g.out_w);
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& grad_y, const Tensor<T>& x, const LayerParams<T>& p,
                             int stride, int pad, bool need_grad_x) {
  check_conv_input(x, p, p.in_channels(), "conv2d_backward");
  const Geometry g = conv_geometry(x.shape(), p.kernel(), stride, pad);
  if (grad_y.shape() != Shape{g.n, p.out_channels(), g.out_h, g.out_w}) {
    throw ShapeError("conv2d_backward: gradient shape " + grad_y.shape().str() + " mismatch");
  }
  MatRM<T> col(g.rows(), g.cols());
  im2col(x.data(), g, col.data());
  const MatRM<T> gy = to_channel_major(grad_y);

  ConvGrads<T> out;
  out.params.weight = Tensor<T>(p.weight.shape());
  MapRM<T> gw(out.params.weight.data(), p.out_channels(), static_cast<Eigen::Index>(g.rows()));
  gw.noalias() = gy * col.transpose();
  out.params.bias.resize(p.out_channels());
  for (int o = 0; o < p.out_channels(); ++o) out.params.bias[o] = gy.row(o).sum();

  if (need_grad_x) {
    CMapRM<T> wmat(p.weight.data(), p.out_channels(), static_cast<Eigen::Index>(g.rows()));
    col.noalias() = wmat.transpose() * gy;
    out.x = Tensor<T>(x.shape());
    col2im(col.data(), g, out.x.data());
  }
  return out;
}

template <typename T>
Tensor<T> deconv2d_forward(const Tensor<T>& x, const LayerParams<T>& p, int stride, int pad) {
  check_conv_input(x, p, p.in_channels(), "deconv2d_forward");
  const int k = p.kernel();
  const int out_h = (x.h() - 1) * stride - 2 * pad + k;
  const int out_w = (x.w() - 1) * stride - 2 * pad + k;
  if (out_h < 1 || out_w < 1) throw ShapeError("deconv2d_forward: empty output");
  // Geometry of the adjoint convolution, which maps the output back onto x's grid.
  const Geometry g = conv_geometry(Shape{x.n(), p.out_channels(), out_h, out_w}, k, stride, pad);
  if (g.out_h != x.h() || g.out_w != x.w()) {
    throw ShapeError("deconv2d_forward: inconsistent stride/padding for " + x.shape().str());
  }
  const MatRM<T> a = deconv_matrix(p);
  const MatRM<T> xm = to_channel_major(x);
  MatRM<T> col(g.rows(), g.cols());
  col.noalias() = a * xm;
  Tensor<T> y(x.n(), p.out_channels(), out_h, out_w);
  col2im(col.data(), g, y.data());
  for (int n = 0; n < y.n(); ++n) {
    for (int o = 0; o < y.c(); ++o) {
      for (T& v : y.plane(n, o)) v += p.bias[o];
    }
  }
  return y;
}

template <typename T>
ConvGrads<T> deconv2d_backward(const Tensor<T>& grad_y, const Tensor<T>& x,
                               const LayerParams<T>& p, int stride, int pad, bool need_grad_x) {
  check_conv_input(x, p, p.in_channels(), "deconv2d_backward");
  const int k = p.kernel();
  const int out_h = (x.h() - 1) * stride - 2 * pad + k;
  const int out_w = (x.w() - 1) * stride - 2 * pad + k;
  if (grad_y.shape() != Shape{x.n(), p.out_channels(), out_h, out_w}) {
    throw ShapeError("deconv2d_backward: gradient shape " + grad_y.shape().str() + " mismatch");
  }
  const Geometry g = conv_geometry(grad_y.shape(), k, stride, pad);
  MatRM<T> gcol(g.rows(), g.cols());
  im2col(grad_y.data(), g, gcol.data());
  const MatRM<T> xm = to_channel_major(x);

  ConvGrads<T> out;
  const MatRM<T> ga = gcol * xm.transpose();  // ((out, ky, kx), in)
  out.params.weight = Tensor<T>(p.weight.shape());
  const int kk = k * k;
  for (int o = 0; o < p.out_channels(); ++o) {
    for (int i = 0; i < p.in_channels(); ++i) {
      T* dst = &out.params.weight.storage()[out.params.weight.index(o, i, 0, 0)];
      for (int t = 0; t < kk; ++t) dst[t] = ga(o * kk + t, i);
    }
  }
  out.params.bias.assign(p.out_channels(), T(0));
  for (int n = 0; n < grad_y.n(); ++n) {
    for (int o = 0; o < grad_y.c(); ++o) {
      T s = 0;
      for (T v : grad_y.plane(n, o)) s += v;
      out.params.bias[o] += s;
    }
  }
  if (need_grad_x) {
    const MatRM<T> a = deconv_matrix(p);
    const MatRM<T> gx = a.transpose() * gcol;
    out.x = from_channel_major(gx, x.n(), x.h(), x.w());
  }
  return out;
}

template <typename T>
void leaky_relu_inplace(Tensor<T>& x) {
  const T slope = static_cast<T>(kLeakySlope);
  for (T& v : x.storage()) v = v > T(0) ? v : v * slope;
}

template <typename T>
void leaky_relu_backward_inplace(Tensor<T>& grad, const Tensor<T>& y) {
  require_same_shape(grad, y, "leaky_relu_backward");
  const T slope = static_cast<T>(kLeakySlope);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(y.storage()[i] > T(0))) grad.storage()[i] *= slope;
  }
}

template <typename T>
void tanh_inplace(Tensor<T>& x) {
  for (T& v : x.storage()) v = std::tanh(v);
}

template <typename T>
void tanh_backward_inplace(Tensor<T>& grad, const Tensor<T>& y) {
  require_same_shape(grad, y, "tanh_backward");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const T v = y.storage()[i];
    grad.storage()[i] *= T(1) - v * v;
  }
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Tensor<T>& first = *parts.front();
  int channels = 0;
  for (const Tensor<T>* t : parts) {
    require_same_spatial(first, *t, "concat_channels");
    channels += t->c();
  }
  Tensor<T> out(first.n(), channels, first.h(), first.w());
  const std::size_t plane = first.plane();
  for (int n = 0; n < first.n(); ++n) {
    T* dst = out.item(n).data();
    for (const Tensor<T>* t : parts) {
      const auto src = t->item(n);
      std::copy(src.begin(), src.end(), dst);
      dst += plane * t->c();
    }
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& t, std::span<const int> widths) {
  int total = 0;
  for (int w : widths) total += w;
  if (total != t.c()) {
    throw ShapeError("split_channels: widths sum to " + std::to_string(total) + ", tensor has " +
                     std::to_string(t.c()) + " channels");
  }
  std::vector<Tensor<T>> out;
  out.reserve(widths.size());
  for (int w : widths) out.emplace_back(t.n(), w, t.h(), t.w());
  const std::size_t plane = t.plane();
  for (int n = 0; n < t.n(); ++n) {
    const T* src = t.item(n).data();
    for (auto& part : out) {
      const std::size_t len = plane * part.c();
      std::copy(src, src + len, part.item(n).data());
      src += len;
    }
  }
  return out;
}

template <typename T>
void adam_step(LayerParams<T>& params, const ParamGrads<T>& grads, const AdamConfig& cfg) {
  if (grads.weight.shape() != params.weight.shape() || grads.bias.size() != params.bias.size()) {
    throw ShapeError("adam_step: gradient shape mismatch");
  }
  if (params.m_weight.shape() != params.weight.shape()) {
    params.m_weight = Tensor<T>(params.weight.shape());
    params.v_weight = Tensor<T>(params.weight.shape());
    params.m_bias.assign(params.bias.size(), T(0));
    params.v_bias.assign(params.bias.size(), T(0));
  }
  params.step += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(params.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(params.step));
  auto update = [&](T* theta, const T* g, T* m, T* v, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      const double gi = static_cast<double>(g[i]) + cfg.weight_decay * static_cast<double>(theta[i]);
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      theta[i] = static_cast<T>(theta[i] - cfg.lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps));
    }
  };
  update(params.weight.data(), grads.weight.data(), params.m_weight.data(), params.v_weight.data(),
         params.weight.size());
  update(params.bias.data(), grads.bias.data(), params.m_bias.data(), params.v_bias.data(),
         params.bias.size());
}

template <typename T>
void xavier_init(LayerParams<T>& params, Rng& rng) {
  const double kk = static_cast<double>(params.weight.h()) * params.weight.w();
  const double fan_in = params.in_channels() * kk;
  const double fan_out = params.out_channels() * kk;
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (T& v : params.weight.storage()) v = static_cast<T>(rng.uniform(-bound, bound));
  std::fill(params.bias.begin(), params.bias.end(), T(0));
  params.m_weight = Tensor<T>(params.weight.shape());
  params.v_weight = Tensor<T>(params.weight.shape());
  params.m_bias.assign(params.bias.size(), T(0));
  params.v_bias.assign(params.bias.size(), T(0));
  params.step = 0;
}

#define FLOWDEBLUR_INSTANTIATE(T)                                                              \
  template LayerParams<T> make_layer_params<T>(int, int, int);                                  \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const LayerParams<T>&, int, int);         \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&,                     \
                                        const LayerParams<T>&, int, int, bool);                 \
  template Tensor<T> deconv2d_forward(const Tensor<T>&, const LayerParams<T>&, int, int);       \
  template ConvGrads<T> deconv2d_backward(const Tensor<T>&, const Tensor<T>&,                   \
                                          const LayerParams<T>&, int, int, bool);               \
  template void leaky_relu_inplace(Tensor<T>&);                                                 \
  template void leaky_relu_backward_inplace(Tensor<T>&, const Tensor<T>&);                      \
  template void tanh_inplace(Tensor<T>&);                                                       \
  template void tanh_backward_inplace(Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> concat_channels(std::span<const Tensor<T>* const>);                        \
  template std::vector<Tensor<T>> split_channels(const Tensor<T>&, std::span<const int>);       \
  template void adam_step(LayerParams<T>&, const ParamGrads<T>&, const AdamConfig&);            \
  template void xavier_init(LayerParams<T>&, Rng&);

FLOWDEBLUR_INSTANTIATE(float)
FLOWDEBLUR_INSTANTIATE(double)
#undef FLOWDEBLUR_INSTANTIATE

}  // namespace flowdeblur
