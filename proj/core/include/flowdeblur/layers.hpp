#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flowdeblur/rng.hpp"
#include "flowdeblur/tensor.hpp"

namespace flowdeblur {

inline constexpr double kLeakySlope = 0.1;

// Learnable weights of one conv/deconv layer plus its Adam state.
// weight is (out_c, in_c, k, k) for both convolution and transposed convolution.
template <typename T>
struct LayerParams {
  Tensor<T> weight;
  std::vector<T> bias;

  Tensor<T> m_weight;
  Tensor<T> v_weight;
  std::vector<T> m_bias;
  std::vector<T> v_bias;
  std::int64_t step = 0;

  int out_channels() const { return weight.n(); }
  int in_channels() const { return weight.c(); }
  int kernel() const { return weight.h(); }
  std::size_t count() const { return weight.size() + bias.size(); }
};

template <typename T>
struct ParamGrads {
  Tensor<T> weight;
  std::vector<T> bias;
};

template <typename T>
LayerParams<T> make_layer_params(int out_c, int in_c, int kernel);

// Cross-correlation with zero padding. Output extent floor((in + 2*pad - k)/stride) + 1.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const LayerParams<T>& p, int stride, int pad);

template <typename T>
struct ConvGrads {
  Tensor<T> x;  // empty when not requested
  ParamGrads<T> params;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& grad_y, const Tensor<T>& x, const LayerParams<T>& p,
                             int stride, int pad, bool need_grad_x = true);

// Transposed convolution: the adjoint of a strided convolution whose weight is
// `p.weight` with in/out channels swapped. Output extent (in-1)*stride - 2*pad + k.
template <typename T>
Tensor<T> deconv2d_forward(const Tensor<T>& x, const LayerParams<T>& p, int stride, int pad);

template <typename T>
ConvGrads<T> deconv2d_backward(const Tensor<T>& grad_y, const Tensor<T>& x,
                               const LayerParams<T>& p, int stride, int pad,
                               bool need_grad_x = true);

// Elementwise activations. The backward forms take the forward output.
template <typename T>
void leaky_relu_inplace(Tensor<T>& x);
template <typename T>
void leaky_relu_backward_inplace(Tensor<T>& grad, const Tensor<T>& y);
template <typename T>
void tanh_inplace(Tensor<T>& x);
template <typename T>
void tanh_backward_inplace(Tensor<T>& grad, const Tensor<T>& y);

template <typename T>
Tensor<T> leaky_relu(Tensor<T> x) {
  leaky_relu_inplace(x);
  return x;
}
template <typename T>
Tensor<T> tanh(Tensor<T> x) {
  tanh_inplace(x);
  return x;
}

// Stack along channels in argument order. All inputs share n, h, w.
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> parts);
template <typename T>
Tensor<T> concat_channels(std::initializer_list<const Tensor<T>*> parts) {
  return concat_channels<T>(std::span<const Tensor<T>* const>(parts.begin(), parts.size()));
}
// Inverse of concat_channels: splits along channels into the given widths.
template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& t, std::span<const int> widths);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-6;
};

// Bias-corrected Adam; weight decay enters as an L2 term added to the gradient.
template <typename T>
void adam_step(LayerParams<T>& params, const ParamGrads<T>& grads, const AdamConfig& cfg);

// Uniform in +-sqrt(6 / (fan_in + fan_out)), fan = channels * k * k. Biases
// are zeroed and Adam state reset.
template <typename T>
void xavier_init(LayerParams<T>& params, Rng& rng);

}  // namespace flowdeblur
