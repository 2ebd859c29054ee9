#include "flowdeblur/blur.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flowdeblur/parallel.hpp"
#include "flowdeblur/resample.hpp"

namespace flowdeblur {

void BlurConfig::validate() const {
  if (!(duty_cycle > 0.0 && duty_cycle <= 1.0)) {
    throw ValueError("duty cycle must lie in (0, 1], got " + std::to_string(duty_cycle));
  }
  if (!(samples_per_pixel >= 2.0) || !std::isfinite(samples_per_pixel)) {
    throw ValueError("samples_per_pixel must be >= 2, got " + std::to_string(samples_per_pixel));
  }
}

double BlurKernel::weight_sum() const {
  double s = 0.0;
  for (const auto& t : taps) s += t.weight;
  return s;
}

BlurKernel line_kernel(double fp, double fq, const BlurConfig& cfg) {
  cfg.validate();
  if (!std::isfinite(fp) || !std::isfinite(fq)) {
    throw ValueError("line_kernel: non-finite flow");
  }
  const double ex = cfg.duty_cycle * fp;
  const double ey = cfg.duty_cycle * fq;
  const double length = std::hypot(ex, ey);
  const int points =
      std::max(2, static_cast<int>(std::ceil(cfg.samples_per_pixel * length)) + 1);
  const double w = 1.0 / points;

  std::vector<KernelTap> raw;
  raw.reserve(static_cast<std::size_t>(points) * 4);
  auto splat = [&raw](int dp, int dq, double weight) {
    if (weight > 0.0) raw.push_back({dp, dq, weight});
  };
  for (int j = 0; j < points; ++j) {
    const double t = static_cast<double>(j) / (points - 1);
    const double px = ex * t;
    const double py = ey * t;
    const double x0 = std::floor(px);
    const double y0 = std::floor(py);
    const double fx = px - x0;
    const double fy = py - y0;
    const int ix = static_cast<int>(x0);
    const int iy = static_cast<int>(y0);
    splat(ix, iy, w * (1.0 - fx) * (1.0 - fy));
    splat(ix + 1, iy, w * fx * (1.0 - fy));
    splat(ix, iy + 1, w * (1.0 - fx) * fy);
    splat(ix + 1, iy + 1, w * fx * fy);
  }
  std::stable_sort(raw.begin(), raw.end(), [](const KernelTap& a, const KernelTap& b) {
    return a.dq != b.dq ? a.dq < b.dq : a.dp < b.dp;
  });
  BlurKernel k;
  for (const auto& t : raw) {
    if (!k.taps.empty() && k.taps.back().dp == t.dp && k.taps.back().dq == t.dq) {
      k.taps.back().weight += t.weight;
    } else {
      k.taps.push_back(t);
    }
  }
  return k;
}

namespace {

template <typename T>
void check_blur_inputs(const Tensor<T>& sharp, const FlowField<T>& flow, const char* what) {
  require_flow(flow, what);
  require_same_spatial(sharp, flow, what);
  require_finite(sharp, what);
  require_finite(flow, what);
}

// Bilinear read with continuous coordinates clamped into the frame, evaluated
// in double regardless of the storage type.
template <typename T>
double trajectory_sample(const T* plane, int h, int w, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  const double v00 = plane[y0 * w + x0];
  const double v01 = plane[y0 * w + x1];
  const double v10 = plane[y1 * w + x0];
  const double v11 = plane[y1 * w + x1];
  return (1.0 - ay) * ((1.0 - ax) * v00 + ax * v01) + ay * ((1.0 - ax) * v10 + ax * v11);
}

}  // namespace

template <typename T>
Tensor<T> reblur(const Tensor<T>& sharp, const FlowField<T>& flow, const BlurConfig& cfg) {
  check_blur_inputs(sharp, flow, "reblur");
  cfg.validate();
  const int h = sharp.h();
  const int w = sharp.w();
  const int channels = sharp.c();
  Tensor<T> out(sharp.shape());
  parallel_for(static_cast<std::size_t>(sharp.n()) * h, [&](std::size_t begin, std::size_t end) {
    for (std::size_t row = begin; row < end; ++row) {
      const int n = static_cast<int>(row / h);
      const int y = static_cast<int>(row % h);
      for (int x = 0; x < w; ++x) {
        const BlurKernel k = line_kernel(flow.at(n, 0, y, x), flow.at(n, 1, y, x), cfg);
        for (int c = 0; c < channels; ++c) {
          const T* src = sharp.plane(n, c).data();
          double acc = 0.0;
          for (const auto& tap : k.taps) {
            const int sy = std::clamp(y - tap.dq, 0, h - 1);
            const int sx = std::clamp(x - tap.dp, 0, w - 1);
            acc += tap.weight * static_cast<double>(src[sy * w + sx]);
          }
          out.at(n, c, y, x) = static_cast<T>(acc);
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> reblur_oracle(const Tensor<T>& sharp, const FlowField<T>& flow, const BlurConfig& cfg,
                        int n_samples) {
  check_blur_inputs(sharp, flow, "reblur_oracle");
  cfg.validate();
  if (n_samples < 16) throw ValueError("reblur_oracle: n_samples must be >= 16");
  const int h = sharp.h();
  const int w = sharp.w();
  const double r = cfg.duty_cycle;
  Tensor<T> out(sharp.shape());
  parallel_for(static_cast<std::size_t>(sharp.n()) * h, [&](std::size_t begin, std::size_t end) {
    for (std::size_t row = begin; row < end; ++row) {
      const int n = static_cast<int>(row / h);
      const int y = static_cast<int>(row % h);
      for (int x = 0; x < w; ++x) {
        const double vx = r * flow.at(n, 0, y, x);
        const double vy = r * flow.at(n, 1, y, x);
        for (int c = 0; c < sharp.c(); ++c) {
          const T* src = sharp.plane(n, c).data();
          double acc = 0.0;
          for (int j = 0; j < n_samples; ++j) {
            const double t = (j + 0.5) / n_samples;
            acc += trajectory_sample(src, h, w, x - vx * t, y - vy * t);
          }
          out.at(n, c, y, x) = static_cast<T>(acc / n_samples);
        }
      }
    }
  });
  return out;
}

template Tensor<float> reblur(const Tensor<float>&, const FlowField<float>&, const BlurConfig&);
template Tensor<double> reblur(const Tensor<double>&, const FlowField<double>&, const BlurConfig&);
template Tensor<float> reblur_oracle(const Tensor<float>&, const FlowField<float>&,
                                     const BlurConfig&, int);
template Tensor<double> reblur_oracle(const Tensor<double>&, const FlowField<double>&,
                                      const BlurConfig&, int);

}  // namespace flowdeblur
