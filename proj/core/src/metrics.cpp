#include "flowdeblur/metrics.hpp"

#include <array>
#include <vector>

namespace flowdeblur {

double psnr(const Tensor<float>& a, const Tensor<float>& b) {
  require_same_shape(a, b, "psnr");
  require_finite(a, "psnr");
  require_finite(b, "psnr");
  if (a.empty()) throw ShapeError("psnr: empty images");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.storage()[i]) - static_cast<double>(b.storage()[i]);
    sse += d * d;
  }
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sse / static_cast<double>(a.size());
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

std::vector<double> luma(const Tensor<float>& t, int n) {
  std::vector<double> y(t.plane());
  if (t.c() == 3) {
    const auto r = t.plane(n, 0);
    const auto g = t.plane(n, 1);
    const auto b = t.plane(n, 2);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  } else if (t.c() == 1) {
    const auto p = t.plane(n, 0);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = p[i];
  } else {
    throw ShapeError("ssim: expected 1 or 3 channels, got " + t.shape().str());
  }
  return y;
}

std::array<double, SsimConstants::kWindow> gaussian_taps() {
  std::array<double, SsimConstants::kWindow> g{};
  const int r = SsimConstants::kWindow / 2;
  double sum = 0.0;
  for (int i = 0; i < SsimConstants::kWindow; ++i) {
    const double d = i - r;
    g[i] = std::exp(-d * d / (2.0 * SsimConstants::kSigma * SsimConstants::kSigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Separable "valid" filtering: output is (h-10) x (w-10).
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::array<double, SsimConstants::kWindow>& g) {
  const int k = SsimConstants::kWindow;
  const int oh = h - k + 1;
  const int ow = w - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += g[i] * src[y * w + x + i];
      tmp[y * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += g[i] * tmp[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

double ssim(const Tensor<float>& a, const Tensor<float>& b) {
  require_same_shape(a, b, "ssim");
  require_finite(a, "ssim");
  require_finite(b, "ssim");
  const int k = SsimConstants::kWindow;
  if (a.h() < k || a.w() < k || a.n() < 1) {
    throw ShapeError("ssim: image " + a.shape().str() + " smaller than the 11x11 window");
  }
  const double c1 = (SsimConstants::kK1) * (SsimConstants::kK1);
  const double c2 = (SsimConstants::kK2) * (SsimConstants::kK2);
  const auto g = gaussian_taps();
  const int h = a.h();
  const int w = a.w();
  double total = 0.0;
  for (int n = 0; n < a.n(); ++n) {
    const std::vector<double> x = luma(a, n);
    const std::vector<double> y = luma(b, n);
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, h, w, g);
    const auto my = filter_valid(y, h, w, g);
    const auto sxx = filter_valid(xx, h, w, g);
    const auto syy = filter_valid(yy, h, w, g);
    const auto sxy = filter_valid(xy, h, w, g);
    double sum = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2);
      const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
      sum += num / den;
    }
    total += sum / static_cast<double>(mx.size());
  }
  return total / a.n();
}

}  // namespace flowdeblur
