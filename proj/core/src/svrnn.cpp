#include "flowdeblur/svrnn.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "flowdeblur/parallel.hpp"

namespace flowdeblur {
namespace {

template <typename T>
void check_shapes(const Tensor<T>& f, const Tensor<T>& w, const char* what) {
  if (w.c() != kScanDirections * f.c()) {
    throw ShapeError(std::string(what) + ": gate maps need " + std::to_string(4 * f.c()) +
                     " channels for " + std::to_string(f.c()) + " input channels, got " +
                     std::to_string(w.c()));
  }
  require_same_spatial(f, w, what);
}

// One direction over one plane. Horizontal scans run each row left-to-right
// (or reversed); vertical scans walk rows in order and update a whole row at a
// time, which keeps the inner loop contiguous.
template <typename T>
void scan_forward(ScanDirection dir, int h, int w, const T* f, const T* gate, T* g) {
  switch (dir) {
    case ScanDirection::kLeftToRight:
      for (int y = 0; y < h; ++y) {
        T prev = 0;
        for (int x = 0; x < w; ++x) {
          const int i = y * w + x;
          prev = (T(1) - gate[i]) * f[i] + gate[i] * prev;
          g[i] = prev;
        }
      }
      break;
    case ScanDirection::kRightToLeft:
      for (int y = 0; y < h; ++y) {
        T prev = 0;
        for (int x = w - 1; x >= 0; --x) {
          const int i = y * w + x;
          prev = (T(1) - gate[i]) * f[i] + gate[i] * prev;
          g[i] = prev;
        }
      }
      break;
    case ScanDirection::kTopToBottom:
      for (int x = 0; x < w; ++x) g[x] = (T(1) - gate[x]) * f[x];
      for (int y = 1; y < h; ++y) {
        const int row = y * w;
        for (int x = 0; x < w; ++x) {
          const int i = row + x;
          g[i] = (T(1) - gate[i]) * f[i] + gate[i] * g[i - w];
        }
      }
      break;
    case ScanDirection::kBottomToTop: {
      const int last = (h - 1) * w;
      for (int x = 0; x < w; ++x) g[last + x] = (T(1) - gate[last + x]) * f[last + x];
      for (int y = h - 2; y >= 0; --y) {
        const int row = y * w;
        for (int x = 0; x < w; ++x) {
          const int i = row + x;
          g[i] = (T(1) - gate[i]) * f[i] + gate[i] * g[i + w];
        }
      }
      break;
    }
  }
}

// Adjoint of scan_forward for one plane. `a` is scratch of plane size.
template <typename T>
void scan_backward(ScanDirection dir, int h, int w, const T* grad_g, const T* f, const T* gate,
                   const T* g, T* grad_f, T* grad_gate, std::vector<T>& a) {
  switch (dir) {
    case ScanDirection::kLeftToRight:
      for (int y = 0; y < h; ++y) {
        T next = 0;  // w[i+1] * a[i+1]
        for (int x = w - 1; x >= 0; --x) {
          const int i = y * w + x;
          const T ai = grad_g[i] + next;
          const T prev_g = x > 0 ? g[i - 1] : T(0);
          grad_f[i] += (T(1) - gate[i]) * ai;
          grad_gate[i] = ai * (prev_g - f[i]);
          next = gate[i] * ai;
        }
      }
      break;
    case ScanDirection::kRightToLeft:
      for (int y = 0; y < h; ++y) {
        T next = 0;
        for (int x = 0; x < w; ++x) {
          const int i = y * w + x;
          const T ai = grad_g[i] + next;
          const T prev_g = x < w - 1 ? g[i + 1] : T(0);
          grad_f[i] += (T(1) - gate[i]) * ai;
          grad_gate[i] = ai * (prev_g - f[i]);
          next = gate[i] * ai;
        }
      }
      break;
    case ScanDirection::kTopToBottom:
      for (int y = h - 1; y >= 0; --y) {
        const int row = y * w;
        for (int x = 0; x < w; ++x) {
          const int i = row + x;
          const T ai = grad_g[i] + (y < h - 1 ? gate[i + w] * a[i + w] : T(0));
          a[i] = ai;
          const T prev_g = y > 0 ? g[i - w] : T(0);
          grad_f[i] += (T(1) - gate[i]) * ai;
          grad_gate[i] = ai * (prev_g - f[i]);
        }
      }
      break;
    case ScanDirection::kBottomToTop:
      for (int y = 0; y < h; ++y) {
        const int row = y * w;
        for (int x = 0; x < w; ++x) {
          const int i = row + x;
          const T ai = grad_g[i] + (y > 0 ? gate[i - w] * a[i - w] : T(0));
          a[i] = ai;
          const T prev_g = y < h - 1 ? g[i + w] : T(0);
          grad_f[i] += (T(1) - gate[i]) * ai;
          grad_gate[i] = ai * (prev_g - f[i]);
        }
      }
      break;
  }
}

}  // namespace

template <typename T>
SvrnnResult<T> svrnn_forward(const Tensor<T>& f, const RnnWeightMaps<T>& w) {
  check_shapes(f, w, "svrnn_forward");
  const int channels = f.c();
  Tensor<T> g(w.shape());
  const std::size_t jobs = static_cast<std::size_t>(f.n()) * kScanDirections * channels;
  parallel_for(jobs, [&](std::size_t begin, std::size_t end) {
    for (std::size_t job = begin; job < end; ++job) {
      const int n = static_cast<int>(job / (kScanDirections * channels));
      const int block = static_cast<int>(job % (kScanDirections * channels));
      const auto dir = static_cast<ScanDirection>(block / channels);
      const int c = block % channels;
      scan_forward(dir, f.h(), f.w(), f.plane(n, c).data(), w.plane(n, block).data(),
                   g.plane(n, block).data());
    }
  });
  SvrnnResult<T> r;
  r.cache.g = g;
  r.g = std::move(g);
  return r;
}

template <typename T>
SvrnnGrads<T> svrnn_backward(const Tensor<T>& grad_g, const Tensor<T>& f,
                             const RnnWeightMaps<T>& w, const SvrnnCache<T>& cache) {
  check_shapes(f, w, "svrnn_backward");
  if (!cache.valid() || cache.g.shape() != w.shape() || grad_g.shape() != w.shape()) {
    throw Error("svrnn_backward: stale cache or gradient shape " + grad_g.shape().str() +
                " does not match forward output");
  }
  const int channels = f.c();
  SvrnnGrads<T> out{Tensor<T>(f.shape()), Tensor<T>(w.shape())};
  // Each job owns one (n, c) input plane and runs all four directions into it,
  // so grad_f accumulates in a fixed order.
  const std::size_t jobs = static_cast<std::size_t>(f.n()) * channels;
  parallel_for(jobs, [&](std::size_t begin, std::size_t end) {
    std::vector<T> scratch(f.plane());
    for (std::size_t job = begin; job < end; ++job) {
      const int n = static_cast<int>(job / channels);
      const int c = static_cast<int>(job % channels);
      for (int d = 0; d < kScanDirections; ++d) {
        const int block = d * channels + c;
        scan_backward(static_cast<ScanDirection>(d), f.h(), f.w(), grad_g.plane(n, block).data(),
                      f.plane(n, c).data(), w.plane(n, block).data(),
                      cache.g.plane(n, block).data(), out.f.plane(n, c).data(),
                      out.w.plane(n, block).data(), scratch);
      }
    }
  });
  return out;
}

template SvrnnResult<float> svrnn_forward(const Tensor<float>&, const RnnWeightMaps<float>&);
template SvrnnResult<double> svrnn_forward(const Tensor<double>&, const RnnWeightMaps<double>&);
template SvrnnGrads<float> svrnn_backward(const Tensor<float>&, const Tensor<float>&,
                                          const RnnWeightMaps<float>&, const SvrnnCache<float>&);
template SvrnnGrads<double> svrnn_backward(const Tensor<double>&, const Tensor<double>&,
                                           const RnnWeightMaps<double>&,
                                           const SvrnnCache<double>&);

}  // namespace flowdeblur
