#pragma once

#include <filesystem>
#include <string>
#include <unistd.h>
#include <algorithm>
#include <cmath>

#include "flowdeblur/rng.hpp"
#include "flowdeblur/tensor.hpp"

namespace fdtest {

template <typename T>
flowdeblur::Tensor<T> random_tensor(int n, int c, int h, int w, std::uint64_t seed, double lo = 0.0,
                                    double hi = 1.0) {
  flowdeblur::Rng rng(seed);
  flowdeblur::Tensor<T> t(n, c, h, w);
  for (T& v : t.storage()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Values on the 8-bit grid, so they survive a PPM round trip.
inline flowdeblur::Tensor<float> random_image(int h, int w, std::uint64_t seed, int channels = 3) {
  flowdeblur::Rng rng(seed);
  flowdeblur::Tensor<float> t(1, channels, h, w);
  for (float& v : t.storage()) v = static_cast<float>(rng.below(256)) / 255.0f;
  return t;
}

// Band-limited RGB image in [0,1]: a few long-wavelength sinusoids per channel.
template <typename T>
flowdeblur::Tensor<T> smooth_image(int h, int w, std::uint64_t seed) {
  flowdeblur::Rng rng(seed);
  flowdeblur::Tensor<T> t(1, 3, h, w);
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < 4; ++k) {
      const double fx = rng.uniform(-1, 1) * 2 * M_PI / 24, fy = rng.uniform(-1, 1) * 2 * M_PI / 24;
      const double phase = rng.uniform(0, 2 * M_PI);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) t.at(0, c, y, x) += static_cast<T>(0.5 + 0.125 * std::sin(fx * x + fy * y + phase)) / 4;
    }
  }
  return t;
}

template <typename T>
double max_abs_diff(const flowdeblur::Tensor<T>& a, const flowdeblur::Tensor<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.storage()[i]) - b.storage()[i]));
  }
  return m;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("flowdeblur_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& leaf = {}) const {
    return leaf.empty() ? path_.string() : (path_ / leaf).string();
  }

 private:
  std::filesystem::path path_;
};

}  // namespace fdtest
