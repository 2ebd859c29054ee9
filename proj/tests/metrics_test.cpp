#include <gtest/gtest.h>

#include <cmath>

#include "flowdeblur/blur.hpp"
#include "flowdeblur/metrics.hpp"
#include "flowdeblur/synth.hpp"
#include "support.hpp"

using namespace flowdeblur;

namespace {

// Straightforward SSIM: per-window Gaussian moments on luma, valid windows.
double reference_ssim(const Tensor<float>& a, const Tensor<float>& b) {
  const int h = a.h(), w = a.w(), r = 5;
  std::vector<double> la(h * w), lb(h * w);
  for (int i = 0; i < h * w; ++i) {
    la[i] = 0.299 * a.plane(0, 0)[i] + 0.587 * a.plane(0, 1)[i] + 0.114 * a.plane(0, 2)[i];
    lb[i] = 0.299 * b.plane(0, 0)[i] + 0.587 * b.plane(0, 1)[i] + 0.114 * b.plane(0, 2)[i];
  }
  double g[11][11], norm = 0;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) norm += g[y + r][x + r] = std::exp(-(x * x + y * y) / (2 * 1.5 * 1.5));
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  int count = 0;
  for (int cy = r; cy < h - r; ++cy)
    for (int cx = r; cx < w - r; ++cx) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int y = -r; y <= r; ++y)
        for (int x = -r; x <= r; ++x) {
          const double k = g[y + r][x + r] / norm;
          const double va = la[(cy + y) * w + cx + x], vb = lb[(cy + y) * w + cx + x];
          ma += k * va;
          mb += k * vb;
          saa += k * va * va;
          sbb += k * vb * vb;
          sab += k * va * vb;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / count;
}

}  // namespace

TEST(Psnr, IdenticalImagesAreInfinite) {
  const auto a = fdtest::random_image(8, 8, 1);
  EXPECT_TRUE(is_infinite_psnr(psnr(a, a)));
}

TEST(Psnr, ConstantOffsetOfOneTenthIsTwentyDb) {
  Tensor<float> a(1, 3, 10, 10, 0.5f);
  Tensor<float> b(1, 3, 10, 10, 0.6f);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-5);
}

TEST(Psnr, SymmetricAndMatchesMse) {
  const auto a = fdtest::random_image(9, 7, 2);
  const auto b = fdtest::random_image(9, 7, 3);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
  double mse = 0;
  for (std::size_t i = 0; i < a.size(); ++i) mse += std::pow(double(a.storage()[i]) - b.storage()[i], 2);
  mse /= a.size();
  EXPECT_NEAR(psnr(a, b), 10 * std::log10(1 / mse), 1e-9);
  EXPECT_THROW(psnr(a, fdtest::random_image(9, 8, 4)), ShapeError);
}

TEST(Ssim, IdenticalIsExactlyOne) {
  const auto a = fdtest::random_image(20, 24, 5);
  EXPECT_EQ(ssim(a, a), 1.0);
}

TEST(Ssim, MatchesReferenceImplementation) {
  const auto a = gen_texture(32, 40, 6);
  auto b = a;
  Rng rng(7);
  for (float& v : b.storage()) v = std::clamp(v + static_cast<float>(rng.uniform(-0.1, 0.1)), 0.0f, 1.0f);
  EXPECT_NEAR(ssim(a, b), reference_ssim(a, b), 1e-9);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-9);
}

TEST(Ssim, InvertedBinaryImageIsNegative) {
  Rng rng(8);
  Tensor<float> a(1, 3, 24, 24);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      const float v = rng.below(2) ? 1.0f : 0.0f;
      for (int c = 0; c < 3; ++c) a.at(0, c, y, x) = v;
    }
  auto inv = a;
  for (float& v : inv.storage()) v = 1.0f - v;
  EXPECT_LT(ssim(a, inv), 0.0);
}

TEST(Ssim, DecreasesWithBlurMagnitude) {
  const auto sharp = gen_texture(64, 64, 9);
  double prev = 1.0;
  for (double mag : {2.0, 5.0, 10.0}) {
    FlowField<float> flow(1, 2, 64, 64);
    for (float& v : flow.plane(0, 0)) v = static_cast<float>(mag * 0.8);
    for (float& v : flow.plane(0, 1)) v = static_cast<float>(mag * 0.6);
    const double s = ssim(reblur(sharp, flow, {}), sharp);
    EXPECT_LT(s, prev) << "magnitude " << mag;
    prev = s;
  }
}

TEST(Ssim, TooSmallForWindow) {
  EXPECT_THROW(ssim(Tensor<float>(1, 3, 10, 30), Tensor<float>(1, 3, 10, 30)), ShapeError);
}
