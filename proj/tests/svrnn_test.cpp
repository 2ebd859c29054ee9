#include <gtest/gtest.h>

#include <cmath>

#include "flowdeblur/gradcheck.hpp"
#include "flowdeblur/parallel.hpp"
#include "flowdeblur/svrnn.hpp"
#include "support.hpp"

using namespace flowdeblur;

namespace {

Tensor<double> constant_gates(int c, int h, int w, double a) {
  return Tensor<double>(1, kScanDirections * c, h, w, a);
}

}  // namespace

TEST(Svrnn, ImpulseDecaysGeometricallyInEachDirection) {
  const int h = 9, w = 11, py = 4, px = 5;
  const double a = 0.6;
  Tensor<double> f(1, 1, h, w);
  f.at(0, 0, py, px) = 1.0;
  const auto g = svrnn_forward(f, constant_gates(1, h, w, a)).g;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool row = y == py;
      const bool col = x == px;
      const double lr = row && x >= px ? (1 - a) * std::pow(a, x - px) : 0.0;
      const double rl = row && x <= px ? (1 - a) * std::pow(a, px - x) : 0.0;
      const double tb = col && y >= py ? (1 - a) * std::pow(a, y - py) : 0.0;
      const double bt = col && y <= py ? (1 - a) * std::pow(a, py - y) : 0.0;
      EXPECT_NEAR(g.at(0, 0, y, x), lr, 1e-12);
      EXPECT_NEAR(g.at(0, 1, y, x), rl, 1e-12);
      EXPECT_NEAR(g.at(0, 2, y, x), tb, 1e-12);
      EXPECT_NEAR(g.at(0, 3, y, x), bt, 1e-12);
    }
  }
}

TEST(Svrnn, StepResponseApproachesInput) {
  // Constant input with constant gate a: g[i] = 1 - a^(i+1).
  const double a = -0.5;
  const Tensor<double> f(1, 1, 1, 12, 1.0);
  const auto g = svrnn_forward(f, constant_gates(1, 1, 12, a)).g;
  for (int i = 0; i < 12; ++i) {
    EXPECT_NEAR(g.at(0, 0, 0, i), 1.0 - std::pow(a, i + 1), 1e-12);
    EXPECT_NEAR(g.at(0, 1, 0, 11 - i), 1.0 - std::pow(a, i + 1), 1e-12);
  }
}

TEST(Svrnn, ZeroGatesPassInputThrough) {
  const auto f = fdtest::random_tensor<float>(2, 3, 5, 6, 1);
  const auto g = svrnn_forward(f, Tensor<float>(2, 12, 5, 6)).g;
  for (int n = 0; n < 2; ++n)
    for (int d = 0; d < 4; ++d)
      for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 30; ++i) EXPECT_EQ(g.plane(n, d * 3 + c)[i], f.plane(n, c)[i]);
}

TEST(Svrnn, MatchesDirectRecurrenceWithVariableGates) {
  const int h = 4, w = 5, c = 2;
  const auto f = fdtest::random_tensor<double>(1, c, h, w, 2, -1, 1);
  const auto gates = fdtest::random_tensor<double>(1, 4 * c, h, w, 3, -0.9, 0.9);
  const auto g = svrnn_forward(f, gates).g;
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      double s = 0;
      for (int x = 0; x < w; ++x) {
        const double a = gates.at(0, 0 * c + ch, y, x);
        s = (1 - a) * f.at(0, ch, y, x) + a * s;
        EXPECT_NEAR(g.at(0, 0 * c + ch, y, x), s, 1e-14);
      }
    }
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int y = h - 1; y >= 0; --y) {
        const double a = gates.at(0, 3 * c + ch, y, x);
        s = (1 - a) * f.at(0, ch, y, x) + a * s;
        EXPECT_NEAR(g.at(0, 3 * c + ch, y, x), s, 1e-14);
      }
    }
  }
}

TEST(Svrnn, RejectsWrongGateChannels) {
  EXPECT_THROW(svrnn_forward(Tensor<float>(1, 2, 3, 3), Tensor<float>(1, 4, 3, 3)), ShapeError);
  EXPECT_THROW(svrnn_forward(Tensor<float>(1, 2, 3, 3), Tensor<float>(1, 8, 3, 4)), ShapeError);
}

TEST(Svrnn, BoundedGatesKeepOutputsBounded) {
  // |g| <= max|f| whenever |w| < 1 and the gates are nonnegative.
  const auto f = fdtest::random_tensor<double>(1, 2, 16, 16, 4, -1, 1);
  const auto gates = fdtest::random_tensor<double>(1, 8, 16, 16, 5, 0.0, 0.999);
  for (double v : svrnn_forward(f, gates).g.storage()) EXPECT_LE(std::abs(v), 1.0 + 1e-12);
}

TEST(Svrnn, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    EXPECT_LE(gradcheck("svrnn", seed).worst_rel_err, 1e-4) << "seed " << seed;
  }
}

TEST(Svrnn, BackwardIsDeterministicAcrossThreadCounts) {
  const auto f = fdtest::random_tensor<float>(2, 4, 12, 12, 6, -1, 1);
  const auto gates = fdtest::random_tensor<float>(2, 16, 12, 12, 7, -0.9f, 0.9f);
  const auto r = fdtest::random_tensor<float>(2, 16, 12, 12, 8, -1, 1);
  const int saved = num_threads();
  set_num_threads(1);
  const auto fwd1 = svrnn_forward(f, gates);
  const auto g1 = svrnn_backward(r, f, gates, fwd1.cache);
  set_num_threads(4);
  const auto fwd4 = svrnn_forward(f, gates);
  const auto g4 = svrnn_backward(r, f, gates, fwd4.cache);
  set_num_threads(saved);
  EXPECT_EQ(fwd1.g, fwd4.g);
  EXPECT_EQ(g1.f, g4.f);
  EXPECT_EQ(g1.w, g4.w);
}
