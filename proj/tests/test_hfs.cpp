#include <gtest/gtest.h>

#include <numbers>

#include "specbias/hfs.hpp"
#include "test_util.hpp"

using namespace specbias;
using specbias::testing::max_abs_diff;
using specbias::testing::ptrs;
using specbias::testing::random_param;
using specbias::testing::random_tensor;

namespace {

// Literal loop implementation of the patch mean, patch residual and scaling.
Tensor<double> hfs_reference(const Tensor<double>& x, const std::vector<double>& ldc,
                             const std::vector<double>& lhf, int p) {
  const Shape s = x.shape();
  const int rows = s.h / p;
  const int cols = s.w / p;
  Tensor<double> out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < p; ++y) {
        for (int xx = 0; xx < p; ++xx) {
          double dc = 0.0;
          for (int r = 0; r < rows; ++r) {
            for (int q = 0; q < cols; ++q) dc += x.at(n, c, r * p + y, q * p + xx);
          }
          dc /= rows * cols;
          for (int r = 0; r < rows; ++r) {
            for (int q = 0; q < cols; ++q) {
              const double v = x.at(n, c, r * p + y, q * p + xx);
              out.at(n, c, r * p + y, q * p + xx) = v + ldc[c] * dc + lhf[c] * (v - dc);
            }
          }
        }
      }
    }
  }
  return out;
}

HfsParams uniform_params(int c, double dc, double hfc, int p) {
  return HfsParams{std::vector<double>(c, dc), std::vector<double>(c, hfc), p};
}

}  // namespace

TEST(Patchify, TopLeftPatchIsTopLeftBlock) {
  Tensor<double> x(Shape{1, 1, 4, 4});
  for (int i = 0; i < 16; ++i) x[i] = i;
  const auto patches = patchify(x, 2);
  ASSERT_EQ(patches.count(), 4);
  EXPECT_EQ(patches.at(0, 0, 0, 0, 0), 0.0);
  EXPECT_EQ(patches.at(0, 0, 0, 0, 1), 1.0);
  EXPECT_EQ(patches.at(0, 0, 0, 1, 0), 4.0);
  EXPECT_EQ(patches.at(0, 0, 0, 1, 1), 5.0);
  EXPECT_EQ(patches.at(0, 1, 0, 0, 0), 2.0);  // row-major patch order
  EXPECT_EQ(patches.at(0, 2, 0, 0, 0), 8.0);
}

TEST(Patchify, WholeMapIsSinglePatch) {
  std::mt19937_64 rng(2);
  const auto x = random_tensor(Shape{2, 3, 8, 8}, rng);
  const auto patches = patchify(x, 8);
  EXPECT_EQ(patches.count(), 1);
  const auto dc = compute_dc(patches);
  EXPECT_EQ(dc.vec(), x.vec());
}

TEST(Patchify, RoundTripIsBitExact) {
  std::mt19937_64 rng(3);
  const auto x = random_tensor(Shape{2, 3, 8, 8}, rng);
  EXPECT_EQ(unpatchify(patchify(x, 4)).vec(), x.vec());
}

TEST(Patchify, RejectsIndivisibleSize) {
  EXPECT_THROW(patchify(Tensor<double>(Shape{1, 1, 6, 8}), 4), ValidationError);
  EXPECT_THROW(patchify(Tensor<double>(Shape{1, 1, 8, 6}), 4), ValidationError);
}

TEST(DirectComponent, IdenticalPatchesGiveThatPatch) {
  Tensor<double> x(Shape{1, 1, 4, 4});
  for (int y = 0; y < 4; ++y) {
    for (int xx = 0; xx < 4; ++xx) x.at(0, 0, y, xx) = (y % 2) * 2 + (xx % 2) + 0.25;
  }
  const auto dc = compute_dc(patchify(x, 2));
  EXPECT_EQ(dc.at(0, 0, 0, 0), 0.25);
  EXPECT_EQ(dc.at(0, 0, 1, 1), 3.25);
}

TEST(DirectComponent, OpposedPatchesCancel) {
  std::mt19937_64 rng(4);
  const auto v = random_tensor(Shape{1, 2, 3, 3}, rng);
  Tensor<double> x(Shape{1, 2, 3, 6});
  for (int c = 0; c < 2; ++c) {
    for (int y = 0; y < 3; ++y) {
      for (int xx = 0; xx < 3; ++xx) {
        x.at(0, c, y, xx) = v.at(0, c, y, xx);
        x.at(0, c, y, xx + 3) = -v.at(0, c, y, xx);
      }
    }
  }
  const auto dc = compute_dc(patchify(x, 3));
  for (double d : dc.vec()) EXPECT_EQ(d, 0.0);
}

TEST(DirectComponent, MatchesBruteForceAverage) {
  std::mt19937_64 rng(5);
  const auto x = random_tensor(Shape{2, 3, 12, 8}, rng);
  const int p = 4;
  const auto dc = compute_dc(patchify(x, p));
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < p; ++y) {
        for (int xx = 0; xx < p; ++xx) {
          double acc = 0.0;
          for (int r = 0; r < 3; ++r) {
            for (int q = 0; q < 2; ++q) acc += x.at(n, c, r * p + y, q * p + xx);
          }
          EXPECT_NEAR(dc.at(n, c, y, xx), acc / 6.0, 1e-12);
        }
      }
    }
  }
}

TEST(HighFrequencyComponent, UniformFieldHasNone) {
  const Tensor<double> x(Shape{1, 2, 8, 8}, 1.75);
  const auto patches = patchify(x, 4);
  const auto hfc = compute_hfc(patches, compute_dc(patches));
  for (double v : hfc.data) EXPECT_EQ(v, 0.0);
}

TEST(HighFrequencyComponent, SumsToZeroAndReconstructs) {
  std::mt19937_64 rng(6);
  const auto x = random_tensor(Shape{2, 3, 8, 8}, rng);
  const auto patches = patchify(x, 2);
  const auto dc = compute_dc(patches);
  const auto hfc = compute_hfc(patches, dc);
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < 2; ++y) {
        for (int xx = 0; xx < 2; ++xx) {
          double sum = 0.0;
          for (int i = 0; i < hfc.count(); ++i) {
            sum += hfc.at(n, i, c, y, xx);
            EXPECT_NEAR(hfc.at(n, i, c, y, xx) + dc.at(n, c, y, xx),
                        patches.at(n, i, c, y, xx), 1e-15);
          }
          EXPECT_LT(std::abs(sum), 1e-12);
        }
      }
    }
  }
}

TEST(HfsApply, ZeroLambdaIsExactIdentity) {
  std::mt19937_64 rng(7);
  const auto x = random_tensor(Shape{2, 3, 8, 8}, rng);
  EXPECT_EQ(hfs_apply(x, uniform_params(3, 0.0, 0.0, 4)).vec(), x.vec());
}

TEST(HfsApply, EqualLambdaScalesUniformly) {
  std::mt19937_64 rng(8);
  const auto x = random_tensor(Shape{2, 3, 8, 8}, rng);
  HfsParams params{{0.3, -0.7, 2.0}, {0.3, -0.7, 2.0}, 2};
  const auto y = hfs_apply(x, params);
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < 64; ++i) {
        EXPECT_NEAR(y.plane(n, c)[i], (1.0 + params.lambda_dc[c]) * x.plane(n, c)[i], 1e-12);
      }
    }
  }
}

TEST(HfsApply, UnitInitialisationDoubles) {
  std::mt19937_64 rng(9);
  const auto x = random_tensor(Shape{1, 4, 16, 16}, rng);
  const auto y = hfs_apply(x, uniform_params(4, 1.0, 1.0, 8));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], 2.0 * x[i], 1e-14);
}

TEST(HfsApply, MatchesLoopReferenceAndFiniteDifferences) {
  std::mt19937_64 rng(10);
  auto x = random_param("x", Shape{2, 3, 8, 8}, rng);
  auto ldc = random_param("lambda_dc", Shape{1, 3, 1, 1}, rng);
  auto lhf = random_param("lambda_hfc", Shape{1, 3, 1, 1}, rng);
  const std::vector<double> vdc(ldc.value.vec());
  const std::vector<double> vhf(lhf.value.vec());
  const auto y = hfs_apply(x.value, HfsParams{vdc, vhf, 4});
  EXPECT_LT(max_abs_diff(y, hfs_reference(x.value, vdc, vhf, 4)), 1e-12);

  const auto weights = random_tensor(Shape{2, 3, 8, 8}, rng);
  auto f = [&](Tape<double>& t) {
    return weighted_sum(hfs_apply(t.parameter(x), t.parameter(ldc), t.parameter(lhf), 4), weights);
  };
  auto params = ptrs({&x, &ldc, &lhf});
  EXPECT_LT(finite_difference_check(f, params).max_rel_error, 1e-5);
}

TEST(HfsApply, Homogeneity) {
  std::mt19937_64 rng(11);
  const auto x = random_tensor(Shape{1, 2, 8, 8}, rng);
  HfsParams params{{0.85, 1.2}, {1.15, -0.4}, 4};
  Tensor<double> scaled = x;
  for (auto& v : scaled.vec()) v *= -3.5;
  const auto a = hfs_apply(scaled, params);
  const auto b = hfs_apply(x, params);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], -3.5 * b[i], 1e-12);
}

TEST(HfsApply, RejectsBadInputs) {
  const Tensor<double> x(Shape{1, 2, 8, 8});
  EXPECT_THROW(hfs_apply(x, uniform_params(2, 1.0, 1.0, 3)), ValidationError);
  EXPECT_THROW(hfs_apply(x, uniform_params(3, 1.0, 1.0, 4)), ValidationError);
}

TEST(FrequencyMask, PartitionsTheGrid) {
  for (auto [h, w] : {std::pair{8, 8}, std::pair{6, 10}, std::pair{7, 7}}) {
    for (double tau : {0.1, 0.25, 0.5, 0.9}) {
      const auto low = low_frequency_mask(h, w, tau);
      const auto shells = shell_map(h, w);
      const int cutoff = static_cast<int>(std::lround(tau * max_shell(h, w)));
      for (std::size_t i = 0; i < low.size(); ++i) {
        EXPECT_EQ(low[i] == 1, shells[i] <= cutoff);
      }
    }
  }
  EXPECT_THROW(low_frequency_mask(8, 8, 0.0), ValidationError);
  EXPECT_THROW(low_frequency_mask(8, 8, 1.0), ValidationError);
}

TEST(FourierScale, UnitLambdaIsIdentity) {
  std::mt19937_64 rng(12);
  const auto x = random_tensor(Shape{2, 3, 12, 10}, rng);
  FourierScaleParams params{{1, 1, 1}, {1, 1, 1}, 0.4};
  EXPECT_LT(max_abs_diff(fourier_scale(x, params), x), 1e-6);
}

TEST(FourierScale, ZeroHighRemovesHighSinusoid) {
  const int n = 32;
  Tensor<double> x(Shape{1, 1, n, n});
  // Shell 14 lies above round(0.3 * 23) = 7.
  for (int y = 0; y < n; ++y) {
    for (int xx = 0; xx < n; ++xx) {
      x.at(0, 0, y, xx) = std::sin(2.0 * std::numbers::pi * (10.0 * xx + 10.0 * y) / n);
    }
  }
  const auto y = fourier_scale(x, FourierScaleParams{{1.0}, {0.0}, 0.3});
  double ein = 0.0;
  double eout = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ein += x[i] * x[i];
    eout += y[i] * y[i];
  }
  EXPECT_LT(eout, 1e-8 * ein);
}

TEST(FourierScale, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(13);
  auto x = random_param("x", Shape{2, 2, 8, 6}, rng);
  auto lo = random_param("lambda_low", Shape{1, 2, 1, 1}, rng);
  auto hi = random_param("lambda_high", Shape{1, 2, 1, 1}, rng);
  const auto weights = random_tensor(Shape{2, 2, 8, 6}, rng);
  auto f = [&](Tape<double>& t) {
    return weighted_sum(fourier_scale(t.parameter(x), t.parameter(lo), t.parameter(hi), 0.4),
                        weights);
  };
  auto params = ptrs({&x, &lo, &hi});
  EXPECT_LT(finite_difference_check(f, params).max_rel_error, 1e-5);
}
