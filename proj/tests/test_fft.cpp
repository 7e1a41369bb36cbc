#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "specbias/fft.hpp"

using namespace specbias::fft;

namespace {

std::vector<cplx> naive_dft(const std::vector<cplx>& x) {
  const int n = static_cast<int>(x.size());
  std::vector<cplx> out(n);
  for (int k = 0; k < n; ++k) {
    cplx acc = 0.0;
    for (int j = 0; j < n; ++j) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(j) * k / n;
      acc += x[j] * cplx(std::cos(a), std::sin(a));
    }
    out[k] = acc;
  }
  return out;
}

std::vector<cplx> random_signal(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  std::vector<cplx> x(n);
  for (auto& v : x) v = cplx(d(rng), d(rng));
  return x;
}

}  // namespace

class FftSizes : public ::testing::TestWithParam<int> {};

TEST_P(FftSizes, MatchesDirectDft) {
  const int n = GetParam();
  std::mt19937_64 rng(n);
  const auto x = random_signal(n, rng);
  const auto expect = naive_dft(x);
  auto y = x;
  Plan(n).forward(y.data());
  double err = 0.0;
  double scale = 0.0;
  for (int k = 0; k < n; ++k) {
    err = std::max(err, std::abs(y[k] - expect[k]));
    scale = std::max(scale, std::abs(expect[k]));
  }
  EXPECT_LT(err, 1e-12 * std::max(1.0, scale)) << "n=" << n;

  Plan(n).inverse(y.data());
  for (int k = 0; k < n; ++k) EXPECT_LT(std::abs(y[k] - x[k]), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(MixedRadixAndPrime, FftSizes,
                         ::testing::Values(1, 2, 3, 4, 5, 6, 7, 8, 9, 12, 15, 16, 24, 25, 30, 32,
                                           49, 60, 64, 97, 128, 143, 192, 384));

TEST(Fft, FactorsPreferSmallRadices) {
  EXPECT_EQ(Plan(384).factors(), (std::vector<int>{4, 4, 4, 2, 3}));
  EXPECT_EQ(Plan(77).factors(), (std::vector<int>{7, 11}));
}

TEST(Fft, TwoDimensionalMatchesSeparableDirectDft) {
  const int h = 6;
  const int w = 10;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> d;
  std::vector<double> field(h * w);
  for (auto& v : field) v = d(rng);
  const auto got = forward_real(field.data(), h, w);
  for (int ky = 0; ky < h; ++ky) {
    for (int kx = 0; kx < w; ++kx) {
      cplx acc = 0.0;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double a = -2.0 * std::numbers::pi *
                            (static_cast<double>(ky * y) / h + static_cast<double>(kx * x) / w);
          acc += field[y * w + x] * cplx(std::cos(a), std::sin(a));
        }
      }
      EXPECT_LT(std::abs(got[ky * w + kx] - acc), 1e-11);
    }
  }
}

TEST(Fft, SignedFrequency) {
  EXPECT_EQ(signed_frequency(0, 8), 0);
  EXPECT_EQ(signed_frequency(4, 8), 4);
  EXPECT_EQ(signed_frequency(5, 8), -3);
  EXPECT_EQ(signed_frequency(3, 7), 3);
  EXPECT_EQ(signed_frequency(4, 7), -3);
}
