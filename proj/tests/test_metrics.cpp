#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "oracles.hpp"
#include "specbias/metrics.hpp"
#include "test_util.hpp"

using namespace specbias;
using specbias::testing::direct_dft;
using specbias::testing::oracle_bands;
using specbias::testing::random_tensor;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> plane_vec(const Tensor<double>& t, int n, int c) {
  const double* p = t.plane(n, c);
  return std::vector<double>(p, p + t.shape().plane());
}

Tensor<double> sinusoid(int h, int w, int kx, int ky, double phase) {
  Tensor<double> t(Shape{1, 1, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      t.at(0, 0, y, x) = std::cos(2.0 * kPi * (static_cast<double>(kx) * x / w +
                                               static_cast<double>(ky) * y / h) + phase);
    }
  }
  return t;
}

}  // namespace

TEST(PointwiseMetrics, MatchLoopReferences) {
  std::mt19937_64 rng(1);
  const auto p = random_tensor(Shape{3, 2, 8, 8}, rng);
  const auto t = random_tensor(Shape{3, 2, 8, 8}, rng);
  double sq = 0.0;
  double mx = 0.0;
  double rel = 0.0;
  double mean_max = 0.0;
  for (int n = 0; n < 3; ++n) {
    double num = 0.0;
    double den = 0.0;
    double m = 0.0;
    for (int c = 0; c < 2; ++c) {
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
          const double d = p.at(n, c, y, x) - t.at(n, c, y, x);
          sq += d * d;
          num += d * d;
          den += t.at(n, c, y, x) * t.at(n, c, y, x);
          m = std::max(m, std::abs(d));
        }
      }
    }
    rel += std::sqrt(num / den) / 3.0;
    mean_max += m / 3.0;
    mx = std::max(mx, m);
  }
  EXPECT_NEAR(rmse(p, t), std::sqrt(sq / p.size()), 1e-14);
  EXPECT_NEAR(rel_error(p, t), rel, 1e-14);
  EXPECT_NEAR(max_mean(p, t), mean_max, 1e-14);
  EXPECT_EQ(max_max(p, t), mx);
}

TEST(PointwiseMetrics, RejectShapeMismatch) {
  Tensor<double> a(Shape{1, 1, 4, 4});
  Tensor<double> b(Shape{1, 1, 4, 5});
  EXPECT_THROW(rmse(a, b), ValidationError);
  EXPECT_THROW(evaluate_metrics(a, b, BandSpec{}), ValidationError);
}

TEST(PointwiseMetrics, BoundaryRmseSeesOnlyTheFrame) {
  Tensor<double> truth(Shape{1, 1, 6, 5}, 1.0);
  Tensor<double> interior = truth;
  interior.at(0, 0, 2, 2) += 5.0;
  EXPECT_EQ(brmse(interior, truth), 0.0);
  Tensor<double> frame = truth;
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 5; ++x) {
      if (y == 0 || y == 5 || x == 0 || x == 4) frame.at(0, 0, y, x) += 2.0;
    }
  }
  EXPECT_NEAR(brmse(frame, truth), 2.0, 1e-15);
}

TEST(PointwiseMetrics, MaskedRmseSupportsBroadcastAndChannelMasks) {
  Tensor<double> truth(Shape{1, 2, 2, 2});
  Tensor<double> pred(Shape{1, 2, 2, 2});
  pred.at(0, 0, 0, 0) = 3.0;
  pred.at(0, 1, 0, 0) = 4.0;
  pred.at(0, 1, 1, 1) = 100.0;
  // Shared (n, h, w) mask selects cell (0, 0) in both channels.
  EXPECT_NEAR(masked_rmse(pred, truth, {1, 0, 0, 0}), std::sqrt((9.0 + 16.0) / 2.0), 1e-15);
  // Channel mask selects only channel 0.
  EXPECT_NEAR(masked_rmse(pred, truth, {1, 0, 0, 0, 0, 0, 0, 0}), 3.0, 1e-15);
  EXPECT_THROW(masked_rmse(pred, truth, {0, 0, 0, 0}), ValidationError);
  EXPECT_THROW(masked_rmse(pred, truth, {1, 0, 0}), ValidationError);
}

TEST(EnergySpectrum, ParsevalHolds) {
  std::mt19937_64 rng(2);
  const auto f = random_tensor(Shape{1, 1, 24, 40}, rng);
  const auto p = energy_spectrum(f.data(), 24, 40);
  double sum_sq = 0.0;
  for (double v : f.vec()) sum_sq += v * v;
  double total = 0.0;
  for (double v : p) total += v;
  EXPECT_NEAR(total, sum_sq, 1e-10 * sum_sq);
}

TEST(EnergySpectrum, MatchesDirectDftBinning) {
  std::mt19937_64 rng(3);
  const int h = 12;
  const int w = 10;
  const auto f = random_tensor(Shape{1, 1, h, w}, rng);
  const auto F = direct_dft(f.vec(), h, w);
  std::vector<double> expected(std::lround(std::hypot(h / 2, w / 2)) + 1, 0.0);
  for (int ky = 0; ky < h; ++ky) {
    for (int kx = 0; kx < w; ++kx) {
      const int fy = ky <= h / 2 ? ky : ky - h;
      const int fx = kx <= w / 2 ? kx : kx - w;
      expected[std::lround(std::hypot(fy, fx))] += std::norm(F[ky * w + kx]) / (h * w);
    }
  }
  const auto p = energy_spectrum(f.data(), h, w);
  ASSERT_EQ(p.size(), expected.size());
  for (std::size_t s = 0; s < p.size(); ++s) EXPECT_NEAR(p[s], expected[s], 1e-12);
}

TEST(EnergySpectrum, SinusoidConcentratesInItsShell) {
  const auto f = sinusoid(64, 64, 3, 0, 0.4);
  const auto p = energy_spectrum(f.data(), 64, 64);
  double total = 0.0;
  for (double v : p) total += v;
  EXPECT_GE(p[3] / total, 0.999);
}

TEST(Bands, DefaultPartitionOn64Grid) {
  const auto band = BandSpec{}.band_map(64, 64);
  const auto expected = oracle_bands(64, 64, 0.02, 0.042);
  EXPECT_EQ(std::vector<int>(band.begin(), band.end()), expected);
  // k_max = 45: shells 0..1 low, 2..3 mid.
  EXPECT_EQ(band[1], 0);
  EXPECT_EQ(band[2], 1);
  EXPECT_EQ(band[3], 1);
  EXPECT_EQ(band[4], 2);
}

TEST(Bands, ValidationRejectsDegenerateSplits) {
  EXPECT_THROW((BandSpec{0.0, 0.1}).validate(), ValidationError);
  EXPECT_THROW((BandSpec{0.1, 0.0}).validate(), ValidationError);
  EXPECT_THROW((BandSpec{0.6, 0.5}).validate(), ValidationError);
  EXPECT_NO_THROW((BandSpec{0.1, 0.3}).validate());
}

TEST(BandErrorsTest, MatchDirectDftOracle) {
  std::mt19937_64 rng(4);
  const int h = 16;
  const int w = 12;
  const BandSpec bands{0.15, 0.3};
  const auto p = random_tensor(Shape{1, 1, h, w}, rng);
  const auto t = random_tensor(Shape{1, 1, h, w}, rng);
  const auto Fp = direct_dft(p.vec(), h, w);
  const auto Ft = direct_dft(t.vec(), h, w);
  const auto band = oracle_bands(h, w, bands.low_fraction, bands.mid_fraction);
  double f_sum[3] = {};
  double e_sum[3] = {};
  double s_sum[3] = {};
  int count[3] = {};
  for (std::size_t i = 0; i < band.size(); ++i) {
    f_sum[band[i]] += std::norm(Fp[i] - Ft[i]);
    const double d = std::norm(Fp[i]) - std::norm(Ft[i]);
    e_sum[band[i]] += d * d;
    s_sum[band[i]] += std::norm(Ft[i]) * std::norm(Ft[i]);
    ++count[band[i]];
  }
  const auto f = f_band_error(p.data(), t.data(), h, w, bands);
  const auto e = spectrum_band_error(p.data(), t.data(), h, w, bands);
  const auto s = spectrum_band_scale(t.data(), h, w, bands);
  const double fv[3] = {f.low, f.mid, f.high};
  const double ev[3] = {e.low, e.mid, e.high};
  const double sv[3] = {s.low, s.mid, s.high};
  for (int b = 0; b < 3; ++b) {
    ASSERT_GT(count[b], 0);
    EXPECT_NEAR(fv[b], std::sqrt(f_sum[b] / count[b]), 1e-10 * (1.0 + fv[b]));
    EXPECT_NEAR(ev[b], std::sqrt(e_sum[b] / count[b]), 1e-10 * (1.0 + ev[b]));
    EXPECT_NEAR(sv[b], std::sqrt(s_sum[b] / count[b]), 1e-10 * (1.0 + sv[b]));
  }
}

TEST(BandErrorsTest, BandsRecombineIntoTotal) {
  std::mt19937_64 rng(5);
  const int h = 32;
  const int w = 32;
  const BandSpec bands{0.1, 0.2};
  const auto p = random_tensor(Shape{1, 1, h, w}, rng);
  const auto t = random_tensor(Shape{1, 1, h, w}, rng);
  const auto map = bands.band_map(h, w);
  double count[3] = {};
  for (auto b : map) count[b] += 1.0;
  for (const auto& e : {f_band_error(p.data(), t.data(), h, w, bands),
                        spectrum_band_error(p.data(), t.data(), h, w, bands)}) {
    const double recombined =
        (e.low * e.low * count[0] + e.mid * e.mid * count[1] + e.high * e.high * count[2]) / map.size();
    EXPECT_NEAR(e.total * e.total, recombined, 1e-10 * recombined);
  }
}

TEST(BandErrorsTest, PhaseShiftLeavesEnergyErrorZero) {
  const auto truth = sinusoid(32, 32, 4, 2, 0.0);
  const auto pred = sinusoid(32, 32, 4, 2, 1.1);
  const BandSpec bands;
  const auto e = spectrum_band_error(pred.data(), truth.data(), 32, 32, bands);
  const auto scale = spectrum_band_scale(truth.data(), 32, 32, bands);
  EXPECT_LT(e.total, 1e-10 * scale.total);
  EXPECT_GT(rmse(pred, truth), 0.5);
  EXPECT_GT(f_band_error(pred.data(), truth.data(), 32, 32, bands).total, 1.0);
}

TEST(BandErrorsTest, InvariantUnderCircularShift) {
  std::mt19937_64 rng(6);
  const int h = 16;
  const int w = 16;
  const auto p = random_tensor(Shape{1, 1, h, w}, rng);
  const auto t = random_tensor(Shape{1, 1, h, w}, rng);
  Tensor<double> ps(p.shape());
  Tensor<double> ts(t.shape());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      ps.at(0, 0, (y + 5) % h, (x + 3) % w) = p.at(0, 0, y, x);
      ts.at(0, 0, (y + 5) % h, (x + 3) % w) = t.at(0, 0, y, x);
    }
  }
  const BandSpec bands{0.1, 0.25};
  const auto a = spectrum_band_error(p.data(), t.data(), h, w, bands);
  const auto b = spectrum_band_error(ps.data(), ts.data(), h, w, bands);
  EXPECT_NEAR(a.low, b.low, 1e-10 * (1.0 + a.low));
  EXPECT_NEAR(a.mid, b.mid, 1e-10 * (1.0 + a.mid));
  EXPECT_NEAR(a.high, b.high, 1e-10 * (1.0 + a.high));
}

TEST(HfEnergyRatio, WhiteNoiseMatchesBinFraction) {
  const int n = 64;
  const double cutoff = 0.5;
  const auto shells = oracle_bands(n, n, cutoff, 0.999 - cutoff);
  double above = 0.0;
  for (int b : shells) above += b != 0 ? 1.0 : 0.0;
  const double expected = above / (n * n - 1);
  std::mt19937_64 rng(7);
  double mean = 0.0;
  for (int s = 0; s < 8; ++s) {
    const auto f = random_tensor(Shape{1, 1, n, n}, rng);
    mean += hf_energy_ratio(f.data(), n, n, cutoff) / 8.0;
  }
  EXPECT_NEAR(mean, expected, 0.05 * expected);
}

TEST(HfEnergyRatio, EdgeCases) {
  Tensor<double> flat(Shape{1, 1, 8, 8}, 3.0);
  EXPECT_EQ(hf_energy_ratio(flat.data(), 8, 8, 0.5), 0.0);
  const auto low = sinusoid(32, 32, 1, 0, 0.0);
  EXPECT_LT(hf_energy_ratio(low.data(), 32, 32, 0.5), 1e-20);
  EXPECT_THROW(hf_energy_ratio(flat.data(), 8, 8, 0.0), ValidationError);
  EXPECT_THROW(hf_energy_ratio(flat.data(), 8, 8, 1.0), ValidationError);
}

TEST(HfEnergyRatio, SinusoidAboveCutoffIsAllHighFrequency) {
  // Shell 12 of 32 (kmax = 23 on 32^2) lies above a 0.25 cutoff.
  const auto f = sinusoid(32, 32, 12, 0, 0.4);
  EXPECT_NEAR(hf_energy_ratio(f.data(), 32, 32, 0.25), 1.0, 1e-12);
}

TEST(BandErrorsTest, LowShellPerturbationOnlyMovesLowBand) {
  std::mt19937_64 rng(11);
  const int n = 64;
  const auto t = random_tensor(Shape{1, 1, n, n}, rng);
  auto p = t;
  // Shell 1 sits in the low band of the default split.
  const auto bump = sinusoid(n, n, 1, 0, 0.3);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] += 0.2 * bump[i];
  const auto e = f_band_error(p.data(), t.data(), n, n, BandSpec{});
  EXPECT_GT(e.low, 0.0);
  EXPECT_LT(e.mid, 1e-12);
  EXPECT_LT(e.high, 1e-12);
}

TEST(Evaluate, InvariantUnderBatchPermutation) {
  std::mt19937_64 rng(12);
  const auto t = random_tensor(Shape{3, 2, 16, 16}, rng);
  const auto p = random_tensor(Shape{3, 2, 16, 16}, rng);
  Tensor<double> tp(t.shape()), pp(p.shape());
  const int order[3] = {2, 0, 1};
  const std::size_t block = t.shape().numel() / 3;
  for (int i = 0; i < 3; ++i) {
    std::copy_n(t.data() + order[i] * block, block, tp.data() + i * block);
    std::copy_n(p.data() + order[i] * block, block, pp.data() + i * block);
  }
  const auto a = evaluate_metrics(p, t, BandSpec{0.1, 0.2}).values();
  const auto b = evaluate_metrics(pp, tp, BandSpec{0.1, 0.2}).values();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12 * (1.0 + std::abs(a[i])));
}

TEST(Evaluate, PerfectPredictionScoresZero) {
  std::mt19937_64 rng(8);
  const auto t = random_tensor(Shape{2, 3, 16, 16}, rng);
  const auto r = evaluate_metrics(t, t, BandSpec{0.1, 0.2});
  for (double v : r.values()) EXPECT_EQ(v, 0.0);
}

TEST(Evaluate, AllMetricsNonNegativeAndRelativeScaleExact) {
  std::mt19937_64 rng(9);
  const auto t = random_tensor(Shape{2, 2, 16, 16}, rng);
  Tensor<double> p = t;
  for (auto& v : p.vec()) v *= 2.0;
  // |F(2T)|^2 - |F(T)|^2 = 3 |F(T)|^2 bin by bin.
  const auto r = evaluate_metrics(p, t, BandSpec{0.1, 0.2});
  EXPECT_NEAR(r.rel_ef_total, 3.0, 1e-10);
  EXPECT_NEAR(r.rel_ef_low, 3.0, 1e-10);
  EXPECT_NEAR(r.rel_ef_high, 3.0, 1e-10);
  EXPECT_NEAR(r.rel_error, 1.0, 1e-12);
  for (double v : r.values()) EXPECT_GE(v, 0.0);
}

TEST(Evaluate, AveragesPlanesAndUsesMask) {
  std::mt19937_64 rng(10);
  const auto t = random_tensor(Shape{2, 2, 8, 8}, rng);
  const auto p = random_tensor(Shape{2, 2, 8, 8}, rng);
  const BandSpec bands{0.2, 0.3};
  double f_low = 0.0;
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 2; ++c) {
      f_low += f_band_error(plane_vec(p, n, c).data(), plane_vec(t, n, c).data(), 8, 8, bands).low / 4.0;
    }
  }
  std::vector<std::uint8_t> mask(2 * 64, 1);
  const auto r = evaluate_metrics(p, t, bands, mask);
  EXPECT_NEAR(r.f_low, f_low, 1e-12);
  EXPECT_NEAR(r.bubble_rmse, r.rmse, 1e-14);
}

TEST(Csv, HeaderAndRowAlign) {
  std::ostringstream os;
  write_csv_header(os, {"variant"});
  MetricsReport r;
  r.rmse = 0.25;
  write_csv_row(os, r, {"hfs"});
  std::istringstream in(os.str());
  std::string header;
  std::string row;
  std::getline(in, header);
  std::getline(in, row);
  auto commas = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
  EXPECT_EQ(commas(header), commas(row));
  EXPECT_EQ(commas(header), static_cast<long>(MetricsReport::columns().size()));
  EXPECT_EQ(header.rfind("variant,rel_error,rmse", 0), 0u);
  EXPECT_EQ(row.rfind("hfs,0,0.25", 0), 0u);
}
