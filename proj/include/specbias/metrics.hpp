#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "specbias/fft.hpp"
#include "specbias/tensor.hpp"

namespace specbias {

/// Radial frequency bands as fractions of the largest shell k_max. A shell s
/// is low if s <= round(low * k_max), mid if s <= round((low + mid) * k_max),
/// high otherwise.
struct BandSpec {
  double low_fraction = 0.02;
  double mid_fraction = 0.042;

  void validate() const;
  /// 0 = low, 1 = mid, 2 = high for every bin of an h x w DFT grid.
  std::vector<std::uint8_t> band_map(int h, int w) const;
};

/// Every field averages over samples and prediction steps (each (n, c) plane
/// is one field). Relative spectral errors divide by the RMS of the truth
/// spectrum over the same band.
struct MetricsReport {
  double rel_error = 0.0;
  double rmse = 0.0;
  double brmse = 0.0;
  double bubble_rmse = 0.0;
  double max_mean = 0.0;
  double max_max = 0.0;
  double f_low = 0.0;
  double f_mid = 0.0;
  double f_high = 0.0;
  double ef_total = 0.0;
  double ef_low = 0.0;
  double ef_mid = 0.0;
  double ef_high = 0.0;
  double rel_ef_total = 0.0;
  double rel_ef_low = 0.0;
  double rel_ef_mid = 0.0;
  double rel_ef_high = 0.0;

  static std::vector<std::string> columns();
  std::vector<double> values() const;
};

void write_csv_header(std::ostream& os, const std::vector<std::string>& leading = {});
void write_csv_row(std::ostream& os, const MetricsReport& r,
                   const std::vector<std::string>& leading = {});
void print_table(std::ostream& os, const MetricsReport& r);

/// sqrt(mean (pred - truth)^2) over every element.
double rmse(const Tensor<double>& pred, const Tensor<double>& truth);
/// ||pred - truth|| / ||truth|| per sample, averaged over samples.
double rel_error(const Tensor<double>& pred, const Tensor<double>& truth);
/// Mean over samples of the per-sample max |error|.
double max_mean(const Tensor<double>& pred, const Tensor<double>& truth);
double max_max(const Tensor<double>& pred, const Tensor<double>& truth);
/// RMSE over the one-pixel frame of every plane (2h + 2w - 4 cells each).
double brmse(const Tensor<double>& pred, const Tensor<double>& truth);
/// RMSE over cells where mask (n, c, h, w or n, 1, h, w) is nonzero.
double masked_rmse(const Tensor<double>& pred, const Tensor<double>& truth,
                   const std::vector<std::uint8_t>& mask);

/// |F|^2 summed into integer radial shells, divided by h*w so that the
/// profile sums to the sum of squares of the field.
std::vector<double> energy_spectrum(const double* field, int h, int w);

struct BandErrors {
  double low = 0.0;
  double mid = 0.0;
  double high = 0.0;
  double total = 0.0;
};

/// sqrt(mean over band of |F(pred) - F(truth)|^2) for one plane.
BandErrors f_band_error(const double* pred, const double* truth, int h, int w,
                        const BandSpec& bands);
/// sqrt(mean over band of (|F(pred)|^2 - |F(truth)|^2)^2) for one plane.
BandErrors spectrum_band_error(const double* pred, const double* truth, int h, int w,
                               const BandSpec& bands);
/// sqrt(mean over band of |F(truth)|^4): the scale used by relative E_F.
BandErrors spectrum_band_scale(const double* truth, int h, int w, const BandSpec& bands);

/// Energy above shell round(cutoff * k_max) over the energy outside shell 0.
/// Zero when the field has no non-DC energy.
double hf_energy_ratio(const double* field, int h, int w, double cutoff);

/// Full report over (n, k, h, w) predictions. `mask` may be empty.
MetricsReport evaluate_metrics(const Tensor<double>& pred, const Tensor<double>& truth,
                               const BandSpec& bands,
                               const std::vector<std::uint8_t>& mask = {});

}  // namespace specbias
