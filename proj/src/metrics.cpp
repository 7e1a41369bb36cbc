#include "specbias/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include "specbias/hfs.hpp"

namespace specbias {

namespace {

void require_match(const Tensor<double>& pred, const Tensor<double>& truth, const char* what) {
  if (pred.shape() != truth.shape()) {
    throw ValidationError(std::string(what) + ": shape mismatch " + pred.shape().str() + " vs " +
                          truth.shape().str());
  }
}

std::vector<fft::cplx> spectrum(const fft::Plan2d& plan, const double* field) {
  std::vector<fft::cplx> grid(static_cast<std::size_t>(plan.height()) * plan.width());
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = field[i];
  plan.forward(grid);
  return grid;
}

// Band-restricted root mean of `per_bin` over the bins of each band.
BandErrors band_rms(const std::vector<double>& per_bin, const std::vector<std::uint8_t>& band) {
  double sum[3] = {0.0, 0.0, 0.0};
  std::size_t count[3] = {0, 0, 0};
  double all = 0.0;
  for (std::size_t i = 0; i < per_bin.size(); ++i) {
    sum[band[i]] += per_bin[i];
    ++count[band[i]];
    all += per_bin[i];
  }
  auto rms = [](double s, std::size_t c) { return c == 0 ? 0.0 : std::sqrt(s / c); };
  return {rms(sum[0], count[0]), rms(sum[1], count[1]), rms(sum[2], count[2]),
          rms(all, per_bin.size())};
}

struct PlaneSpectra {
  BandErrors f;
  BandErrors e;
  BandErrors scale;
};

PlaneSpectra plane_spectra(const fft::Plan2d& plan, const std::vector<std::uint8_t>& band,
                           const double* pred, const double* truth) {
  const auto fp = spectrum(plan, pred);
  const auto ft = spectrum(plan, truth);
  std::vector<double> diff(fp.size());
  std::vector<double> energy(fp.size());
  std::vector<double> truth4(fp.size());
  for (std::size_t i = 0; i < fp.size(); ++i) {
    diff[i] = std::norm(fp[i] - ft[i]);
    const double d = std::norm(fp[i]) - std::norm(ft[i]);
    energy[i] = d * d;
    truth4[i] = std::norm(ft[i]) * std::norm(ft[i]);
  }
  return {band_rms(diff, band), band_rms(energy, band), band_rms(truth4, band)};
}

double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

void BandSpec::validate() const {
  if (!(low_fraction > 0.0) || !(mid_fraction > 0.0) || !(low_fraction + mid_fraction < 1.0)) {
    throw ValidationError("bands: need 0 < low < low + mid < 1");
  }
}

std::vector<std::uint8_t> BandSpec::band_map(int h, int w) const {
  validate();
  const int kmax = max_shell(h, w);
  const long low_cut = std::lround(low_fraction * kmax);
  const long mid_cut = std::lround((low_fraction + mid_fraction) * kmax);
  const auto shells = shell_map(h, w);
  std::vector<std::uint8_t> band(shells.size());
  for (std::size_t i = 0; i < shells.size(); ++i) {
    band[i] = shells[i] <= low_cut ? 0 : (shells[i] <= mid_cut ? 1 : 2);
  }
  return band;
}

std::vector<std::string> MetricsReport::columns() {
  return {"rel_error", "rmse",   "brmse",  "bubble_rmse", "max_mean",     "max_max",
          "F_low",     "F_mid",  "F_high", "E_F_total",   "E_F_low",      "E_F_mid",
          "E_F_high",  "rel_E_F_total", "rel_E_F_low", "rel_E_F_mid", "rel_E_F_high"};
}

std::vector<double> MetricsReport::values() const {
  return {rel_error, rmse,    brmse,   bubble_rmse, max_mean,     max_max,
          f_low,     f_mid,   f_high,  ef_total,    ef_low,       ef_mid,
          ef_high,   rel_ef_total, rel_ef_low, rel_ef_mid, rel_ef_high};
}

void write_csv_header(std::ostream& os, const std::vector<std::string>& leading) {
  bool first = true;
  for (const auto& c : leading) {
    os << (first ? "" : ",") << c;
    first = false;
  }
  for (const auto& c : MetricsReport::columns()) {
    os << (first ? "" : ",") << c;
    first = false;
  }
  os << "\n";
}

void write_csv_row(std::ostream& os, const MetricsReport& r,
                   const std::vector<std::string>& leading) {
  bool first = true;
  for (const auto& c : leading) {
    os << (first ? "" : ",") << c;
    first = false;
  }
  os << std::setprecision(17);
  for (double v : r.values()) {
    os << (first ? "" : ",") << v;
    first = false;
  }
  os << "\n";
}

void print_table(std::ostream& os, const MetricsReport& r) {
  const auto cols = MetricsReport::columns();
  const auto vals = r.values();
  for (std::size_t i = 0; i < cols.size(); ++i) {
    os << std::left << std::setw(16) << cols[i] << std::scientific << std::setprecision(6)
       << vals[i] << "\n";
  }
  os << std::defaultfloat;
}

double rmse(const Tensor<double>& pred, const Tensor<double>& truth) {
  require_match(pred, truth, "rmse");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

double rel_error(const Tensor<double>& pred, const Tensor<double>& truth) {
  require_match(pred, truth, "rel_error");
  const Shape s = pred.shape();
  const std::size_t per = pred.size() / s.n;
  double total = 0.0;
  for (int n = 0; n < s.n; ++n) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
      const double d = pred[i] - truth[i];
      num += d * d;
      den += truth[i] * truth[i];
    }
    if (den == 0.0) throw ValidationError("rel_error: truth sample has zero norm");
    total += std::sqrt(num / den);
  }
  return total / s.n;
}

double max_mean(const Tensor<double>& pred, const Tensor<double>& truth) {
  require_match(pred, truth, "max_mean");
  const Shape s = pred.shape();
  const std::size_t per = pred.size() / s.n;
  double total = 0.0;
  for (int n = 0; n < s.n; ++n) {
    double m = 0.0;
    for (std::size_t i = n * per; i < (n + 1) * per; ++i) m = std::max(m, std::abs(pred[i] - truth[i]));
    total += m;
  }
  return total / s.n;
}

double max_max(const Tensor<double>& pred, const Tensor<double>& truth) {
  require_match(pred, truth, "max_max");
  double m = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) m = std::max(m, std::abs(pred[i] - truth[i]));
  return m;
}

double brmse(const Tensor<double>& pred, const Tensor<double>& truth) {
  require_match(pred, truth, "brmse");
  const Shape s = pred.shape();
  if (s.h < 2 || s.w < 2) throw ValidationError("brmse: planes must be at least 2x2");
  double acc = 0.0;
  std::size_t count = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* p = pred.plane(n, c);
      const double* t = truth.plane(n, c);
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          if (y != 0 && y != s.h - 1 && x != 0 && x != s.w - 1) continue;
          const double d = p[y * s.w + x] - t[y * s.w + x];
          acc += d * d;
          ++count;
        }
      }
    }
  }
  return std::sqrt(acc / count);
}

double masked_rmse(const Tensor<double>& pred, const Tensor<double>& truth,
                   const std::vector<std::uint8_t>& mask) {
  require_match(pred, truth, "masked_rmse");
  const Shape s = pred.shape();
  const std::size_t plane = s.plane();
  const bool per_channel = mask.size() == pred.size();
  if (!per_channel && mask.size() != static_cast<std::size_t>(s.n) * plane) {
    throw ValidationError("masked_rmse: mask must cover (n, c, h, w) or (n, h, w)");
  }
  double acc = 0.0;
  std::size_t count = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
      const std::size_t mbase = per_channel ? base : static_cast<std::size_t>(n) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        if (!mask[mbase + i]) continue;
        const double d = pred[base + i] - truth[base + i];
        acc += d * d;
        ++count;
      }
    }
  }
  if (count == 0) throw ValidationError("masked_rmse: mask selects no cells");
  return std::sqrt(acc / count);
}

std::vector<double> energy_spectrum(const double* field, int h, int w) {
  const auto f = spectrum(fft::Plan2d(h, w), field);
  const auto shells = shell_map(h, w);
  std::vector<double> p(max_shell(h, w) + 1, 0.0);
  const double norm = 1.0 / (static_cast<double>(h) * w);
  for (std::size_t i = 0; i < f.size(); ++i) p[shells[i]] += std::norm(f[i]) * norm;
  return p;
}

BandErrors f_band_error(const double* pred, const double* truth, int h, int w,
                        const BandSpec& bands) {
  return plane_spectra(fft::Plan2d(h, w), bands.band_map(h, w), pred, truth).f;
}

BandErrors spectrum_band_error(const double* pred, const double* truth, int h, int w,
                               const BandSpec& bands) {
  return plane_spectra(fft::Plan2d(h, w), bands.band_map(h, w), pred, truth).e;
}

BandErrors spectrum_band_scale(const double* truth, int h, int w, const BandSpec& bands) {
  return plane_spectra(fft::Plan2d(h, w), bands.band_map(h, w), truth, truth).scale;
}

double hf_energy_ratio(const double* field, int h, int w, double cutoff) {
  if (!(cutoff > 0.0 && cutoff < 1.0)) throw ValidationError("hf_energy_ratio: cutoff must lie in (0,1)");
  const auto p = energy_spectrum(field, h, w);
  const long cut = std::lround(cutoff * max_shell(h, w));
  double total = 0.0;
  double high = 0.0;
  for (std::size_t s = 1; s < p.size(); ++s) {
    total += p[s];
    if (static_cast<long>(s) > cut) high += p[s];
  }
  return total > 0.0 ? high / total : 0.0;
}

MetricsReport evaluate_metrics(const Tensor<double>& pred, const Tensor<double>& truth,
                               const BandSpec& bands, const std::vector<std::uint8_t>& mask) {
  require_match(pred, truth, "evaluate");
  MetricsReport r;
  r.rel_error = rel_error(pred, truth);
  r.rmse = rmse(pred, truth);
  r.brmse = brmse(pred, truth);
  r.bubble_rmse = mask.empty() ? 0.0 : masked_rmse(pred, truth, mask);
  r.max_mean = max_mean(pred, truth);
  r.max_max = max_max(pred, truth);

  const Shape s = pred.shape();
  const fft::Plan2d plan(s.h, s.w);
  const auto band = bands.band_map(s.h, s.w);
  const double planes = static_cast<double>(s.n) * s.c;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const auto ps = plane_spectra(plan, band, pred.plane(n, c), truth.plane(n, c));
      r.f_low += ps.f.low / planes;
      r.f_mid += ps.f.mid / planes;
      r.f_high += ps.f.high / planes;
      r.ef_total += ps.e.total / planes;
      r.ef_low += ps.e.low / planes;
      r.ef_mid += ps.e.mid / planes;
      r.ef_high += ps.e.high / planes;
      r.rel_ef_total += safe_ratio(ps.e.total, ps.scale.total) / planes;
      r.rel_ef_low += safe_ratio(ps.e.low, ps.scale.low) / planes;
      r.rel_ef_mid += safe_ratio(ps.e.mid, ps.scale.mid) / planes;
      r.rel_ef_high += safe_ratio(ps.e.high, ps.scale.high) / planes;
    }
  }
  return r;
}

}  // namespace specbias
