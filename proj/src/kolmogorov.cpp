#include "specbias/kolmogorov.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "specbias/tensor.hpp"

namespace specbias::kolmogorov {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

int integral_ratio(double num, double den, const char* what) {
  const double r = num / den;
  const long v = std::lround(r);
  if (v < 1 || std::abs(r - static_cast<double>(v)) > 1e-9 * std::max(1.0, r)) {
    throw ValidationError(std::string("solver: ") + what + " is not an integer multiple");
  }
  return static_cast<int>(v);
}

std::size_t cells(int n) { return static_cast<std::size_t>(n) * n; }

}  // namespace

double domain_length(Domain d) { return d == Domain::unit ? 1.0 : kTwoPi; }

void SolverConfig::validate() const {
  if (grid < 16) throw ValidationError("solver: grid must be >= 16");
  if (!(nu > 0.0)) throw ValidationError("solver: nu must be positive");
  if (!(chi >= 0.0)) throw ValidationError("solver: chi must be non-negative");
  if (!(dt > 0.0) || !(t_final > 0.0) || !(record_dt > 0.0)) {
    throw ValidationError("solver: dt, t_final and record_dt must be positive");
  }
  if (!(cfl_safety > 0.0)) throw ValidationError("solver: cfl_safety must be positive");
  steps_per_record();
  record_count();
}

int SolverConfig::steps_per_record() const { return integral_ratio(record_dt, dt, "record_dt / dt"); }

int SolverConfig::record_count() const {
  return integral_ratio(t_final, record_dt, "t_final / record_dt");
}

double wavenumber(int i, int n, double length) {
  return kTwoPi / length * fft::signed_frequency(i, n);
}

std::vector<cplx> to_spectral(const std::vector<double>& field, int n) {
  if (field.size() != cells(n)) throw ValidationError("solver: field size does not match grid");
  return fft::forward_real(field.data(), n, n);
}

std::vector<double> to_physical(const std::vector<cplx>& w_hat, int n) {
  std::vector<cplx> grid = w_hat;
  fft::Plan2d(n, n).inverse(grid);
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out[i] = grid[i].real();
  return out;
}

double imag_residue(const std::vector<cplx>& w_hat, int n) {
  std::vector<cplx> grid = w_hat;
  fft::Plan2d(n, n).inverse(grid);
  double m = 0.0;
  for (const auto& v : grid) m = std::max(m, std::abs(v.imag()));
  return m;
}

std::vector<double> grf_sample(int n, std::uint64_t seed, double length) {
  if (n < 16) throw ValidationError("grf: grid must be >= 16");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> noise(cells(n));
  for (auto& v : noise) v = normal(rng);
  // Real white noise has E|noise_hat|^2 = n^2 and exact conjugate symmetry.
  auto w_hat = fft::forward_real(noise.data(), n, n);
  const double root14 = std::sqrt(14.0);
  for (int y = 0; y < n; ++y) {
    const double ky = wavenumber(y, n, length);
    for (int x = 0; x < n; ++x) {
      const double kx = wavenumber(x, n, length);
      const double amp = root14 * std::pow(kx * kx + ky * ky + 196.0, -1.5);
      w_hat[static_cast<std::size_t>(y) * n + x] *= n * amp;
    }
  }
  w_hat[0] = 0.0;
  return to_physical(w_hat, n);
}

Velocity vorticity_to_velocity(const std::vector<cplx>& w_hat, int n, double length) {
  if (w_hat.size() != cells(n)) throw ValidationError("velocity: size does not match grid");
  const cplx i1(0.0, 1.0);
  Velocity v{std::vector<cplx>(w_hat.size()), std::vector<cplx>(w_hat.size())};
  for (int y = 0; y < n; ++y) {
    const double ky = wavenumber(y, n, length);
    for (int x = 0; x < n; ++x) {
      const double kx = wavenumber(x, n, length);
      const double k2 = kx * kx + ky * ky;
      const std::size_t idx = static_cast<std::size_t>(y) * n + x;
      if (k2 == 0.0) continue;
      const cplx psi = w_hat[idx] / k2;
      v.ux[idx] = i1 * ky * psi;
      v.uy[idx] = -i1 * kx * psi;
    }
  }
  return v;
}

std::vector<double> forcing_field(int n, double chi) {
  std::vector<double> f(cells(n));
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double a = kTwoPi * static_cast<double>(x + y) / n;
      f[static_cast<std::size_t>(y) * n + x] = chi * (std::sin(a) + std::cos(a));
    }
  }
  return f;
}

double kinetic_energy(const SpectralState& s) {
  double acc = 0.0;
  for (int y = 0; y < s.n; ++y) {
    const double ky = wavenumber(y, s.n, s.length);
    for (int x = 0; x < s.n; ++x) {
      const double kx = wavenumber(x, s.n, s.length);
      const double k2 = kx * kx + ky * ky;
      if (k2 > 0.0) acc += std::norm(s.w_hat[static_cast<std::size_t>(y) * s.n + x]) / k2;
    }
  }
  const double n2 = static_cast<double>(cells(s.n));
  return 0.5 * acc / (n2 * n2);
}

double enstrophy(const SpectralState& s) {
  double acc = 0.0;
  for (const auto& v : s.w_hat) acc += std::norm(v);
  const double n2 = static_cast<double>(cells(s.n));
  return 0.5 * acc / (n2 * n2);
}

std::vector<std::uint8_t> dealias_mask(int n) {
  std::vector<std::uint8_t> keep(cells(n));
  const int cut = n / 3;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      keep[static_cast<std::size_t>(y) * n + x] =
          std::abs(fft::signed_frequency(y, n)) <= cut && std::abs(fft::signed_frequency(x, n)) <= cut;
    }
  }
  return keep;
}

Solver::Solver(SolverConfig config)
    : config_(config),
      length_(domain_length(config.domain)),
      plan_((config.validate(), config.grid), config.grid) {
  const int n = config_.grid;
  kx_.resize(cells(n));
  ky_.resize(cells(n));
  k2_.resize(cells(n));
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * n + x;
      kx_[idx] = wavenumber(x, n, length_);
      ky_[idx] = wavenumber(y, n, length_);
      k2_[idx] = kx_[idx] * kx_[idx] + ky_[idx] * ky_[idx];
    }
  }
  keep_ = dealias_mask(n);
  forcing_hat_ = to_spectral(forcing_field(n, config_.chi), n);
  forcing_hat_[0] = 0.0;
}

SpectralState Solver::initial_state(const std::vector<double>& w0) const {
  SpectralState s;
  s.n = config_.grid;
  s.length = length_;
  s.w_hat = to_spectral(w0, s.n);
  s.w_hat[0] = 0.0;
  return s;
}

void Solver::rhs(const std::vector<cplx>& w_hat, std::vector<cplx>& out) const {
  const std::size_t size = w_hat.size();
  const cplx i1(0.0, 1.0);
  // Two real fields per complex transform: u = (ux, uy), grad w = (wx, wy).
  std::vector<cplx> u(size);
  std::vector<cplx> g(size);
  for (std::size_t i = 0; i < size; ++i) {
    if (!keep_[i] || k2_[i] == 0.0) continue;
    const cplx w = w_hat[i];
    const cplx psi = w / k2_[i];
    const cplx ux = i1 * ky_[i] * psi;
    const cplx uy = -i1 * kx_[i] * psi;
    const cplx wx = i1 * kx_[i] * w;
    const cplx wy = i1 * ky_[i] * w;
    u[i] = ux + i1 * uy;
    g[i] = wx + i1 * wy;
  }
  plan_.inverse(u);
  plan_.inverse(g);
  for (std::size_t i = 0; i < size; ++i) {
    u[i] = cplx(u[i].real() * g[i].real() + u[i].imag() * g[i].imag(), 0.0);
  }
  plan_.forward(u);
  out.resize(size);
  for (std::size_t i = 0; i < size; ++i) out[i] = keep_[i] ? forcing_hat_[i] - u[i] : 0.0;
  // Advection of a divergence-free field has zero mean.
  out[0] = 0.0;
}

double Solver::cfl_number(const SpectralState& s, double dt) const {
  const cplx i1(0.0, 1.0);
  std::vector<cplx> u(s.w_hat.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (k2_[i] == 0.0) continue;
    const cplx psi = s.w_hat[i] / k2_[i];
    u[i] = i1 * ky_[i] * psi + i1 * (-i1 * kx_[i] * psi);
  }
  plan_.inverse(u);
  double umax = 0.0;
  for (const auto& v : u) umax = std::max(umax, std::abs(v));
  return umax * dt * config_.grid / length_;
}

void Solver::step(SpectralState& s, double dt) const {
  if (s.n != config_.grid || s.w_hat.size() != cells(s.n)) {
    throw ValidationError("solver: state does not match grid");
  }
  const double cfl = cfl_number(s, dt);
  if (!(cfl <= config_.cfl_safety)) {
    std::ostringstream msg;
    msg << "solver: CFL number " << cfl << " exceeds " << config_.cfl_safety << " at t=" << s.t
        << "; step refused";
    throw NumericalError(msg.str());
  }
  const double nu = config_.nu;
  std::vector<cplx> n0;
  std::vector<cplx> n1;
  rhs(s.w_hat, n0);
  std::vector<cplx> pred(s.w_hat.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double a = 0.5 * nu * k2_[i] * dt;
    pred[i] = ((1.0 - a) * s.w_hat[i] + dt * n0[i]) / (1.0 + a);
  }
  rhs(pred, n1);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double a = 0.5 * nu * k2_[i] * dt;
    s.w_hat[i] = ((1.0 - a) * s.w_hat[i] + 0.5 * dt * (n0[i] + n1[i])) / (1.0 + a);
  }
  s.t += dt;
}

TrajectoryRecord Solver::solve(std::uint64_t seed) const {
  return solve_from(grf_sample(config_.grid, seed, length_), seed);
}

TrajectoryRecord Solver::solve_from(const std::vector<double>& w0, std::uint64_t seed) const {
  TrajectoryRecord rec;
  rec.n = config_.grid;
  rec.record_dt = config_.record_dt;
  rec.seed = seed;
  rec.nu = config_.nu;
  rec.chi = config_.chi;
  SpectralState s = initial_state(w0);
  const int per = config_.steps_per_record();
  const int count = config_.record_count();
  for (int j = 0; j < count; ++j) {
    for (int k = 0; k < per; ++k) step(s, config_.dt);
    auto snap = to_physical(s.w_hat, s.n);
    for (double v : snap) {
      if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << "solver: non-finite vorticity at t=" << s.t << " (seed " << seed << ")";
        throw NumericalError(msg.str());
      }
    }
    rec.snapshots.push_back(std::move(snap));
  }
  return rec;
}

}  // namespace specbias::kolmogorov
