#pragma once

#include <cstdint>
#include <vector>

#include "specbias/fft.hpp"

namespace specbias::kolmogorov {

using fft::cplx;

/// Periodic square domain. `unit` is (0,1)^2 with forcing on wavenumber
/// 2*pi*(1,1); `two_pi` is (0,2*pi)^2 with forcing on (1,1).
enum class Domain { unit, two_pi };

double domain_length(Domain d);

struct SolverConfig {
  int grid = 64;
  Domain domain = Domain::unit;
  double nu = 1e-3;
  double chi = 0.1;
  double dt = 1e-2;
  double t_final = 12.5;
  double record_dt = 0.5;
  double cfl_safety = 0.5;

  /// Throws ValidationError on non-positive parameters, grid < 16, or
  /// record_dt / t_final not integer multiples of dt / record_dt.
  void validate() const;
  int steps_per_record() const;
  int record_count() const;
};

/// Fourier coefficients of vorticity on an n x n grid (unnormalized forward DFT).
struct SpectralState {
  int n = 0;
  double length = 1.0;
  double t = 0.0;
  std::vector<cplx> w_hat;
};

struct TrajectoryRecord {
  int n = 0;
  double record_dt = 0.0;
  std::uint64_t seed = 0;
  double nu = 0.0;
  double chi = 0.0;
  /// Row-major real vorticity at t = (j+1) * record_dt.
  std::vector<std::vector<double>> snapshots;
};

/// Physical wavenumber of bin i on an axis of n points over length L.
double wavenumber(int i, int n, double length);

/// Zero-mean Gaussian random field whose Fourier amplitudes are
/// sqrt(14) * (|k|^2 + 196)^(-3/2) times unit complex white noise.
std::vector<double> grf_sample(int n, std::uint64_t seed, double length = 1.0);

std::vector<cplx> to_spectral(const std::vector<double>& field, int n);
std::vector<double> to_physical(const std::vector<cplx>& w_hat, int n);

/// Largest |imaginary part| of the inverse transform.
double imag_residue(const std::vector<cplx>& w_hat, int n);

struct Velocity {
  std::vector<cplx> ux;
  std::vector<cplx> uy;
};

/// psi = w / |k|^2 (zero at k = 0); u = (d psi/dy, -d psi/dx).
Velocity vorticity_to_velocity(const std::vector<cplx>& w_hat, int n, double length);

/// chi * (sin(k0 (x+y)) + cos(k0 (x+y))) with k0 = 2*pi / L on grid points j*L/n.
/// The sampled values do not depend on L.
std::vector<double> forcing_field(int n, double chi);

/// (1/2) mean of |u|^2.
double kinetic_energy(const SpectralState& s);
/// (1/2) mean of w^2.
double enstrophy(const SpectralState& s);

/// 1 where both |kx| and |ky| (integer frequencies) are <= n/3.
std::vector<std::uint8_t> dealias_mask(int n);

class Solver {
 public:
  explicit Solver(SolverConfig config);

  const SolverConfig& config() const { return config_; }

  SpectralState initial_state(const std::vector<double>& w0) const;

  /// max |u| * dt / dx for the current state.
  double cfl_number(const SpectralState& s, double dt) const;

  /// One Heun / Crank-Nicolson step. Throws NumericalError, leaving the state
  /// untouched, if the CFL number exceeds the safety factor.
  void step(SpectralState& s, double dt) const;

  /// Integrates from grf_sample(seed) and records every record_dt.
  TrajectoryRecord solve(std::uint64_t seed) const;
  TrajectoryRecord solve_from(const std::vector<double>& w0, std::uint64_t seed) const;

 private:
  /// -u . grad(w) + f in spectral space, dealiased.
  void rhs(const std::vector<cplx>& w_hat, std::vector<cplx>& out) const;

  SolverConfig config_;
  double length_;
  fft::Plan2d plan_;
  std::vector<double> kx_;
  std::vector<double> ky_;
  std::vector<double> k2_;
  std::vector<std::uint8_t> keep_;
  std::vector<cplx> forcing_hat_;
};

}  // namespace specbias::kolmogorov
