#include "specbias/fft.hpp"

#include <numbers>

#include "specbias/tensor.hpp"

namespace specbias::fft {

Plan::Plan(int n) : n_(n) {
  if (n < 1) throw ValidationError("fft: length must be positive");
  int rest = n;
  for (int r : {4, 2, 3, 5}) {
    while (rest % r == 0) {
      factors_.push_back(r);
      rest /= r;
    }
  }
  for (int p = 7; rest > 1; p += 2) {
    while (rest % p == 0) {
      factors_.push_back(p);
      rest /= p;
    }
  }
  twiddle_.resize(n);
  for (int j = 0; j < n; ++j) {
    const double a = -2.0 * std::numbers::pi * j / n;
    twiddle_[j] = cplx(std::cos(a), std::sin(a));
  }
  itwiddle_.resize(n);
  for (int j = 0; j < n; ++j) itwiddle_[j] = std::conj(twiddle_[j]);
}

void Plan::recurse(const cplx* in, cplx* out, int n, int stride, std::size_t fi,
                   bool inverse) const {
  if (n == 1) {
    out[0] = in[0];
    return;
  }
  const int r = factors_[fi];
  const int m = n / r;
  for (int q = 0; q < r; ++q) recurse(in + q * stride, out + q * m, m, stride * r, fi + 1, inverse);

  const int step_n = n_ / n;
  const cplx* tw = inverse ? itwiddle_.data() : twiddle_.data();
  if (r == 2) {
    for (int k = 0; k < m; ++k) {
      const cplx a = out[k];
      const cplx b = out[k + m] * tw[static_cast<std::size_t>(k) * step_n];
      out[k] = a + b;
      out[k + m] = a - b;
    }
    return;
  }
  if (r == 4) {
    // -i for the forward kernel, +i for the inverse.
    const double rot = inverse ? 1.0 : -1.0;
    for (int k = 0; k < m; ++k) {
      const std::size_t s = static_cast<std::size_t>(k) * step_n;
      const cplx a0 = out[k];
      const cplx a1 = out[k + m] * tw[s];
      const cplx a2 = out[k + 2 * m] * tw[2 * s];
      const cplx a3 = out[k + 3 * m] * tw[3 * s];
      const cplx e0 = a0 + a2;
      const cplx e1 = a0 - a2;
      const cplx o0 = a1 + a3;
      const cplx d = a1 - a3;
      const cplx o1(-rot * d.imag(), rot * d.real());
      out[k] = e0 + o0;
      out[k + m] = e1 + o1;
      out[k + 2 * m] = e0 - o0;
      out[k + 3 * m] = e1 - o1;
    }
    return;
  }
  const int step_r = n_ / r;
  cplx t[8];
  std::vector<cplx> big;
  cplx* tq = t;
  if (r > 8) {
    big.resize(r);
    tq = big.data();
  }
  for (int k = 0; k < m; ++k) {
    for (int q = 0; q < r; ++q) tq[q] = out[k + q * m] * tw[static_cast<std::size_t>(q) * k * step_n];
    for (int s = 0; s < r; ++s) {
      cplx acc = tq[0];
      for (int q = 1; q < r; ++q) acc += tq[q] * tw[static_cast<std::size_t>((q * s) % r) * step_r];
      out[k + s * m] = acc;
    }
  }
}

void Plan::run(cplx* data, bool inverse) const {
  if (n_ == 1) return;
  std::vector<cplx> in(data, data + n_);
  recurse(in.data(), data, n_, 1, 0, inverse);
  if (inverse) {
    const double s = 1.0 / n_;
    for (int i = 0; i < n_; ++i) data[i] *= s;
  }
}

void Plan2d::run(std::vector<cplx>& grid, bool inverse) const {
  if (grid.size() != static_cast<std::size_t>(h_) * w_) {
    throw ValidationError("fft2: grid size does not match plan");
  }
  for (int y = 0; y < h_; ++y) {
    cplx* row = grid.data() + static_cast<std::size_t>(y) * w_;
    inverse ? rows_.inverse(row) : rows_.forward(row);
  }
  std::vector<cplx> col(h_);
  for (int x = 0; x < w_; ++x) {
    for (int y = 0; y < h_; ++y) col[y] = grid[static_cast<std::size_t>(y) * w_ + x];
    inverse ? cols_.inverse(col.data()) : cols_.forward(col.data());
    for (int y = 0; y < h_; ++y) grid[static_cast<std::size_t>(y) * w_ + x] = col[y];
  }
}

template <typename T>
std::vector<cplx> forward_real(const T* field, int h, int w) {
  std::vector<cplx> grid(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = cplx(static_cast<double>(field[i]), 0.0);
  Plan2d(h, w).forward(grid);
  return grid;
}

template std::vector<cplx> forward_real<float>(const float*, int, int);
template std::vector<cplx> forward_real<double>(const double*, int, int);

}  // namespace specbias::fft
