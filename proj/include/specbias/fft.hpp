#pragma once

#include <complex>
#include <vector>

namespace specbias::fft {

using cplx = std::complex<double>;

/// Mixed-radix complex FFT of one length. Radices 4, 2, 3, 5 use the
/// Cooley-Tukey recursion; any other prime factor falls back to a direct
/// DFT over that factor.
///
/// Forward is unnormalized (kernel e^{-2 pi i jk/n}); inverse applies 1/n.
class Plan {
 public:
  explicit Plan(int n);

  int size() const { return n_; }
  const std::vector<int>& factors() const { return factors_; }

  void forward(cplx* data) const { run(data, false); }
  void inverse(cplx* data) const { run(data, true); }

 private:
  void run(cplx* data, bool inverse) const;
  void recurse(const cplx* in, cplx* out, int n, int stride, std::size_t fi, bool inverse) const;

  int n_;
  std::vector<int> factors_;
  std::vector<cplx> twiddle_;
  std::vector<cplx> itwiddle_;
};

/// 2D transform over an h x w row-major grid.
class Plan2d {
 public:
  Plan2d(int h, int w) : rows_(w), cols_(h), h_(h), w_(w) {}

  int height() const { return h_; }
  int width() const { return w_; }

  void forward(std::vector<cplx>& grid) const { run(grid, false); }
  void inverse(std::vector<cplx>& grid) const { run(grid, true); }

 private:
  void run(std::vector<cplx>& grid, bool inverse) const;

  Plan rows_;
  Plan cols_;
  int h_;
  int w_;
};

/// Forward 2D transform of a real field.
template <typename T>
std::vector<cplx> forward_real(const T* field, int h, int w);

/// Signed integer frequency of bin i on an axis of length n (i <= n/2 maps to i).
inline int signed_frequency(int i, int n) { return i <= n / 2 ? i : i - n; }

}  // namespace specbias::fft
