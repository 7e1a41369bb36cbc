#pragma once

#include <cstdint>
#include <vector>

#include "specbias/autodiff.hpp"

namespace specbias {

/// Per-channel DC / high-frequency scales and the patch size of one HFS site.
struct HfsParams {
  std::vector<double> lambda_dc;
  std::vector<double> lambda_hfc;
  int patch_size = 8;
};

/// Per-channel low/high scales and the radial cutoff of one Fourier scaling site.
struct FourierScaleParams {
  std::vector<double> lambda_low;
  std::vector<double> lambda_high;
  /// Cutoff as a fraction of the largest radial shell, in (0,1).
  double tau = 0.5;
};

/// Non-overlapping p x p patches of a feature map, laid out (n, N, c, p, p)
/// with patches in row-major order over the patch grid.
template <typename T>
struct PatchSet {
  int n = 0;
  int c = 0;
  int p = 0;
  int rows = 0;  ///< patches along height
  int cols = 0;  ///< patches along width
  std::vector<T> data;

  int count() const { return rows * cols; }
  std::size_t index(int ni, int i, int ci, int y, int x) const {
    return (((static_cast<std::size_t>(ni) * count() + i) * c + ci) * p + y) * p + x;
  }
  T& at(int ni, int i, int ci, int y, int x) { return data[index(ni, i, ci, y, x)]; }
  const T& at(int ni, int i, int ci, int y, int x) const { return data[index(ni, i, ci, y, x)]; }
};

/// Throws ValidationError unless p divides both spatial extents.
void require_patch_divides(const Shape& s, int p);

template <typename T>
PatchSet<T> patchify(const Tensor<T>& x, int p);

template <typename T>
Tensor<T> unpatchify(const PatchSet<T>& patches);

/// Mean patch across all patches, shape (n, c, p, p).
template <typename T>
Tensor<T> compute_dc(const PatchSet<T>& patches);

/// Each patch minus the mean patch.
template <typename T>
PatchSet<T> compute_hfc(const PatchSet<T>& patches, const Tensor<T>& dc);

/// Differentiable high-frequency scaling:
///   X^(i) + lambda_dc * DC(X) + lambda_hfc * (X^(i) - DC(X))
/// for every patch, re-assembled to the input layout. Lambdas are (1, c, 1, 1).
template <typename T>
Var<T> hfs_apply(const Var<T>& x, const Var<T>& lambda_dc, const Var<T>& lambda_hfc,
                 int patch_size);

/// Tape-free evaluation of the same map.
template <typename T>
Tensor<T> hfs_apply(const Tensor<T>& x, const HfsParams& params);

/// Rounded Euclidean radius of a signed frequency pair.
inline int radial_shell(int ky, int kx) {
  return static_cast<int>(std::lround(std::sqrt(static_cast<double>(ky) * ky +
                                                static_cast<double>(kx) * kx)));
}

/// Largest radial shell index present on an h x w grid.
int max_shell(int h, int w);

/// Shell index of every bin of an h x w DFT grid (row-major).
std::vector<int> shell_map(int h, int w);

/// 1 for bins whose shell is <= round(tau * max_shell), 0 otherwise.
std::vector<std::uint8_t> low_frequency_mask(int h, int w, double tau);

/// Differentiable frequency-domain scaling: per channel, transform, scale
/// the low and high radial bands separately, transform back.
template <typename T>
Var<T> fourier_scale(const Var<T>& x, const Var<T>& lambda_low, const Var<T>& lambda_high,
                     double tau);

template <typename T>
Tensor<T> fourier_scale(const Tensor<T>& x, const FourierScaleParams& params);

}  // namespace specbias
