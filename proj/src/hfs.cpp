#include "specbias/hfs.hpp"

#include <cmath>

#include "specbias/fft.hpp"

namespace specbias {

void require_patch_divides(const Shape& s, int p) {
  if (p <= 0 || s.h % p != 0 || s.w % p != 0) {
    throw ValidationError("patch size " + std::to_string(p) + " does not divide spatial size " +
                          std::to_string(s.h) + "x" + std::to_string(s.w));
  }
}

template <typename T>
PatchSet<T> patchify(const Tensor<T>& x, int p) {
  const Shape s = x.shape();
  require_patch_divides(s, p);
  PatchSet<T> out;
  out.n = s.n;
  out.c = s.c;
  out.p = p;
  out.rows = s.h / p;
  out.cols = s.w / p;
  out.data.resize(x.size());
  for (int n = 0; n < s.n; ++n) {
    for (int i = 0; i < out.count(); ++i) {
      const int y0 = (i / out.cols) * p;
      const int x0 = (i % out.cols) * p;
      for (int c = 0; c < s.c; ++c) {
        for (int y = 0; y < p; ++y) {
          for (int xx = 0; xx < p; ++xx) out.at(n, i, c, y, xx) = x.at(n, c, y0 + y, x0 + xx);
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> unpatchify(const PatchSet<T>& patches) {
  const int p = patches.p;
  Tensor<T> out(Shape{patches.n, patches.c, patches.rows * p, patches.cols * p});
  for (int n = 0; n < patches.n; ++n) {
    for (int i = 0; i < patches.count(); ++i) {
      const int y0 = (i / patches.cols) * p;
      const int x0 = (i % patches.cols) * p;
      for (int c = 0; c < patches.c; ++c) {
        for (int y = 0; y < p; ++y) {
          for (int xx = 0; xx < p; ++xx) out.at(n, c, y0 + y, x0 + xx) = patches.at(n, i, c, y, xx);
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> compute_dc(const PatchSet<T>& patches) {
  const int p = patches.p;
  const int count = patches.count();
  if (count < 1) throw ValidationError("compute_dc: no patches");
  Tensor<T> dc(Shape{patches.n, patches.c, p, p});
  for (int n = 0; n < patches.n; ++n) {
    for (int c = 0; c < patches.c; ++c) {
      for (int y = 0; y < p; ++y) {
        for (int x = 0; x < p; ++x) {
          T acc = 0;
          for (int i = 0; i < count; ++i) acc += patches.at(n, i, c, y, x);
          dc.at(n, c, y, x) = acc / static_cast<T>(count);
        }
      }
    }
  }
  return dc;
}

template <typename T>
PatchSet<T> compute_hfc(const PatchSet<T>& patches, const Tensor<T>& dc) {
  if (dc.shape() != Shape{patches.n, patches.c, patches.p, patches.p}) {
    throw ValidationError("compute_hfc: DC shape " + dc.shape().str() + " does not match patches");
  }
  PatchSet<T> out = patches;
  for (int n = 0; n < patches.n; ++n) {
    for (int i = 0; i < patches.count(); ++i) {
      for (int c = 0; c < patches.c; ++c) {
        for (int y = 0; y < patches.p; ++y) {
          for (int x = 0; x < patches.p; ++x) out.at(n, i, c, y, x) -= dc.at(n, c, y, x);
        }
      }
    }
  }
  return out;
}

namespace {

// Mean patch of one (n, c) plane, accumulated in patch order.
template <typename T>
void plane_dc(const T* src, int h, int w, int p, T* dc) {
  const int rows = h / p;
  const int cols = w / p;
  std::fill(dc, dc + p * p, T(0));
  for (int r = 0; r < rows; ++r) {
    for (int q = 0; q < cols; ++q) {
      for (int y = 0; y < p; ++y) {
        const T* row = src + static_cast<std::size_t>(r * p + y) * w + q * p;
        T* d = dc + y * p;
        for (int x = 0; x < p; ++x) d[x] += row[x];
      }
    }
  }
  const T inv = T(1) / static_cast<T>(rows * cols);
  for (int i = 0; i < p * p; ++i) dc[i] *= inv;
}

template <typename T>
void check_lambda(const Var<T>& l, int c, const char* what) {
  if (l.shape() != Shape{1, c, 1, 1}) {
    throw ValidationError(std::string(what) + ": lambda shape " + l.shape().str() +
                          " does not match " + std::to_string(c) + " channels");
  }
}

}  // namespace

template <typename T>
Var<T> hfs_apply(const Var<T>& x, const Var<T>& lambda_dc, const Var<T>& lambda_hfc,
                 int patch_size) {
  const Shape s = x.shape();
  const int p = patch_size;
  require_patch_divides(s, p);
  check_lambda(lambda_dc, s.c, "hfs_apply");
  check_lambda(lambda_hfc, s.c, "hfs_apply");

  const Tensor<T>& xv = x.value();
  const Tensor<T>& ldc = lambda_dc.value();
  const Tensor<T>& lhf = lambda_hfc.value();
  const std::size_t pp = static_cast<std::size_t>(p) * p;
  std::vector<T> dc(static_cast<std::size_t>(s.n) * s.c * pp);
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      T* d = dc.data() + (static_cast<std::size_t>(n) * s.c + c) * pp;
      const T* src = xv.plane(n, c);
      plane_dc(src, s.h, s.w, p, d);
      T* dst = out.plane(n, c);
      const T a = ldc[c];
      const T b = lhf[c];
      for (int y = 0; y < s.h; ++y) {
        const T* drow = d + (y % p) * p;
        for (int xx = 0; xx < s.w; ++xx) {
          const std::size_t j = static_cast<std::size_t>(y) * s.w + xx;
          const T m = drow[xx % p];
          dst[j] = src[j] + a * m + b * (src[j] - m);
        }
      }
    }
  }

  Tape<T>& tape = *x.tape();
  if (!tape.needs_grad({x, lambda_dc, lambda_hfc})) {
    return tape.record(std::move(out), {x, lambda_dc, lambda_hfc}, nullptr);
  }
  const Tensor<T>* xp = &xv;
  const Tensor<T>* ap = &ldc;
  const Tensor<T>* bp = &lhf;
  auto fn = [xp, ap, bp, dc = std::move(dc), s, p, pp](const Tensor<T>& gy,
                                                        std::span<Tensor<T>* const> gin) {
    std::vector<T> gmean(pp);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const T* d = dc.data() + (static_cast<std::size_t>(n) * s.c + c) * pp;
        const T* g = gy.plane(n, c);
        const T* src = xp->plane(n, c);
        const T a = (*ap)[c];
        const T b = (*bp)[c];
        T acc_dc = 0;
        T acc_hf = 0;
        for (int y = 0; y < s.h; ++y) {
          const T* drow = d + (y % p) * p;
          for (int xx = 0; xx < s.w; ++xx) {
            const std::size_t j = static_cast<std::size_t>(y) * s.w + xx;
            const T m = drow[xx % p];
            acc_dc += g[j] * m;
            acc_hf += g[j] * (src[j] - m);
          }
        }
        if (gin[1] != nullptr) (*gin[1])[c] += acc_dc;
        if (gin[2] != nullptr) (*gin[2])[c] += acc_hf;
        if (gin[0] == nullptr) continue;
        plane_dc(g, s.h, s.w, p, gmean.data());
        T* dx = gin[0]->plane(n, c);
        const T direct = T(1) + b;
        const T shared = a - b;
        for (int y = 0; y < s.h; ++y) {
          const T* grow = gmean.data() + (y % p) * p;
          for (int xx = 0; xx < s.w; ++xx) {
            const std::size_t j = static_cast<std::size_t>(y) * s.w + xx;
            dx[j] += direct * g[j] + shared * grow[xx % p];
          }
        }
      }
    }
  };
  return tape.record(std::move(out), {x, lambda_dc, lambda_hfc}, std::move(fn));
}

template <typename T>
Tensor<T> hfs_apply(const Tensor<T>& x, const HfsParams& params) {
  const int c = x.shape().c;
  if (static_cast<int>(params.lambda_dc.size()) != c ||
      static_cast<int>(params.lambda_hfc.size()) != c) {
    throw ValidationError("hfs_apply: lambda vectors must have one entry per channel");
  }
  Tape<T> tape;
  tape.set_grad_enabled(false);
  Tensor<T> ldc(Shape{1, c, 1, 1});
  Tensor<T> lhf(Shape{1, c, 1, 1});
  for (int i = 0; i < c; ++i) {
    ldc[i] = static_cast<T>(params.lambda_dc[i]);
    lhf[i] = static_cast<T>(params.lambda_hfc[i]);
  }
  auto out = hfs_apply(tape.input(x), tape.input(std::move(ldc)), tape.input(std::move(lhf)),
                       params.patch_size);
  return out.value();
}

int max_shell(int h, int w) { return radial_shell(h / 2, w / 2); }

std::vector<int> shell_map(int h, int w) {
  std::vector<int> shells(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    const int ky = fft::signed_frequency(y, h);
    for (int x = 0; x < w; ++x) {
      shells[static_cast<std::size_t>(y) * w + x] = radial_shell(ky, fft::signed_frequency(x, w));
    }
  }
  return shells;
}

std::vector<std::uint8_t> low_frequency_mask(int h, int w, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("fourier_scale: tau must lie in (0,1)");
  const int cutoff = static_cast<int>(std::lround(tau * max_shell(h, w)));
  const auto shells = shell_map(h, w);
  std::vector<std::uint8_t> mask(shells.size());
  for (std::size_t i = 0; i < shells.size(); ++i) mask[i] = shells[i] <= cutoff ? 1 : 0;
  return mask;
}

namespace {

constexpr double kImagTolerance = 1e-6;

// Splits one real plane into its low-band part using the radial mask.
template <typename T>
void low_band(const T* src, const fft::Plan2d& plan,
              const std::vector<std::uint8_t>& mask, std::vector<fft::cplx>& work, T* low) {
  for (std::size_t i = 0; i < work.size(); ++i) work[i] = fft::cplx(static_cast<double>(src[i]), 0.0);
  plan.forward(work);
  for (std::size_t i = 0; i < work.size(); ++i) {
    if (mask[i] == 0) work[i] = 0.0;
  }
  plan.inverse(work);
  double residue = 0.0;
  for (std::size_t i = 0; i < work.size(); ++i) {
    residue = std::max(residue, std::abs(work[i].imag()));
    low[i] = static_cast<T>(work[i].real());
  }
  if (residue > kImagTolerance) {
    throw NumericalError("fourier_scale: imaginary residue " + std::to_string(residue) +
                         " exceeds tolerance (asymmetric frequency mask)");
  }
}

}  // namespace

template <typename T>
Var<T> fourier_scale(const Var<T>& x, const Var<T>& lambda_low, const Var<T>& lambda_high,
                     double tau) {
  const Shape s = x.shape();
  check_lambda(lambda_low, s.c, "fourier_scale");
  check_lambda(lambda_high, s.c, "fourier_scale");
  const auto mask = low_frequency_mask(s.h, s.w, tau);
  const fft::Plan2d plan(s.h, s.w);
  std::vector<fft::cplx> work(s.plane());

  const Tensor<T>& xv = x.value();
  const Tensor<T>& lo = lambda_low.value();
  const Tensor<T>& hi = lambda_high.value();
  Tensor<T> xlow(s);
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* src = xv.plane(n, c);
      T* l = xlow.plane(n, c);
      low_band(src, plan, mask, work, l);
      T* dst = out.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) dst[i] = lo[c] * l[i] + hi[c] * (src[i] - l[i]);
    }
  }

  Tape<T>& tape = *x.tape();
  if (!tape.needs_grad({x, lambda_low, lambda_high})) {
    return tape.record(std::move(out), {x, lambda_low, lambda_high}, nullptr);
  }
  const Tensor<T>* xp = &xv;
  const Tensor<T>* lp = &lo;
  const Tensor<T>* hp = &hi;
  auto fn = [xp, lp, hp, xlow = std::move(xlow), mask, s](const Tensor<T>& gy,
                                                          std::span<Tensor<T>* const> gin) {
    const fft::Plan2d plan(s.h, s.w);
    std::vector<fft::cplx> work(s.plane());
    std::vector<T> glow(s.plane());
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const T* g = gy.plane(n, c);
        const T* src = xp->plane(n, c);
        const T* l = xlow.plane(n, c);
        T acc_lo = 0;
        T acc_hi = 0;
        for (std::size_t i = 0; i < s.plane(); ++i) {
          acc_lo += g[i] * l[i];
          acc_hi += g[i] * (src[i] - l[i]);
        }
        if (gin[1] != nullptr) (*gin[1])[c] += acc_lo;
        if (gin[2] != nullptr) (*gin[2])[c] += acc_hi;
        if (gin[0] == nullptr) continue;
        // The band-scaling operator is real-symmetric, so its adjoint is itself.
        low_band(g, plan, mask, work, glow.data());
        T* dx = gin[0]->plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) {
          dx[i] += (*lp)[c] * glow[i] + (*hp)[c] * (g[i] - glow[i]);
        }
      }
    }
  };
  return tape.record(std::move(out), {x, lambda_low, lambda_high}, std::move(fn));
}

template <typename T>
Tensor<T> fourier_scale(const Tensor<T>& x, const FourierScaleParams& params) {
  const int c = x.shape().c;
  if (static_cast<int>(params.lambda_low.size()) != c ||
      static_cast<int>(params.lambda_high.size()) != c) {
    throw ValidationError("fourier_scale: lambda vectors must have one entry per channel");
  }
  Tape<T> tape;
  tape.set_grad_enabled(false);
  Tensor<T> lo(Shape{1, c, 1, 1});
  Tensor<T> hi(Shape{1, c, 1, 1});
  for (int i = 0; i < c; ++i) {
    lo[i] = static_cast<T>(params.lambda_low[i]);
    hi[i] = static_cast<T>(params.lambda_high[i]);
  }
  auto out = fourier_scale(tape.input(x), tape.input(std::move(lo)), tape.input(std::move(hi)),
                           params.tau);
  return out.value();
}

#define SPECBIAS_INSTANTIATE_HFS(T)                                                          \
  template PatchSet<T> patchify(const Tensor<T>&, int);                                     \
  template Tensor<T> unpatchify(const PatchSet<T>&);                                        \
  template Tensor<T> compute_dc(const PatchSet<T>&);                                        \
  template PatchSet<T> compute_hfc(const PatchSet<T>&, const Tensor<T>&);                   \
  template Var<T> hfs_apply(const Var<T>&, const Var<T>&, const Var<T>&, int);              \
  template Tensor<T> hfs_apply(const Tensor<T>&, const HfsParams&);                         \
  template Var<T> fourier_scale(const Var<T>&, const Var<T>&, const Var<T>&, double);       \
  template Tensor<T> fourier_scale(const Tensor<T>&, const FourierScaleParams&);

SPECBIAS_INSTANTIATE_HFS(float)
SPECBIAS_INSTANTIATE_HFS(double)

#undef SPECBIAS_INSTANTIATE_HFS

}  // namespace specbias
