#include <cmath>
#include <numbers>

#include "specbias/autodiff.hpp"
#include "specbias/gemm.hpp"

namespace specbias {

namespace {

template <typename T>
void im2col(const T* x, int c, int h, int w, int k, int stride, int pad, int ho, int wo,
            T* cols) {
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  for (int ci = 0; ci < c; ++ci) {
    const T* xp = x + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * plane;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          T* r = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(r, r + wo, T(0));
            continue;
          }
          const T* xr = xp + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            r[ox] = (ix >= 0 && ix < w) ? xr[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, int c, int h, int w, int k, int stride, int pad, int ho, int wo,
            T* dx) {
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  for (int ci = 0; ci < c; ++ci) {
    T* dp = dx + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * plane;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          const T* r = row + static_cast<std::size_t>(oy) * wo;
          T* dr = dp + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) dr[ix] += r[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(int k, int stride, int pad) { return k == 1 && stride == 1 && pad == 0; }

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  const int k = ws.h;
  if (ws.h != ws.w || (k != 1 && k != 3)) {
    throw ValidationError("conv2d: kernel must be 1x1 or 3x3, got " + ws.str());
  }
  if (stride != 1 && stride != 2) throw ValidationError("conv2d: stride must be 1 or 2");
  if (ws.c != xs.c) {
    throw ValidationError("conv2d: input has " + std::to_string(xs.c) +
                          " channels, kernel expects " + std::to_string(ws.c));
  }
  if (b.shape() != Shape{1, ws.n, 1, 1}) {
    throw ValidationError("conv2d: bias shape " + b.shape().str() + " for " +
                          std::to_string(ws.n) + " output channels");
  }
  const int ho = (xs.h + 2 * pad - k) / stride + 1;
  const int wo = (xs.w + 2 * pad - k) / stride + 1;
  if (ho < 1 || wo < 1) throw ValidationError("conv2d: empty output for input " + xs.str());

  const int cout = ws.n;
  const int ckk = xs.c * k * k;
  const int plane = ho * wo;
  const bool pointwise = is_pointwise(k, stride, pad);

  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  const Tensor<T>& bv = b.value();
  Tensor<T> out(Shape{xs.n, cout, ho, wo});
  std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(ckk) * plane);
  for (int n = 0; n < xs.n; ++n) {
    T* y = out.plane(n, 0);
    for (int o = 0; o < cout; ++o) std::fill(y + o * plane, y + (o + 1) * plane, bv[o]);
    const T* src = xv.plane(n, 0);
    if (!pointwise) {
      im2col(src, xs.c, xs.h, xs.w, k, stride, pad, ho, wo, cols.data());
      src = cols.data();
    }
    gemm::nn(cout, plane, ckk, wv.data(), src, y);
  }

  Tape<T>& tape = *x.tape();
  if (!tape.needs_grad({x, w, b})) return tape.record(std::move(out), {x, w, b}, nullptr);

  const Tensor<T>* xp = &xv;
  const Tensor<T>* wp = &wv;
  auto fn = [xp, wp, xs, k, stride, pad, ho, wo, cout, ckk, plane, pointwise](
                const Tensor<T>& gy, std::span<Tensor<T>* const> gin) {
    std::vector<T> cols(static_cast<std::size_t>(ckk) * plane);
    for (int n = 0; n < xs.n; ++n) {
      const T* dy = gy.plane(n, 0);
      if (gin[1] != nullptr) {
        const T* src = xp->plane(n, 0);
        if (!pointwise) {
          im2col(src, xs.c, xs.h, xs.w, k, stride, pad, ho, wo, cols.data());
          src = cols.data();
        }
        gemm::nt(cout, ckk, plane, dy, src, gin[1]->data());
      }
      if (gin[2] != nullptr) {
        T* db = gin[2]->data();
        for (int o = 0; o < cout; ++o) {
          T s = 0;
          const T* r = dy + static_cast<std::size_t>(o) * plane;
          for (int p = 0; p < plane; ++p) s += r[p];
          db[o] += s;
        }
      }
      if (gin[0] != nullptr) {
        T* dx = gin[0]->plane(n, 0);
        if (pointwise) {
          gemm::tn(ckk, plane, cout, wp->data(), dy, dx);
        } else {
          std::fill(cols.begin(), cols.end(), T(0));
          gemm::tn(ckk, plane, cout, wp->data(), dy, cols.data());
          col2im(cols.data(), xs.c, xs.h, xs.w, k, stride, pad, ho, wo, dx);
        }
      }
    }
  };
  return tape.record(std::move(out), {x, w, b}, fn);
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  constexpr T kS = static_cast<T>(0.79788456080286535587989211986876);  // sqrt(2/pi)
  constexpr T kA = static_cast<T>(0.044715);
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T v = xv[i];
    out[i] = T(0.5) * v * (T(1) + std::tanh(kS * (v + kA * v * v * v)));
  }
  Tape<T>& tape = *x.tape();
  if (!tape.needs_grad({x})) return tape.record(std::move(out), {x}, nullptr);
  const Tensor<T>* xp = &xv;
  auto fn = [xp](const Tensor<T>& gy, std::span<Tensor<T>* const> gin) {
    Tensor<T>& gx = *gin[0];
    for (std::size_t i = 0; i < xp->size(); ++i) {
      const T v = (*xp)[i];
      const T t = std::tanh(kS * (v + kA * v * v * v));
      const T d = T(0.5) * (T(1) + t) +
                  T(0.5) * v * (T(1) - t * t) * kS * (T(1) + T(3) * kA * v * v);
      gx[i] += gy[i] * d;
    }
  };
  return tape.record(std::move(out), {x}, fn);
}

template <typename T>
Var<T> group_norm(const Var<T>& x, int groups, const Var<T>& gamma, const Var<T>& beta,
                  double eps) {
  const Shape s = x.shape();
  if (groups <= 0 || s.c % groups != 0) {
    throw ValidationError("group_norm: " + std::to_string(s.c) +
                          " channels not divisible into " + std::to_string(groups) + " groups");
  }
  if (gamma.shape() != Shape{1, s.c, 1, 1} || beta.shape() != Shape{1, s.c, 1, 1}) {
    throw ValidationError("group_norm: affine parameters must be (1," + std::to_string(s.c) +
                          ",1,1)");
  }
  const int cpg = s.c / groups;
  const std::size_t plane = s.plane();
  const std::size_t count = plane * cpg;
  const Tensor<T>& xv = x.value();
  const Tensor<T>& gv = gamma.value();
  const Tensor<T>& bv = beta.value();

  Tensor<T> xhat(s);
  std::vector<T> inv_std(static_cast<std::size_t>(s.n) * groups);
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int g = 0; g < groups; ++g) {
      const T* src = xv.plane(n, g * cpg);
      double mean = 0.0;
      for (std::size_t i = 0; i < count; ++i) mean += src[i];
      mean /= static_cast<double>(count);
      double var = 0.0;
      for (std::size_t i = 0; i < count; ++i) {
        const double d = src[i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(count);
      const double istd = 1.0 / std::sqrt(var + eps);
      inv_std[n * groups + g] = static_cast<T>(istd);
      T* xh = xhat.plane(n, g * cpg);
      T* dst = out.plane(n, g * cpg);
      for (int cc = 0; cc < cpg; ++cc) {
        const int c = g * cpg + cc;
        for (std::size_t i = 0; i < plane; ++i) {
          const std::size_t j = cc * plane + i;
          xh[j] = static_cast<T>((src[j] - mean) * istd);
          dst[j] = xh[j] * gv[c] + bv[c];
        }
      }
    }
  }

  Tape<T>& tape = *x.tape();
  if (!tape.needs_grad({x, gamma, beta})) {
    return tape.record(std::move(out), {x, gamma, beta}, nullptr);
  }
  const Tensor<T>* gp = &gv;
  auto fn = [xhat = std::move(xhat), inv_std = std::move(inv_std), gp, s, groups, cpg, plane,
             count](const Tensor<T>& gy, std::span<Tensor<T>* const> gin) {
    for (int n = 0; n < s.n; ++n) {
      for (int g = 0; g < groups; ++g) {
        const T* xh = xhat.plane(n, g * cpg);
        const T* dy = gy.plane(n, g * cpg);
        double sum_dxh = 0.0;
        double sum_dxh_xh = 0.0;
        for (int cc = 0; cc < cpg; ++cc) {
          const int c = g * cpg + cc;
          double sdy = 0.0;
          double sdy_xh = 0.0;
          for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t j = cc * plane + i;
            sdy += dy[j];
            sdy_xh += static_cast<double>(dy[j]) * xh[j];
          }
          if (gin[1] != nullptr) (*gin[1])[c] += static_cast<T>(sdy_xh);
          if (gin[2] != nullptr) (*gin[2])[c] += static_cast<T>(sdy);
          sum_dxh += sdy * (*gp)[c];
          sum_dxh_xh += sdy_xh * (*gp)[c];
        }
        if (gin[0] == nullptr) continue;
        const double m1 = sum_dxh / static_cast<double>(count);
        const double m2 = sum_dxh_xh / static_cast<double>(count);
        const double istd = inv_std[n * groups + g];
        T* dx = gin[0]->plane(n, g * cpg);
        for (int cc = 0; cc < cpg; ++cc) {
          const T gam = (*gp)[g * cpg + cc];
          for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t j = cc * plane + i;
            const double dxh = static_cast<double>(dy[j]) * gam;
            dx[j] += static_cast<T>(istd * (dxh - m1 - xh[j] * m2));
          }
        }
      }
    }
  };
  return tape.record(std::move(out), {x, gamma, beta}, std::move(fn));
}

template <typename T>
Var<T> upsample_nearest2x(const Var<T>& x) {
  const Shape s = x.shape();
  const Shape so{s.n, s.c, 2 * s.h, 2 * s.w};
  const Tensor<T>& xv = x.value();
  Tensor<T> out(so);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* src = xv.plane(n, c);
      T* dst = out.plane(n, c);
      for (int y = 0; y < so.h; ++y) {
        for (int xx = 0; xx < so.w; ++xx) dst[y * so.w + xx] = src[(y / 2) * s.w + xx / 2];
      }
    }
  }
  Tape<T>& tape = *x.tape();
  if (!tape.needs_grad({x})) return tape.record(std::move(out), {x}, nullptr);
  auto fn = [s, so](const Tensor<T>& gy, std::span<Tensor<T>* const> gin) {
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const T* g = gy.plane(n, c);
        T* dx = gin[0]->plane(n, c);
        for (int y = 0; y < s.h; ++y) {
          for (int xx = 0; xx < s.w; ++xx) {
            const T* r0 = g + (2 * y) * so.w + 2 * xx;
            const T* r1 = r0 + so.w;
            dx[y * s.w + xx] += (r0[0] + r0[1]) + (r1[0] + r1[1]);
          }
        }
      }
    }
  };
  return tape.record(std::move(out), {x}, fn);
}

template <typename T>
Var<T> downsample(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  if (x.shape().h % 2 != 0 || x.shape().w % 2 != 0) {
    throw ValidationError("downsample: odd spatial size " + x.shape().str());
  }
  return conv2d(x, w, b, 2, 1);
}

template <typename T>
Var<T> upsample(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  return conv2d(upsample_nearest2x(x), w, b, 1, 1);
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ValidationError("concat_channels: shape mismatch " + sa.str() + " vs " + sb.str());
  }
  const Shape so{sa.n, sa.c + sb.c, sa.h, sa.w};
  const std::size_t pa = sa.c * sa.plane();
  const std::size_t pb = sb.c * sb.plane();
  Tensor<T> out(so);
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a.value().plane(n, 0), pa, out.plane(n, 0));
    std::copy_n(b.value().plane(n, 0), pb, out.plane(n, sa.c));
  }
  Tape<T>& tape = *a.tape();
  if (!tape.needs_grad({a, b})) return tape.record(std::move(out), {a, b}, nullptr);
  auto fn = [sa, pa, pb](const Tensor<T>& gy, std::span<Tensor<T>* const> gin) {
    for (int n = 0; n < sa.n; ++n) {
      if (gin[0] != nullptr) {
        const T* g = gy.plane(n, 0);
        T* d = gin[0]->plane(n, 0);
        for (std::size_t i = 0; i < pa; ++i) d[i] += g[i];
      }
      if (gin[1] != nullptr) {
        const T* g = gy.plane(n, sa.c);
        T* d = gin[1]->plane(n, 0);
        for (std::size_t i = 0; i < pb; ++i) d[i] += g[i];
      }
    }
  };
  return tape.record(std::move(out), {a, b}, fn);
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor<T> out(a.shape());
  const T* av = a.value().data();
  const T* bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  Tape<T>& tape = *a.tape();
  if (!tape.needs_grad({a, b})) return tape.record(std::move(out), {a, b}, nullptr);
  auto fn = [](const Tensor<T>& gy, std::span<Tensor<T>* const> gin) {
    for (Tensor<T>* g : gin) {
      if (g == nullptr) continue;
      for (std::size_t i = 0; i < gy.size(); ++i) (*g)[i] += gy[i];
    }
  };
  return tape.record(std::move(out), {a, b}, fn);
}

template <typename T>
Var<T> scale_per_channel(const Var<T>& x, const Var<T>& lambda) {
  const Shape s = x.shape();
  if (lambda.shape() != Shape{1, s.c, 1, 1}) {
    throw ValidationError("scale_per_channel: lambda shape " + lambda.shape().str() +
                          " for input " + s.str());
  }
  const Tensor<T>& xv = x.value();
  const Tensor<T>& lv = lambda.value();
  const std::size_t plane = s.plane();
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* src = xv.plane(n, c);
      T* dst = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * lv[c];
    }
  }
  Tape<T>& tape = *x.tape();
  if (!tape.needs_grad({x, lambda})) return tape.record(std::move(out), {x, lambda}, nullptr);
  const Tensor<T>* xp = &xv;
  const Tensor<T>* lp = &lv;
  auto fn = [xp, lp, s, plane](const Tensor<T>& gy, std::span<Tensor<T>* const> gin) {
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const T* g = gy.plane(n, c);
        const T* src = xp->plane(n, c);
        if (gin[0] != nullptr) {
          T* d = gin[0]->plane(n, c);
          for (std::size_t i = 0; i < plane; ++i) d[i] += g[i] * (*lp)[c];
        }
        if (gin[1] != nullptr) {
          T acc = 0;
          for (std::size_t i = 0; i < plane; ++i) acc += g[i] * src[i];
          (*gin[1])[c] += acc;
        }
      }
    }
  };
  return tape.record(std::move(out), {x, lambda}, fn);
}

template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Var<T>& target) {
  require_same_shape(pred.value(), target.value(), "mse_loss");
  const Tensor<T>& pv = pred.value();
  const Tensor<T>& tv = target.value();
  const std::size_t count = pv.size();
  if (count == 0) throw ValidationError("mse_loss: empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = static_cast<double>(pv[i]) - tv[i];
    acc += d * d;
  }
  Tensor<T> out(Shape{1, 1, 1, 1}, static_cast<T>(acc / static_cast<double>(count)));
  Tape<T>& tape = *pred.tape();
  if (!tape.needs_grad({pred, target})) {
    return tape.record(std::move(out), {pred, target}, nullptr);
  }
  const Tensor<T>* pp = &pv;
  const Tensor<T>* tp = &tv;
  auto fn = [pp, tp, count](const Tensor<T>& gy, std::span<Tensor<T>* const> gin) {
    const T scale = gy[0] * T(2) / static_cast<T>(count);
    for (std::size_t i = 0; i < count; ++i) {
      const T d = scale * ((*pp)[i] - (*tp)[i]);
      if (gin[0] != nullptr) (*gin[0])[i] += d;
      if (gin[1] != nullptr) (*gin[1])[i] -= d;
    }
  };
  return tape.record(std::move(out), {pred, target}, fn);
}

template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& weights) {
  require_same_shape(x.value(), weights, "weighted_sum");
  const Tensor<T>& xv = x.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += static_cast<double>(xv[i]) * weights[i];
  Tensor<T> out(Shape{1, 1, 1, 1}, static_cast<T>(acc));
  Tape<T>& tape = *x.tape();
  if (!tape.needs_grad({x})) return tape.record(std::move(out), {x}, nullptr);
  auto fn = [weights](const Tensor<T>& gy, std::span<Tensor<T>* const> gin) {
    for (std::size_t i = 0; i < weights.size(); ++i) (*gin[0])[i] += gy[0] * weights[i];
  };
  return tape.record(std::move(out), {x}, fn);
}

#define SPECBIAS_INSTANTIATE_OPS(T)                                                        \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);          \
  template Var<T> gelu(const Var<T>&);                                                    \
  template Var<T> group_norm(const Var<T>&, int, const Var<T>&, const Var<T>&, double);   \
  template Var<T> upsample_nearest2x(const Var<T>&);                                      \
  template Var<T> downsample(const Var<T>&, const Var<T>&, const Var<T>&);                \
  template Var<T> upsample(const Var<T>&, const Var<T>&, const Var<T>&);                  \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);                          \
  template Var<T> add(const Var<T>&, const Var<T>&);                                      \
  template Var<T> scale_per_channel(const Var<T>&, const Var<T>&);                        \
  template Var<T> mse_loss(const Var<T>&, const Var<T>&);                                 \
  template Var<T> weighted_sum(const Var<T>&, const Tensor<T>&);

SPECBIAS_INSTANTIATE_OPS(float)
SPECBIAS_INSTANTIATE_OPS(double)

#undef SPECBIAS_INSTANTIATE_OPS

}  // namespace specbias
