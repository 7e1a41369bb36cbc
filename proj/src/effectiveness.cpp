#include "specbias/effectiveness.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "specbias/hfs.hpp"

namespace specbias {

Roi Roi::resolved(int field_h, int field_w) const {
  Roi r = *this;
  if (r.h == 0) r.h = field_h - r.y0;
  if (r.w == 0) r.w = field_w - r.x0;
  if (r.y0 < 0 || r.x0 < 0 || r.h <= 0 || r.w <= 0 || r.y0 + r.h > field_h || r.x0 + r.w > field_w) {
    throw ValidationError("roi (" + std::to_string(y0) + "," + std::to_string(x0) + "," +
                          std::to_string(h) + "," + std::to_string(w) + ") lies outside " +
                          std::to_string(field_h) + "x" + std::to_string(field_w));
  }
  return r;
}

void EffectivenessConfig::validate() const {
  if (patch < 1) throw ValidationError("effectiveness: patch must be positive");
  if (!(floor >= 0.0)) throw ValidationError("effectiveness: floor must be non-negative");
  if (!std::isfinite(lambda_dc) || !std::isfinite(lambda_hfc)) {
    throw ValidationError("effectiveness: lambdas must be finite");
  }
}

std::vector<double> gradient_magnitude(const double* f, int h, int w) {
  if (h < 3 || w < 3) throw ValidationError("gradient_magnitude: field must be at least 3x3");
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  auto at = [&](int y, int x) { return f[static_cast<std::size_t>(y) * w + x]; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = x == 0       ? at(y, 1) - at(y, 0)
                        : x == w - 1 ? at(y, w - 1) - at(y, w - 2)
                                     : 0.5 * (at(y, x + 1) - at(y, x - 1));
      const double gy = y == 0       ? at(1, x) - at(0, x)
                        : y == h - 1 ? at(h - 1, x) - at(h - 2, x)
                                     : 0.5 * (at(y + 1, x) - at(y - 1, x));
      out[static_cast<std::size_t>(y) * w + x] = std::sqrt(gx * gx + gy * gy);
    }
  }
  return out;
}

EffectivenessReport hfs_gradient_ratio(const double* field, int h, int w,
                                       const EffectivenessConfig& config) {
  config.validate();
  const Roi roi = config.roi.resolved(h, w);
  Tensor<double> x(Shape{1, 1, h, w});
  std::copy_n(field, x.size(), x.data());
  const Tensor<double> y =
      hfs_apply(x, HfsParams{{config.lambda_dc}, {config.lambda_hfc}, config.patch});

  EffectivenessReport r;
  r.h = h;
  r.w = w;
  r.baseline_grad = gradient_magnitude(x.data(), h, w);
  r.scaled_grad = gradient_magnitude(y.data(), h, w);
  r.ratio.assign(r.baseline_grad.size(), 0.0);
  double sum = 0.0;
  for (int yy = roi.y0; yy < roi.y0 + roi.h; ++yy) {
    for (int xx = roi.x0; xx < roi.x0 + roi.w; ++xx) {
      const std::size_t i = static_cast<std::size_t>(yy) * w + xx;
      if (r.baseline_grad[i] <= config.floor) continue;
      r.ratio[i] = r.scaled_grad[i] / r.baseline_grad[i];
      sum += r.ratio[i];
      ++r.counted;
    }
  }
  if (r.counted == 0) throw ValidationError("effectiveness: roi has no pixel above the gradient floor");
  r.mean_ratio = sum / r.counted;
  double var = 0.0;
  for (int yy = roi.y0; yy < roi.y0 + roi.h; ++yy) {
    for (int xx = roi.x0; xx < roi.x0 + roi.w; ++xx) {
      const std::size_t i = static_cast<std::size_t>(yy) * w + xx;
      if (r.baseline_grad[i] <= config.floor) continue;
      const double d = r.ratio[i] - r.mean_ratio;
      var += d * d;
    }
  }
  r.cv = std::sqrt(var / r.counted) / r.mean_ratio;
  return r;
}

FieldClass parse_field_class(const std::string& s) {
  if (s == "localized") return FieldClass::localized;
  if (s == "mixed") return FieldClass::mixed_scale;
  if (s == "noise") return FieldClass::white_noise;
  throw ValidationError("unknown field class '" + s + "' (expected localized|mixed|noise)");
}

std::string to_string(FieldClass k) {
  switch (k) {
    case FieldClass::localized:
      return "localized";
    case FieldClass::mixed_scale:
      return "mixed";
    case FieldClass::white_noise:
      return "noise";
  }
  return "localized";
}

std::vector<double> constructed_field(FieldClass kind, int h, int w, std::uint64_t seed) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> f(static_cast<std::size_t>(h) * w, 0.0);

  // Sharp disc of radius r at a random centre, edge width about one pixel.
  auto add_blob = [&](double amplitude, double radius) {
    const double cy = radius + unit(rng) * (h - 2.0 * radius);
    const double cx = radius + unit(rng) * (w - 2.0 * radius);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double d = std::hypot(y - cy, x - cx);
        f[static_cast<std::size_t>(y) * w + x] += amplitude * 0.5 * (1.0 - std::tanh(d - radius));
      }
    }
  };

  switch (kind) {
    case FieldClass::localized: {
      // Flat background with a faint texture repeating every 8 pixels, so
      // every far-field pixel has a gradient, plus one sharp feature.
      const double phase = kTwoPi * unit(rng);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          f[static_cast<std::size_t>(y) * w + x] =
              0.2 + 0.02 * std::sin(kTwoPi * x / 8.0 + phase) * std::cos(kTwoPi * y / 8.0);
        }
      }
      add_blob(1.0, 6.0 + 4.0 * unit(rng));
      break;
    }
    case FieldClass::mixed_scale: {
      // Large-scale waves carrying several features and broadband noise.
      for (int m = 1; m <= 3; ++m) {
        const double a = 0.3 / m;
        const double py = kTwoPi * unit(rng);
        const double px = kTwoPi * unit(rng);
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            f[static_cast<std::size_t>(y) * w + x] +=
                a * std::sin(kTwoPi * m * y / h + py) * std::cos(kTwoPi * m * x / w + px);
          }
        }
      }
      for (int b = 0; b < 3; ++b) add_blob(1.0, 4.0 + 4.0 * unit(rng));
      for (auto& v : f) v += 0.05 * normal(rng);
      break;
    }
    case FieldClass::white_noise:
      for (auto& v : f) v = normal(rng);
      break;
  }
  return f;
}

}  // namespace specbias
