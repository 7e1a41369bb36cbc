#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specbias/tensor.hpp"

namespace specbias {

/// Rectangle [y0, y0 + h) x [x0, x0 + w). A zero extent means the full field.
struct Roi {
  int y0 = 0;
  int x0 = 0;
  int h = 0;
  int w = 0;

  Roi resolved(int field_h, int field_w) const;
};

struct EffectivenessConfig {
  double lambda_dc = 0.85;
  double lambda_hfc = 1.15;
  int patch = 8;
  Roi roi;
  /// Pixels whose baseline gradient is at or below this are excluded.
  double floor = 1e-6;

  void validate() const;
};

struct EffectivenessReport {
  /// Full-field maps, row-major h x w.
  std::vector<double> baseline_grad;
  std::vector<double> scaled_grad;
  /// Ratio on roi pixels above the floor, zero elsewhere.
  std::vector<double> ratio;
  int h = 0;
  int w = 0;
  std::size_t counted = 0;
  double mean_ratio = 0.0;
  /// Coefficient of variation (population std / mean) of the counted ratios.
  double cv = 0.0;
};

/// sqrt(fx^2 + fy^2) with unit grid spacing: central differences inside,
/// one-sided first differences on the edges.
std::vector<double> gradient_magnitude(const double* field, int h, int w);

/// Applies HFS with scalar lambdas to a single-channel raw field and compares
/// gradient strength before and after. Throws ValidationError when no roi
/// pixel clears the floor.
EffectivenessReport hfs_gradient_ratio(const double* field, int h, int w,
                                       const EffectivenessConfig& config);

/// Constructed test fields for the effectiveness ordering, each h x w.
enum class FieldClass { localized, mixed_scale, white_noise };

/// "localized" | "mixed" | "noise".
FieldClass parse_field_class(const std::string& s);
std::string to_string(FieldClass k);

std::vector<double> constructed_field(FieldClass kind, int h, int w, std::uint64_t seed);

}  // namespace specbias
