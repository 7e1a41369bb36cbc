#pragma once

#include <random>
#include <string>
#include <vector>

#include "specbias/autodiff.hpp"

namespace specbias::testing {

template <typename T = double>
Tensor<T> random_tensor(Shape s, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Tensor<T> t(s);
  for (auto& v : t.vec()) v = static_cast<T>(dist(rng));
  return t;
}

inline Parameter<double> random_param(const std::string& name, Shape s, std::mt19937_64& rng,
                                      double scale = 1.0) {
  return Parameter<double>(name, random_tensor(s, rng, scale));
}

inline std::vector<Parameter<double>*> ptrs(std::initializer_list<Parameter<double>*> list) {
  return std::vector<Parameter<double>*>(list);
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace specbias::testing
