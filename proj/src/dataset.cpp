#include "specbias/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace specbias {

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split '" + s + "' (expected train|val|test)");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "train";
}

void DataConfig::validate() const {
  if (samples < 3) throw ValidationError("data: need at least 3 samples for three splits");
  if (!(train_fraction > 0.0) || !(val_fraction > 0.0) || !(train_fraction + val_fraction < 1.0)) {
    throw ValidationError("data: need 0 < train, 0 < val, train + val < 1");
  }
  if (history < 1) throw ValidationError("data: history must be positive");
  const auto c = split_counts();
  if (c[0] < 1 || c[1] < 1 || c[2] < 1) throw ValidationError("data: a split would be empty");
}

std::vector<int> DataConfig::split_counts() const {
  const int train = static_cast<int>(std::lround(train_fraction * samples));
  const int val = static_cast<int>(std::lround(val_fraction * samples));
  return {train, val, samples - train - val};
}

io::Dataset generate_kolmogorov(const kolmogorov::SolverConfig& solver, const DataConfig& data,
                                const std::function<void(int, int)>& progress) {
  solver.validate();
  data.validate();
  const int frames = solver.record_count();
  if (data.history >= frames) {
    throw ValidationError("data: history " + std::to_string(data.history) +
                          " leaves no target frames out of " + std::to_string(frames));
  }
  const kolmogorov::Solver s(solver);
  const int n = solver.grid;
  const std::size_t per = static_cast<std::size_t>(frames) * n * n;
  std::vector<double> raw(per * data.samples);
  nlohmann::json seeds = nlohmann::json::array();
  for (int i = 0; i < data.samples; ++i) {
    const std::uint64_t seed = data.first_seed + static_cast<std::uint64_t>(i);
    const auto traj = s.solve(seed);
    for (int j = 0; j < frames; ++j) {
      std::copy(traj.snapshots[j].begin(), traj.snapshots[j].end(),
                raw.begin() + i * per + static_cast<std::size_t>(j) * n * n);
    }
    seeds.push_back(seed);
    if (progress) progress(i + 1, data.samples);
  }

  const auto counts = data.split_counts();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < per * counts[0]; ++i) {
    lo = std::min(lo, raw[i]);
    hi = std::max(hi, raw[i]);
  }
  if (!(hi > lo)) throw NumericalError("gen-data: train split is constant, cannot normalize");

  Tensor<float> omega(Shape{data.samples, frames, n, n});
  for (std::size_t i = 0; i < raw.size(); ++i) {
    omega[i] = static_cast<float>(2.0 * (raw[i] - lo) / (hi - lo) - 1.0);
  }
  io::Field field = io::Field::from_tensor("omega", omega);
  field.dt = solver.record_dt;
  field.norm_min = lo;
  field.norm_max = hi;

  io::Dataset d;
  d.fields.push_back(std::move(field));
  auto& m = d.manifest;
  m["kind"] = "kolmogorov";
  m["solver"] = {{"grid", solver.grid},
                 {"domain", solver.domain == kolmogorov::Domain::unit ? "unit" : "two_pi"},
                 {"nu", solver.nu},
                 {"chi", solver.chi},
                 {"dt", solver.dt},
                 {"t_final", solver.t_final},
                 {"record_dt", solver.record_dt}};
  m["seeds"] = seeds;
  m["history"] = data.history;
  m["normalization"] = {{"field", "omega"}, {"min", lo}, {"max", hi}, {"source", "train"}};
  m["split"] = {{"train", nlohmann::json::array()},
                {"val", nlohmann::json::array()},
                {"test", nlohmann::json::array()}};
  for (int i = 0; i < data.samples; ++i) {
    const char* which = i < counts[0] ? "train" : (i < counts[0] + counts[1] ? "val" : "test");
    m["split"][which].push_back(i);
  }
  m["masks"] = nlohmann::json::array();
  return d;
}

std::vector<int> split_indices(const io::Dataset& d, Split split) {
  const auto& m = d.manifest;
  const std::string key = to_string(split);
  if (!m.contains("split") || !m["split"].contains(key)) {
    throw ValidationError("dataset manifest has no '" + key + "' split");
  }
  std::vector<int> out;
  try {
    for (const auto& v : m["split"][key]) out.push_back(v.get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("dataset manifest split: ") + e.what());
  }
  return out;
}

SampleSet make_samples(const io::Dataset& d, Split split, int history) {
  const auto& f = d.field("omega");
  const Shape s = f.shape;
  if (history < 1 || history >= s.c) {
    throw ValidationError("history " + std::to_string(history) + " does not fit " +
                          std::to_string(s.c) + " snapshots");
  }
  const auto idx = split_indices(d, split);
  const auto all = f.tensor<float>();
  SampleSet out{Tensor<float>(Shape{static_cast<int>(idx.size()), history, s.h, s.w}),
                Tensor<float>(Shape{static_cast<int>(idx.size()), s.c - history, s.h, s.w})};
  const std::size_t plane = s.plane();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= s.n) throw ValidationError("split index out of range");
    const float* src = all.data() + static_cast<std::size_t>(idx[k]) * s.c * plane;
    std::copy_n(src, history * plane, out.inputs.data() + k * history * plane);
    std::copy_n(src + history * plane, (s.c - history) * plane,
                out.targets.data() + k * (s.c - history) * plane);
  }
  return out;
}

}  // namespace specbias
