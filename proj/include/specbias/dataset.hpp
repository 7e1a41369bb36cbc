#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "specbias/io.hpp"
#include "specbias/kolmogorov.hpp"
#include "specbias/train.hpp"

namespace specbias {

enum class Split { train, val, test };

Split parse_split(const std::string& s);
std::string to_string(Split s);

struct DataConfig {
  int samples = 250;
  std::uint64_t first_seed = 0;
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  /// Leading snapshots used as network input; the rest are targets.
  int history = 20;

  void validate() const;
  /// (train, val, test) counts: rounded fractions, remainder to test.
  std::vector<int> split_counts() const;
};

/// Solves one trajectory per seed and stores every snapshot in a single
/// "omega" field of shape (samples, snapshots, n, n), normalized to [-1, 1]
/// with the train split's min and max. The manifest records the solver
/// parameters, seeds, split membership and normalization bounds.
io::Dataset generate_kolmogorov(const kolmogorov::SolverConfig& solver, const DataConfig& data,
                                const std::function<void(int, int)>& progress = {});

/// Sample indices of one split, read from the manifest.
std::vector<int> split_indices(const io::Dataset& d, Split split);

/// Inputs are the first `history` snapshots of every trajectory in the
/// split, targets the remaining ones.
SampleSet make_samples(const io::Dataset& d, Split split, int history);

}  // namespace specbias
