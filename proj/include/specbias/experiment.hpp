#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "specbias/config.hpp"
#include "specbias/dataset.hpp"
#include "specbias/metrics.hpp"
#include "specbias/train.hpp"

namespace specbias {

using Progress = std::function<void(const std::string&)>;

/// `m` with channel counts and grid taken from the dataset's "omega" field.
ModelConfig model_for_dataset(ModelConfig m, const io::Dataset& d, int history);

/// Resolves a sweep entry: a preset name, or a bare integer base width
/// with the configured multipliers.
ModelConfig model_for_width(const ModelConfig& base, const std::string& width);

struct RunOutcome {
  ScalingVariant variant = ScalingVariant::none;
  std::uint64_t seed = 0;
  std::size_t parameters = 0;
  FitResult fit;
  MetricsReport test;
  std::vector<LambdaRow> lambdas;
  double median_iter_ms = 0.0;
};

/// Trains `model` on the train split, keeps the best validation checkpoint
/// and scores it on the test split. Writes logs, best.sblb and metrics.csv
/// into `dir` when it is non-empty.
RunOutcome train_and_test(const ModelConfig& model, const TrainConfig& train,
                          const BandSpec& bands, const io::Dataset& d, int history,
                          const std::filesystem::path& dir, const Progress& progress = {});

struct CompareSummary {
  std::vector<RunOutcome> baseline;
  std::vector<RunOutcome> hfs;
  double median_rel_error_baseline = 0.0;
  double median_rel_error_hfs = 0.0;
  double median_rel_ef_high_baseline = 0.0;
  double median_rel_ef_high_hfs = 0.0;
  /// Median rel_error(HFS) <= baseline and median Rel. E_F high(HFS) < baseline.
  bool directional_pass = false;
  /// Per seed: every layer has mean lambda_hfc > mean lambda_dc.
  std::vector<bool> lambda_hfc_dominates;
};

/// Baseline and HFS runs with identical hyperparameters, one pair per seed.
CompareSummary compare_variants(const RunConfig& cfg, const io::Dataset& d,
                                const std::filesystem::path& dir, const Progress& progress = {});

void write_compare(const std::filesystem::path& dir, const CompareSummary& s);

double median(std::vector<double> v);

/// Mean energy spectra of truth and prediction over a sample set, one curve
/// per predicted step.
struct SpectrumTable {
  int steps = 0;
  int shells = 0;
  /// [step][shell]
  std::vector<std::vector<double>> truth;
  std::vector<std::vector<double>> pred;
};
SpectrumTable spectra(const Tensor<double>& pred, const Tensor<double>& truth);
void write_spectra(const std::filesystem::path& path, const SpectrumTable& t);

template <typename T>
Tensor<double> predict_all(ResUNet<T>& model, const SampleSet& set, int batch_size);

/// Channel-mean hf_energy_ratio of every captured feature map. Encoder and
/// decoder level l use cutoffs[l]; the bottleneck uses the deepest cutoff.
struct LatentRatio {
  std::string component;
  int level = 0;
  int channels = 0;
  int h = 0;
  int w = 0;
  double cutoff = 0.0;
  double hf_ratio = 0.0;
  /// Channel-mean feature map, h x w.
  std::vector<double> mean_map;
};
std::vector<LatentRatio> latent_ratios(const std::vector<Latent>& latents,
                                       const std::vector<double>& cutoffs);
void write_latent_ratios(const std::filesystem::path& path, const std::vector<LatentRatio>& r);

/// Wall time of `iterations` training steps on random data, after one warm-up.
std::vector<double> time_iterations(const ModelConfig& model, int batch_size, int iterations,
                                    std::uint64_t seed);

}  // namespace specbias
