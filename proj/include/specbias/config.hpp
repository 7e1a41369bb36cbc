#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "specbias/dataset.hpp"
#include "specbias/effectiveness.hpp"
#include "specbias/kolmogorov.hpp"
#include "specbias/metrics.hpp"
#include "specbias/model.hpp"
#include "specbias/train.hpp"

namespace specbias {

/// Flat `key = value` settings. Lines starting with '#' are comments; later
/// assignments override earlier ones. Every read marks the key as used so
/// that unknown (misspelled) keys can be rejected.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& origin = "<text>");
  static KeyValues load(const std::filesystem::path& path);

  /// Applies one "key=value" override.
  void assign(const std::string& assignment);
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Overwrites `target` when `key` is present; throws ValidationError on a
  /// malformed value.
  void read(const std::string& key, int& target) const;
  void read(const std::string& key, std::uint64_t& target) const;
  void read(const std::string& key, double& target) const;
  void read(const std::string& key, bool& target) const;
  void read(const std::string& key, std::string& target) const;
  void read(const std::string& key, std::vector<int>& target) const;
  void read(const std::string& key, std::vector<double>& target) const;
  void read(const std::string& key, std::vector<std::string>& target) const;

  /// Throws ValidationError naming every key that was never read.
  void reject_unused() const;

 private:
  const std::string* find(const std::string& key) const;

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

void read_model_config(const KeyValues& kv, ModelConfig& c, const std::string& prefix = "model.");
void write_model_config(std::map<std::string, std::string>& out, const ModelConfig& c,
                        const std::string& prefix = "model.");

/// Everything a CLI command needs, fully validated before any compute.
struct RunConfig {
  ModelConfig model;
  kolmogorov::SolverConfig solver;
  DataConfig data;
  TrainConfig train;
  BandSpec bands;
  EffectivenessConfig effectiveness;
  /// Preset names or base widths for `sweep`.
  std::vector<std::string> sweep_widths{"desk"};
  /// Scaling variants trained at every sweep width.
  std::vector<std::string> sweep_variants{"none", "hfs"};
  /// Seeds (model init and shuffling) for `compare`.
  std::vector<int> compare_seeds{0, 1, 2};
  /// Split scored by eval, spectrum and latents.
  std::string split = "test";
  /// Index within `split` of the sample whose latents are dumped.
  int latent_sample = 0;
  /// Synthetic input for `effectiveness` when `input` is empty:
  /// localized | mixed | noise, on a size x size grid, one per seed.
  std::string effectiveness_field = "localized";
  int effectiveness_size = 64;
  int effectiveness_seeds = 1;
  /// Snapshot used when `input` is a dataset; -1 is the last one.
  int effectiveness_frame = -1;
  /// Trajectory index used when `input` is a dataset.
  int effectiveness_sample = 0;
  std::string dataset = "data/kolmogorov.sbds";
  std::string checkpoint;
  std::string input;
  std::filesystem::path out = "runs/default";
  std::uint64_t seed = 0;
  bool deterministic = false;
  /// Latent hf_energy_ratio cutoff per encoder level, finest first.
  std::vector<double> latent_cutoffs{0.125, 0.1875, 0.25, 0.375, 0.5};

  static RunConfig from(const KeyValues& kv);
  void validate() const;
  /// Canonical key = value text; parsing it back yields the same config.
  std::string resolved_text() const;
};

}  // namespace specbias
