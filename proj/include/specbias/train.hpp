#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "specbias/autodiff.hpp"
#include "specbias/metrics.hpp"
#include "specbias/model.hpp"

namespace specbias {

struct LionConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 0.05;

  void validate() const;
};

/// Sign-of-interpolated-momentum optimizer with decoupled weight decay.
/// Parameters with decay == false (the scaling lambdas) never decay.
template <typename T>
class Lion {
 public:
  Lion(std::vector<Parameter<T>*> params, LionConfig config);

  /// One update at learning rate `lr`. Throws NumericalError and leaves every
  /// parameter and momentum untouched when any gradient is non-finite.
  void step(double lr);

  const LionConfig& config() const { return config_; }
  const std::vector<Tensor<T>>& momentum() const { return m_; }
  std::vector<Tensor<T>>& momentum() { return m_; }

 private:
  std::vector<Parameter<T>*> params_;
  LionConfig config_;
  std::vector<Tensor<T>> m_;
};
extern template class Lion<float>;
extern template class Lion<double>;

/// Global L2 norm over every gradient; scales all of them by max_norm / norm
/// when the norm exceeds max_norm. Returns the pre-clip norm.
template <typename T>
double clip_grad_norm(const std::vector<Parameter<T>*>& params, double max_norm);

struct TrainConfig {
  int epochs = 300;
  /// First epoch of the learning-rate decay.
  int decay_start = 210;
  int decay_steps = 10;
  double lr = 8e-4;
  double lr_final = 8e-5;
  int batch_size = 8;
  double clip_norm = 1.0;
  LionConfig lion;
  std::uint64_t seed = 0;
  /// Validation every this many epochs (and always after the last one).
  int eval_every = 1;

  void validate() const;
};

/// Constant lr before decay_start, then decay_steps equal steps down to
/// lr_final, reached exactly at the final epoch.
double lr_at(int epoch, const TrainConfig& config);

/// Paired network inputs (history frames) and targets (future frames).
struct SampleSet {
  Tensor<float> inputs;
  Tensor<float> targets;

  int size() const { return inputs.shape().n; }
  void validate() const;
  /// Rows `indices` of both tensors.
  SampleSet gather(const std::vector<int>& indices) const;
};

struct IterationLog {
  long iteration = 0;
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  double iter_ms = 0.0;
};

struct EvalLog {
  int epoch = 0;
  long iteration = 0;
  double val_loss = 0.0;
};

struct LambdaLog {
  long iteration = 0;
  std::vector<LambdaRow> rows;
};

struct FitResult {
  std::vector<IterationLog> iterations;
  std::vector<EvalLog> evals;
  std::vector<LambdaLog> lambdas;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  double final_val_loss = 0.0;
  /// Set when a non-finite loss stopped training; the model then holds the
  /// best checkpoint seen before the divergence.
  bool diverged = false;
  std::string divergence;
};

/// Forward, mean-squared loss over every predicted step, backward, clip and
/// Lion update for one mini-batch. Returns the loss before the update.
template <typename T>
double train_step(ResUNet<T>& model, Lion<T>& opt, const SampleSet& batch, double lr,
                  double clip_norm, double* grad_norm = nullptr);

/// Mean-squared loss over a whole set, in mini-batches, without gradients.
template <typename T>
double mean_loss(ResUNet<T>& model, const SampleSet& set, int batch_size);

/// Epoch loop over seeded shuffles of `train`. Keeps the parameters with the
/// lowest validation loss and loads them into `model` on return. With a
/// non-empty `out_dir`, writes train_log.csv, val_log.csv, lambda_log.csv
/// (scaling variants only) and best.sblb.
template <typename T>
FitResult fit(ResUNet<T>& model, const SampleSet& train, const SampleSet& val,
              const TrainConfig& config, const std::filesystem::path& out_dir = {},
              const std::function<void(const EvalLog&)>& on_eval = {});

/// Predictions for every sample of `set` scored with the full metric suite.
template <typename T>
MetricsReport evaluate(ResUNet<T>& model, const SampleSet& set, const BandSpec& bands,
                       int batch_size = 8);

void write_train_log(const std::filesystem::path& path, const std::vector<IterationLog>& log);
void write_val_log(const std::filesystem::path& path, const std::vector<EvalLog>& log);
void write_lambda_log(const std::filesystem::path& path, const std::vector<LambdaLog>& log);

}  // namespace specbias
