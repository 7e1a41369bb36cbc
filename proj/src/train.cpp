#include "specbias/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>

#include "specbias/io.hpp"

namespace specbias {

void LionConfig::validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ValidationError("lion: beta1 and beta2 must lie in (0,1)");
  }
  if (!(weight_decay >= 0.0)) throw ValidationError("lion: weight_decay must be non-negative");
}

template <typename T>
Lion<T>::Lion(std::vector<Parameter<T>*> params, LionConfig config)
    : params_(std::move(params)), config_(config) {
  config_.validate();
  m_.reserve(params_.size());
  for (auto* p : params_) m_.emplace_back(p->value.shape());
}

template <typename T>
void Lion<T>::step(double lr) {
  for (auto* p : params_) {
    if (p->grad.shape() != p->value.shape()) {
      throw ValidationError("lion: gradient of '" + p->name + "' has the wrong shape");
    }
    if (!p->grad.all_finite()) {
      throw NumericalError("lion: non-finite gradient in '" + p->name + "', step refused");
    }
  }
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  const T rate = static_cast<T>(lr);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    const T wd = p.decay ? static_cast<T>(config_.weight_decay) : T(0);
    T* v = p.value.data();
    const T* g = p.grad.data();
    T* m = m_[k].data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T c = b1 * m[i] + (T(1) - b1) * g[i];
      const T sign = c > T(0) ? T(1) : (c < T(0) ? T(-1) : T(0));
      v[i] -= rate * (sign + wd * v[i]);
      m[i] = b2 * m[i] + (T(1) - b2) * g[i];
    }
  }
}

template class Lion<float>;
template class Lion<double>;

template <typename T>
double clip_grad_norm(const std::vector<Parameter<T>*>& params, double max_norm) {
  if (!(max_norm > 0.0)) throw ValidationError("clip_grad_norm: max_norm must be positive");
  double sq = 0.0;
  for (const auto* p : params) {
    for (std::size_t i = 0; i < p->grad.size(); ++i) {
      const double g = p->grad[i];
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto* p : params) {
      for (auto& g : p->grad.vec()) g *= s;
    }
  }
  return norm;
}
template double clip_grad_norm(const std::vector<Parameter<float>*>&, double);
template double clip_grad_norm(const std::vector<Parameter<double>*>&, double);

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("train: epochs must be positive");
  if (decay_start < 0) throw ValidationError("train: decay_start must be non-negative");
  if (decay_steps < 1) throw ValidationError("train: decay_steps must be positive");
  if (!(lr > 0.0) || !(lr_final > 0.0)) throw ValidationError("train: learning rates must be positive");
  if (batch_size < 1) throw ValidationError("train: batch_size must be positive");
  if (!(clip_norm > 0.0)) throw ValidationError("train: clip_norm must be positive");
  if (eval_every < 1) throw ValidationError("train: eval_every must be positive");
  lion.validate();
}

double lr_at(int epoch, const TrainConfig& c) {
  if (epoch < 0) throw ValidationError("lr_at: negative epoch");
  if (epoch < c.decay_start || c.decay_start >= c.epochs) return c.lr;
  const long span = c.epochs - c.decay_start;
  const long into = std::min<long>(epoch - c.decay_start + 1, span);
  // ceil(into * steps / span): step 1 at decay_start, the last step at the final epoch.
  const long step = std::clamp<long>((into * c.decay_steps + span - 1) / span, 1, c.decay_steps);
  return c.lr + (c.lr_final - c.lr) * static_cast<double>(step) / c.decay_steps;
}

void SampleSet::validate() const {
  const Shape a = inputs.shape();
  const Shape b = targets.shape();
  if (a.n != b.n || a.h != b.h || a.w != b.w) {
    throw ValidationError("samples: inputs " + a.str() + " and targets " + b.str() + " disagree");
  }
}

SampleSet SampleSet::gather(const std::vector<int>& indices) const {
  auto pick = [&](const Tensor<float>& src) {
    Shape s = src.shape();
    const std::size_t per = static_cast<std::size_t>(s.c) * s.plane();
    s.n = static_cast<int>(indices.size());
    Tensor<float> out(s);
    for (std::size_t k = 0; k < indices.size(); ++k) {
      if (indices[k] < 0 || indices[k] >= src.shape().n) throw ValidationError("gather: index out of range");
      std::copy_n(src.data() + indices[k] * per, per, out.data() + k * per);
    }
    return out;
  };
  return {pick(inputs), pick(targets)};
}

namespace {

template <typename T>
Tensor<T> convert(const Tensor<float>& src) {
  if constexpr (std::is_same_v<T, float>) {
    return src;
  } else {
    Tensor<T> out(src.shape());
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = src[i];
    return out;
  }
}

template <typename T>
void check_model_shapes(const ResUNet<T>& model, const SampleSet& set) {
  set.validate();
  const auto& c = model.config();
  const Shape a = set.inputs.shape();
  const Shape b = set.targets.shape();
  if (a.c != c.in_channels || b.c != c.out_channels || a.h != c.height || a.w != c.width) {
    throw ValidationError("samples " + a.str() + " -> " + b.str() + " do not fit the model (" +
                          std::to_string(c.in_channels) + " -> " + std::to_string(c.out_channels) +
                          " channels at " + std::to_string(c.height) + "x" +
                          std::to_string(c.width) + ")");
  }
}

std::vector<int> range(int begin, int end) {
  std::vector<int> v(end - begin);
  std::iota(v.begin(), v.end(), begin);
  return v;
}

}  // namespace

template <typename T>
double train_step(ResUNet<T>& model, Lion<T>& opt, const SampleSet& batch, double lr,
                  double clip_norm, double* grad_norm) {
  model.zero_grad();
  Tape<T> tape;
  const auto pred = model.forward(tape, tape.input(convert<T>(batch.inputs)));
  const auto loss = mse_loss(pred, tape.input(convert<T>(batch.targets)));
  const double value = loss.value()[0];
  tape.backward(loss);
  const auto params = model.parameter_ptrs();
  const double norm = clip_grad_norm(params, clip_norm);
  if (grad_norm) *grad_norm = norm;
  opt.step(lr);
  return value;
}

template <typename T>
double mean_loss(ResUNet<T>& model, const SampleSet& set, int batch_size) {
  check_model_shapes(model, set);
  double sum = 0.0;
  std::size_t count = 0;
  for (int b = 0; b < set.size(); b += batch_size) {
    const auto batch = set.gather(range(b, std::min(set.size(), b + batch_size)));
    const auto pred = model.predict(convert<T>(batch.inputs));
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = static_cast<double>(pred[i]) - batch.targets[i];
      sum += d * d;
    }
    count += pred.size();
  }
  if (count == 0) throw ValidationError("mean_loss: empty sample set");
  return sum / count;
}

template <typename T>
FitResult fit(ResUNet<T>& model, const SampleSet& train, const SampleSet& val,
              const TrainConfig& config, const std::filesystem::path& out_dir,
              const std::function<void(const EvalLog&)>& on_eval) {
  config.validate();
  if (train.size() == 0 || val.size() == 0) throw ValidationError("fit: empty train or val set");
  check_model_shapes(model, train);
  check_model_shapes(model, val);

  const bool track_lambda = model.config().scaling != ScalingVariant::none;
  Lion<T> opt(model.parameter_ptrs(), config.lion);
  std::mt19937_64 rng(config.seed);
  std::vector<int> order = range(0, train.size());

  FitResult result;
  std::vector<Tensor<T>> best;
  auto snapshot = [&]() {
    best.clear();
    for (const auto& p : model.parameters()) best.push_back(p.value);
  };
  long iteration = 0;
  if (track_lambda) result.lambdas.push_back({0, model.lambda_snapshot()});

  try {
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      const double lr = lr_at(epoch, config);
      for (int b = 0; b < train.size(); b += config.batch_size) {
        const std::vector<int> idx(order.begin() + b,
                                   order.begin() + std::min(train.size(), b + config.batch_size));
        const auto batch = train.gather(idx);
        const auto t0 = std::chrono::steady_clock::now();
        IterationLog log;
        log.loss = train_step(model, opt, batch, lr, config.clip_norm, &log.grad_norm);
        log.iter_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        log.iteration = ++iteration;
        log.epoch = epoch;
        log.lr = lr;
        result.iterations.push_back(log);
      }
      if ((epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs) {
        const EvalLog ev{epoch, iteration, mean_loss(model, val, config.batch_size)};
        if (!std::isfinite(ev.val_loss)) throw NumericalError("validation loss is not finite");
        result.evals.push_back(ev);
        result.final_val_loss = ev.val_loss;
        if (result.best_epoch < 0 || ev.val_loss < result.best_val_loss) {
          result.best_epoch = epoch;
          result.best_val_loss = ev.val_loss;
          snapshot();
        }
        if (track_lambda) result.lambdas.push_back({iteration, model.lambda_snapshot()});
        if (on_eval) on_eval(ev);
      }
    }
  } catch (const NumericalError& e) {
    result.diverged = true;
    result.divergence = e.what();
  }

  if (!best.empty()) {
    auto& params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i].value = best[i];
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_train_log(out_dir / "train_log.csv", result.iterations);
    write_val_log(out_dir / "val_log.csv", result.evals);
    if (track_lambda) write_lambda_log(out_dir / "lambda_log.csv", result.lambdas);
    if (!best.empty()) io::save_checkpoint(out_dir / "best.sblb", model);
  }
  return result;
}

template <typename T>
MetricsReport evaluate(ResUNet<T>& model, const SampleSet& set, const BandSpec& bands,
                       int batch_size) {
  check_model_shapes(model, set);
  if (set.size() == 0) throw ValidationError("evaluate: empty sample set");
  Tensor<double> pred(set.targets.shape());
  Tensor<double> truth(set.targets.shape());
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = set.targets[i];
  const std::size_t per = static_cast<std::size_t>(set.targets.shape().c) * set.targets.shape().plane();
  for (int b = 0; b < set.size(); b += batch_size) {
    const auto batch = set.gather(range(b, std::min(set.size(), b + batch_size)));
    const auto out = model.predict(convert<T>(batch.inputs));
    for (std::size_t i = 0; i < out.size(); ++i) pred[b * per + i] = out[i];
  }
  return evaluate_metrics(pred, truth, bands);
}

template double train_step(ResUNet<float>&, Lion<float>&, const SampleSet&, double, double, double*);
template double train_step(ResUNet<double>&, Lion<double>&, const SampleSet&, double, double,
                           double*);
template double mean_loss(ResUNet<float>&, const SampleSet&, int);
template double mean_loss(ResUNet<double>&, const SampleSet&, int);
template FitResult fit(ResUNet<float>&, const SampleSet&, const SampleSet&, const TrainConfig&,
                       const std::filesystem::path&, const std::function<void(const EvalLog&)>&);
template FitResult fit(ResUNet<double>&, const SampleSet&, const SampleSet&, const TrainConfig&,
                       const std::filesystem::path&, const std::function<void(const EvalLog&)>&);
template MetricsReport evaluate(ResUNet<float>&, const SampleSet&, const BandSpec&, int);
template MetricsReport evaluate(ResUNet<double>&, const SampleSet&, const BandSpec&, int);

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot open '" + path.string() + "' for writing");
  os << std::setprecision(17);
  return os;
}

}  // namespace

void write_train_log(const std::filesystem::path& path, const std::vector<IterationLog>& log) {
  auto os = open_csv(path);
  os << "iteration,epoch,loss,lr,grad_norm,iter_ms\n";
  for (const auto& r : log) {
    os << r.iteration << "," << r.epoch << "," << r.loss << "," << r.lr << "," << r.grad_norm << ","
       << r.iter_ms << "\n";
  }
}

void write_val_log(const std::filesystem::path& path, const std::vector<EvalLog>& log) {
  auto os = open_csv(path);
  os << "epoch,iteration,val_loss\n";
  for (const auto& r : log) os << r.epoch << "," << r.iteration << "," << r.val_loss << "\n";
}

void write_lambda_log(const std::filesystem::path& path, const std::vector<LambdaLog>& log) {
  auto os = open_csv(path);
  os << "iteration,component,layer,mean_lambda_dc,mean_lambda_hfc\n";
  for (const auto& snap : log) {
    for (const auto& r : snap.rows) {
      os << snap.iteration << "," << r.component << "," << r.layer << "," << r.mean_lambda_dc << ","
         << r.mean_lambda_hfc << "\n";
    }
  }
}

}  // namespace specbias
