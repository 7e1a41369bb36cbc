#include "specbias/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <random>
#include <sstream>

#include "specbias/hfs.hpp"

namespace specbias {

ModelConfig model_for_dataset(ModelConfig m, const io::Dataset& d, int history) {
  const Shape s = d.field("omega").shape;
  if (history < 1 || history >= s.c) {
    throw ValidationError("history " + std::to_string(history) + " does not fit " +
                          std::to_string(s.c) + " snapshots");
  }
  m.in_channels = history;
  m.out_channels = s.c - history;
  m.height = s.h;
  m.width = s.w;
  m.validate();
  return m;
}

ModelConfig model_for_width(const ModelConfig& base, const std::string& width) {
  ModelConfig m = base;
  int bw = 0;
  const auto [ptr, ec] = std::from_chars(width.data(), width.data() + width.size(), bw);
  if (ec == std::errc() && ptr == width.data() + width.size()) {
    if (bw < 1) throw ValidationError("sweep: base width must be positive");
    m.base_width = bw;
  } else {
    const auto& p = width_preset(width);
    m.base_width = p.base_width;
    m.multipliers = p.multipliers;
    m.levels = static_cast<int>(p.multipliers.size()) - 1;
  }
  m.validate();
  return m;
}

double median(std::vector<double> v) {
  if (v.empty()) throw ValidationError("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

RunOutcome train_and_test(const ModelConfig& model, const TrainConfig& train,
                          const BandSpec& bands, const io::Dataset& d, int history,
                          const std::filesystem::path& dir, const Progress& progress) {
  const ModelConfig mc = model_for_dataset(model, d, history);
  const auto train_set = make_samples(d, Split::train, history);
  const auto val_set = make_samples(d, Split::val, history);
  const auto test_set = make_samples(d, Split::test, history);

  RunOutcome out;
  out.variant = mc.scaling;
  out.seed = train.seed;
  ResUNet<float> net(mc, train.seed);
  out.parameters = net.parameter_count();

  std::function<void(const EvalLog&)> on_eval;
  if (progress) {
    on_eval = [&](const EvalLog& e) {
      std::ostringstream os;
      os << to_string(mc.scaling) << " seed " << train.seed << " epoch " << e.epoch + 1 << "/"
         << train.epochs << " val " << e.val_loss;
      progress(os.str());
    };
  }
  out.fit = fit(net, train_set, val_set, train, dir, on_eval);
  out.test = evaluate(net, test_set, bands, train.batch_size);
  if (mc.scaling != ScalingVariant::none) out.lambdas = net.lambda_snapshot();

  std::vector<double> ms;
  for (const auto& it : out.fit.iterations) ms.push_back(it.iter_ms);
  if (!ms.empty()) out.median_iter_ms = median(ms);

  if (!dir.empty()) {
    std::ofstream os(dir / "metrics.csv");
    write_csv_header(os, {"split"});
    write_csv_row(os, out.test, {"test"});
    if (!os) throw ValidationError("cannot write " + (dir / "metrics.csv").string());
  }
  return out;
}

CompareSummary compare_variants(const RunConfig& cfg, const io::Dataset& d,
                                const std::filesystem::path& dir, const Progress& progress) {
  CompareSummary s;
  for (int seed : cfg.compare_seeds) {
    for (auto v : {ScalingVariant::none, ScalingVariant::hfs}) {
      ModelConfig m = cfg.model;
      m.scaling = v;
      TrainConfig t = cfg.train;
      t.seed = static_cast<std::uint64_t>(seed);
      const auto sub = dir.empty() ? std::filesystem::path{}
                                   : dir / (to_string(v) + "_seed" + std::to_string(seed));
      auto r = train_and_test(m, t, cfg.bands, d, cfg.data.history, sub, progress);
      if (r.fit.diverged) throw NumericalError("compare: run diverged: " + r.fit.divergence);
      (v == ScalingVariant::none ? s.baseline : s.hfs).push_back(std::move(r));
    }
  }
  auto collect = [](const std::vector<RunOutcome>& runs, double MetricsReport::*field) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.test.*field);
    return median(v);
  };
  s.median_rel_error_baseline = collect(s.baseline, &MetricsReport::rel_error);
  s.median_rel_error_hfs = collect(s.hfs, &MetricsReport::rel_error);
  s.median_rel_ef_high_baseline = collect(s.baseline, &MetricsReport::rel_ef_high);
  s.median_rel_ef_high_hfs = collect(s.hfs, &MetricsReport::rel_ef_high);
  s.directional_pass = s.median_rel_error_hfs <= s.median_rel_error_baseline &&
                       s.median_rel_ef_high_hfs < s.median_rel_ef_high_baseline;
  for (const auto& r : s.hfs) {
    bool all = !r.lambdas.empty();
    for (const auto& row : r.lambdas) all = all && row.mean_lambda_hfc > row.mean_lambda_dc;
    s.lambda_hfc_dominates.push_back(all);
  }
  if (!dir.empty()) write_compare(dir, s);
  return s;
}

void write_compare(const std::filesystem::path& dir, const CompareSummary& s) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "compare.csv");
    write_csv_header(os, {"variant", "seed", "parameters", "best_epoch", "median_iter_ms"});
    for (const auto* runs : {&s.baseline, &s.hfs}) {
      for (const auto& r : *runs) {
        std::ostringstream ms;
        ms << r.median_iter_ms;
        write_csv_row(os, r.test,
                      {to_string(r.variant), std::to_string(r.seed), std::to_string(r.parameters),
                       std::to_string(r.fit.best_epoch + 1), ms.str()});
      }
    }
  }
  {
    std::ofstream os(dir / "lambdas.csv");
    os << "seed,component,layer,mean_lambda_dc,mean_lambda_hfc\n";
    for (const auto& r : s.hfs) {
      for (const auto& row : r.lambdas) {
        os << r.seed << "," << row.component << "," << row.layer << "," << row.mean_lambda_dc << ","
           << row.mean_lambda_hfc << "\n";
      }
    }
  }
  std::ofstream os(dir / "summary.txt");
  os << "median rel_error baseline " << s.median_rel_error_baseline << "\n"
     << "median rel_error hfs " << s.median_rel_error_hfs << "\n"
     << "median rel_ef_high baseline " << s.median_rel_ef_high_baseline << "\n"
     << "median rel_ef_high hfs " << s.median_rel_ef_high_hfs << "\n"
     << "directional " << (s.directional_pass ? "pass" : "fail") << "\n";
}

SpectrumTable spectra(const Tensor<double>& pred, const Tensor<double>& truth) {
  if (pred.shape() != truth.shape()) throw ValidationError("spectra: shape mismatch");
  const Shape s = truth.shape();
  SpectrumTable t;
  t.steps = s.c;
  t.shells = max_shell(s.h, s.w) + 1;
  t.truth.assign(s.c, std::vector<double>(t.shells, 0.0));
  t.pred.assign(s.c, std::vector<double>(t.shells, 0.0));
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const auto pt = energy_spectrum(truth.plane(n, c), s.h, s.w);
      const auto pp = energy_spectrum(pred.plane(n, c), s.h, s.w);
      for (int k = 0; k < t.shells; ++k) {
        t.truth[c][k] += pt[k] / s.n;
        t.pred[c][k] += pp[k] / s.n;
      }
    }
  }
  return t;
}

void write_spectra(const std::filesystem::path& path, const SpectrumTable& t) {
  std::ofstream os(path);
  os.precision(10);
  os << "step,k,p_truth,p_pred\n";
  for (int c = 0; c < t.steps; ++c) {
    for (int k = 0; k < t.shells; ++k) {
      os << c + 1 << "," << k << "," << t.truth[c][k] << "," << t.pred[c][k] << "\n";
    }
  }
  if (!os) throw ValidationError("cannot write " + path.string());
}

template <typename T>
Tensor<double> predict_all(ResUNet<T>& model, const SampleSet& set, int batch_size) {
  Tensor<double> pred(set.targets.shape());
  const std::size_t per = set.targets.shape().numel() / std::max(1, set.size());
  for (int b = 0; b < set.size(); b += batch_size) {
    std::vector<int> idx;
    for (int i = b; i < std::min(set.size(), b + batch_size); ++i) idx.push_back(i);
    const auto batch = set.gather(idx);
    Tensor<T> in(batch.inputs.shape());
    std::copy(batch.inputs.vec().begin(), batch.inputs.vec().end(), in.vec().begin());
    const auto out = model.predict(in);
    for (std::size_t i = 0; i < out.size(); ++i) pred[b * per + i] = out[i];
  }
  return pred;
}

template Tensor<double> predict_all(ResUNet<float>&, const SampleSet&, int);
template Tensor<double> predict_all(ResUNet<double>&, const SampleSet&, int);

std::vector<LatentRatio> latent_ratios(const std::vector<Latent>& latents,
                                       const std::vector<double>& cutoffs) {
  if (cutoffs.empty()) throw ValidationError("latents: no cutoffs");
  std::vector<LatentRatio> out;
  for (const auto& lat : latents) {
    const int level = std::min<int>(lat.level, static_cast<int>(cutoffs.size()) - 1);
    LatentRatio r;
    r.component = lat.component;
    r.level = lat.level;
    r.channels = lat.shape.c;
    r.h = lat.shape.h;
    r.w = lat.shape.w;
    r.cutoff = cutoffs[level];
    r.mean_map.assign(lat.shape.plane(), 0.0);
    // Captured batches hold one sample per row; average over both.
    const int planes = lat.shape.n * lat.shape.c;
    for (int p = 0; p < planes; ++p) {
      const double* src = lat.values.data() + static_cast<std::size_t>(p) * lat.shape.plane();
      r.hf_ratio += hf_energy_ratio(src, r.h, r.w, r.cutoff) / planes;
      for (std::size_t i = 0; i < r.mean_map.size(); ++i) r.mean_map[i] += src[i] / planes;
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_latent_ratios(const std::filesystem::path& path, const std::vector<LatentRatio>& r) {
  std::ofstream os(path);
  os.precision(10);
  os << "component,level,channels,h,w,cutoff,hf_energy_ratio\n";
  for (const auto& x : r) {
    os << x.component << "," << x.level << "," << x.channels << "," << x.h << "," << x.w << ","
       << x.cutoff << "," << x.hf_ratio << "\n";
  }
  if (!os) throw ValidationError("cannot write " + path.string());
}

std::vector<double> time_iterations(const ModelConfig& model, int batch_size, int iterations,
                                    std::uint64_t seed) {
  model.validate();
  ResUNet<float> net(model, seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.0f, 0.5f);
  SampleSet batch{Tensor<float>(Shape{batch_size, model.in_channels, model.height, model.width}),
                  Tensor<float>(Shape{batch_size, model.out_channels, model.height, model.width})};
  for (auto& v : batch.inputs.vec()) v = nd(rng);
  for (auto& v : batch.targets.vec()) v = nd(rng);
  Lion<float> opt(net.parameter_ptrs(), LionConfig{});
  train_step(net, opt, batch, 1e-4, 1.0);
  std::vector<double> ms;
  for (int i = 0; i < iterations; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    train_step(net, opt, batch, 1e-4, 1.0);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return ms;
}

}  // namespace specbias
