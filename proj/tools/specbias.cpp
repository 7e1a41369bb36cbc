// specbias command-line driver.
//
// Exit codes: 0 success, 2 validation error, 3 numerical failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "specbias/config.hpp"
#include "specbias/dataset.hpp"
#include "specbias/effectiveness.hpp"
#include "specbias/experiment.hpp"
#include "specbias/io.hpp"

namespace fs = std::filesystem;
using namespace specbias;

namespace {

constexpr int kValidation = 2;
constexpr int kNumerical = 3;

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string out;
  std::vector<std::string> sets;
};

void note(const std::string& msg) { std::cerr << msg << "\n"; }

// Config file, then --set overrides, then the dedicated flags.
RunConfig resolve(const GlobalOptions& g) {
  KeyValues kv = g.config.empty() ? KeyValues{} : KeyValues::load(g.config);
  for (const auto& s : g.sets) kv.assign(s);
  if (g.seed) kv.set("seed", std::to_string(*g.seed));
  if (g.deterministic) kv.set("deterministic", "true");
  if (!g.out.empty()) kv.set("out", g.out);
  return RunConfig::from(kv);
}

void echo_config(const RunConfig& cfg) {
  fs::create_directories(cfg.out);
  io::write_text(cfg.out / "resolved.conf", cfg.resolved_text());
}

io::Dataset load_dataset(const RunConfig& cfg) {
  auto d = io::read_dataset(cfg.dataset);
  if (!d.has("omega")) throw ValidationError("dataset '" + cfg.dataset + "' has no omega field");
  return d;
}

fs::path checkpoint_path(const RunConfig& cfg) {
  return cfg.checkpoint.empty() ? cfg.out / "best.sblb" : fs::path(cfg.checkpoint);
}

ResUNet<float> load_checked(const RunConfig& cfg, const io::Dataset& d) {
  auto model = io::load_model<float>(checkpoint_path(cfg));
  const Shape s = d.field("omega").shape;
  const auto& mc = model.config();
  if (mc.in_channels + mc.out_channels != s.c || mc.height != s.h || mc.width != s.w) {
    throw ValidationError("checkpoint expects " + std::to_string(mc.in_channels) + "+" +
                          std::to_string(mc.out_channels) + " frames of " +
                          std::to_string(mc.height) + "x" + std::to_string(mc.width) +
                          ", dataset has " + s.str());
  }
  return model;
}

void write_metrics(const fs::path& path, const std::string& label, const MetricsReport& r) {
  std::ofstream os(path);
  write_csv_header(os, {"split"});
  write_csv_row(os, r, {label});
  if (!os) throw ValidationError("cannot write " + path.string());
}

int cmd_gen_data(const RunConfig& cfg) {
  const auto d = generate_kolmogorov(cfg.solver, cfg.data, [](int i, int n) {
    if (i % 10 == 0 || i == n) note("gen-data: " + std::to_string(i) + "/" + std::to_string(n));
  });
  if (fs::path(cfg.dataset).has_parent_path()) fs::create_directories(fs::path(cfg.dataset).parent_path());
  io::write_dataset(cfg.dataset, d);
  const auto c = cfg.data.split_counts();
  std::cout << "wrote " << cfg.dataset << " " << d.field("omega").shape.str() << " split " << c[0]
            << "/" << c[1] << "/" << c[2] << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const auto d = load_dataset(cfg);
  const auto r = train_and_test(cfg.model, cfg.train, cfg.bands, d, cfg.data.history, cfg.out, note);
  std::cout << to_string(r.variant) << " parameters " << r.parameters << " best epoch "
            << r.fit.best_epoch + 1 << " val " << r.fit.best_val_loss << "\n";
  print_table(std::cout, r.test);
  if (r.fit.diverged) {
    std::cerr << "error: training diverged: " << r.fit.divergence << "\n";
    return kNumerical;
  }
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  const auto d = load_dataset(cfg);
  auto model = load_checked(cfg, d);
  const auto set = make_samples(d, parse_split(cfg.split), model.config().in_channels);
  const auto r = evaluate(model, set, cfg.bands, cfg.train.batch_size);
  write_metrics(cfg.out / ("eval_" + cfg.split + ".csv"), cfg.split, r);
  print_table(std::cout, r);
  return 0;
}

int cmd_sweep(const RunConfig& cfg) {
  const auto d = load_dataset(cfg);
  struct Row {
    std::string width;
    std::string variant;
    RunOutcome run;
  };
  std::vector<Row> rows;
  for (const auto& w : cfg.sweep_widths) {
    for (const auto& v : cfg.sweep_variants) {
      ModelConfig m = model_for_width(cfg.model, w);
      m.scaling = parse_scaling(v);
      auto run = train_and_test(m, cfg.train, cfg.bands, d, cfg.data.history,
                                cfg.out / "sweep" / (w + "_" + v), note);
      if (run.fit.diverged) throw NumericalError("sweep: " + w + "/" + v + " diverged");
      rows.push_back({w, v, std::move(run)});
    }
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.run.parameters < b.run.parameters; });
  std::ofstream os(cfg.out / "sweep.csv");
  write_csv_header(os, {"width", "variant", "parameters"});
  for (const auto& r : rows) {
    write_csv_row(os, r.run.test, {r.width, r.variant, std::to_string(r.run.parameters)});
    std::cout << r.width << " " << r.variant << " parameters " << r.run.parameters << " rel_error "
              << r.run.test.rel_error << "\n";
  }
  return 0;
}

int cmd_spectrum(const RunConfig& cfg) {
  const auto d = load_dataset(cfg);
  auto model = load_checked(cfg, d);
  const auto set = make_samples(d, parse_split(cfg.split), model.config().in_channels);
  const auto pred = predict_all(model, set, cfg.train.batch_size);
  Tensor<double> truth(set.targets.shape());
  std::copy(set.targets.vec().begin(), set.targets.vec().end(), truth.vec().begin());
  const auto table = spectra(pred, truth);
  write_spectra(cfg.out / "spectrum.csv", table);
  std::cout << "wrote " << (cfg.out / "spectrum.csv").string() << " (" << table.steps << " steps, "
            << table.shells << " shells)\n";
  return 0;
}

int cmd_latents(const RunConfig& cfg) {
  const auto d = load_dataset(cfg);
  auto model = load_checked(cfg, d);
  const auto set = make_samples(d, parse_split(cfg.split), model.config().in_channels);
  if (cfg.latent_sample >= set.size()) {
    throw ValidationError("latents.sample " + std::to_string(cfg.latent_sample) + " out of range for " +
                          cfg.split + " (" + std::to_string(set.size()) + " samples)");
  }
  const auto one = set.gather({cfg.latent_sample});
  std::vector<Latent> latents;
  model.predict(one.inputs, &latents);
  const auto ratios = latent_ratios(latents, cfg.latent_cutoffs);
  write_latent_ratios(cfg.out / "latents.csv", ratios);
  for (const auto& r : ratios) {
    const auto name = "latent_" + r.component + "_" + std::to_string(r.level);
    io::write_pgm(cfg.out / (name + ".pgm"), r.mean_map.data(), r.h, r.w);
    std::cout << r.component << " " << r.level << " " << r.h << "x" << r.w << " cutoff " << r.cutoff
              << " hf_ratio " << r.hf_ratio << "\n";
  }
  return 0;
}

int cmd_effectiveness(const RunConfig& cfg) {
  struct Input {
    std::string label;
    int h = 0;
    int w = 0;
    std::vector<double> values;
  };
  std::vector<Input> inputs;
  const fs::path in = cfg.input;
  if (cfg.input.empty()) {
    const auto kind = parse_field_class(cfg.effectiveness_field);
    for (int i = 0; i < cfg.effectiveness_seeds; ++i) {
      const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(i);
      inputs.push_back({cfg.effectiveness_field + "_" + std::to_string(seed), cfg.effectiveness_size,
                        cfg.effectiveness_size,
                        constructed_field(kind, cfg.effectiveness_size, cfg.effectiveness_size, seed)});
    }
  } else if (in.extension() == ".pgm") {
    const auto t = io::read_pgm(in);
    inputs.push_back({in.stem().string(), t.shape().h, t.shape().w, t.vec()});
  } else {
    const auto d = io::read_dataset(in);
    const auto& f = d.field("omega");
    const Shape s = f.shape;
    if (cfg.effectiveness_sample >= s.n) throw ValidationError("effectiveness.sample out of range");
    const int frame = cfg.effectiveness_frame < 0 ? s.c + cfg.effectiveness_frame : cfg.effectiveness_frame;
    if (frame < 0 || frame >= s.c) throw ValidationError("effectiveness.frame out of range");
    const auto t = f.tensor<double>();
    const double* p = t.plane(cfg.effectiveness_sample, frame);
    inputs.push_back({"sample" + std::to_string(cfg.effectiveness_sample) + "_frame" + std::to_string(frame),
                      s.h, s.w, std::vector<double>(p, p + s.plane())});
  }

  std::ofstream os(cfg.out / "effectiveness.csv");
  os << "sample,cv,mean_ratio,counted\n";
  for (const auto& x : inputs) {
    const auto r = hfs_gradient_ratio(x.values.data(), x.h, x.w, cfg.effectiveness);
    io::write_pgm(cfg.out / (x.label + "_grad_baseline.pgm"), r.baseline_grad.data(), x.h, x.w);
    io::write_pgm(cfg.out / (x.label + "_grad_hfs.pgm"), r.scaled_grad.data(), x.h, x.w);
    io::write_pgm(cfg.out / (x.label + "_ratio.pgm"), r.ratio.data(), x.h, x.w);
    os << x.label << "," << r.cv << "," << r.mean_ratio << "," << r.counted << "\n";
    std::cout << x.label << " cv " << r.cv << " mean_ratio " << r.mean_ratio << "\n";
  }
  if (!os) throw ValidationError("cannot write effectiveness.csv");
  return 0;
}

int cmd_compare(const RunConfig& cfg) {
  const auto d = load_dataset(cfg);
  const auto s = compare_variants(cfg, d, cfg.out, note);

  // Latent high-frequency ratios of each trained pair on the first test sample.
  const auto test = make_samples(d, Split::test, cfg.data.history).gather({0});
  std::ofstream os(cfg.out / "latents_compare.csv");
  os << "seed,component,level,cutoff,hf_ratio_baseline,hf_ratio_hfs\n";
  for (int seed : cfg.compare_seeds) {
    std::vector<LatentRatio> r[2];
    int i = 0;
    for (const char* v : {"none", "hfs"}) {
      auto m = io::load_model<float>(cfg.out / (std::string(v) + "_seed" + std::to_string(seed)) / "best.sblb");
      std::vector<Latent> latents;
      m.predict(test.inputs, &latents);
      r[i++] = latent_ratios(latents, cfg.latent_cutoffs);
    }
    for (std::size_t k = 0; k < r[0].size(); ++k) {
      os << seed << "," << r[0][k].component << "," << r[0][k].level << "," << r[0][k].cutoff << ","
         << r[0][k].hf_ratio << "," << r[1][k].hf_ratio << "\n";
    }
  }

  std::cout << "median rel_error   baseline " << s.median_rel_error_baseline << "  hfs "
            << s.median_rel_error_hfs << "\n"
            << "median rel_ef_high baseline " << s.median_rel_ef_high_baseline << "  hfs "
            << s.median_rel_ef_high_hfs << "\n"
            << "directional " << (s.directional_pass ? "pass" : "fail") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral-bias experiments for residual UNet operators"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Run seed (model init, shuffling, synthetic fields)");
  app.add_flag("--deterministic", g.deterministic, "Record determinism mode in the run config");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--set", g.sets, "Override one key, key=value (repeatable)")->allow_extra_args(false);

  using Handler = int (*)(const RunConfig&);
  const std::vector<std::tuple<const char*, const char*, Handler>> commands{
      {"gen-data", "Solve Kolmogorov trajectories into a dataset container", cmd_gen_data},
      {"train", "Train one model and score it on the test split", cmd_train},
      {"eval", "Score a checkpoint on a dataset split", cmd_eval},
      {"sweep", "Train every width x variant and tabulate by parameter count", cmd_sweep},
      {"spectrum", "Per-step energy spectra of truth and prediction", cmd_spectrum},
      {"latents", "Per-layer mean feature maps and high-frequency energy ratios", cmd_latents},
      {"effectiveness", "Gradient-ratio maps of HFS applied to raw fields", cmd_effectiveness},
      {"compare", "Baseline vs HFS over several seeds", cmd_compare},
  };
  Handler chosen = nullptr;
  for (const auto& [name, help, handler] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->callback([&chosen, h = handler]() { chosen = h; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    const RunConfig cfg = resolve(g);
    echo_config(cfg);
    return chosen(cfg);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
