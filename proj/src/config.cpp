#include "specbias/config.hpp"

#include <charconv>
#include <sstream>

#include "specbias/io.hpp"

namespace specbias {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* kind) {
  throw ValidationError("config: '" + key + "' expects " + kind + ", got '" + value + "'");
}

template <typename N>
N parse_number(const std::string& key, const std::string& value, const char* kind) {
  N out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, kind);
  return out;
}

std::string format(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename V>
std::string join(const std::vector<V>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_same_v<V, std::string>) {
      out += items[i];
    } else if constexpr (std::is_same_v<V, double>) {
      out += format(items[i]);
    } else {
      out += std::to_string(items[i]);
    }
  }
  return out;
}

kolmogorov::Domain parse_domain(const std::string& s) {
  if (s == "unit") return kolmogorov::Domain::unit;
  if (s == "two_pi") return kolmogorov::Domain::two_pi;
  throw ValidationError("config: solver.domain must be unit or two_pi, got '" + s + "'");
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text, const std::string& origin) {
  KeyValues kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ValidationError(origin + ":" + std::to_string(lineno) + ": empty key");
    kv.values_[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  return parse(io::read_text(path), path.string());
}

void KeyValues::assign(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || trim(assignment.substr(0, eq)).empty()) {
    throw ValidationError("override '" + assignment + "' is not key=value");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void KeyValues::set(const std::string& key, const std::string& value) { values_[key] = value; }

const std::string* KeyValues::find(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

void KeyValues::read(const std::string& key, int& target) const {
  if (const auto* v = find(key)) target = parse_number<int>(key, *v, "an integer");
}

void KeyValues::read(const std::string& key, std::uint64_t& target) const {
  if (const auto* v = find(key)) target = parse_number<std::uint64_t>(key, *v, "an unsigned integer");
}

void KeyValues::read(const std::string& key, double& target) const {
  if (const auto* v = find(key)) target = parse_number<double>(key, *v, "a number");
}

void KeyValues::read(const std::string& key, bool& target) const {
  const auto* v = find(key);
  if (v == nullptr) return;
  if (*v == "true" || *v == "1" || *v == "yes") {
    target = true;
  } else if (*v == "false" || *v == "0" || *v == "no") {
    target = false;
  } else {
    bad_value(key, *v, "true or false");
  }
}

void KeyValues::read(const std::string& key, std::string& target) const {
  if (const auto* v = find(key)) target = *v;
}

void KeyValues::read(const std::string& key, std::vector<int>& target) const {
  const auto* v = find(key);
  if (v == nullptr) return;
  target.clear();
  for (const auto& item : split_list(*v)) target.push_back(parse_number<int>(key, item, "integers"));
}

void KeyValues::read(const std::string& key, std::vector<double>& target) const {
  const auto* v = find(key);
  if (v == nullptr) return;
  target.clear();
  for (const auto& item : split_list(*v)) target.push_back(parse_number<double>(key, item, "numbers"));
}

void KeyValues::read(const std::string& key, std::vector<std::string>& target) const {
  if (const auto* v = find(key)) target = split_list(*v);
}

void KeyValues::reject_unused() const {
  std::string unknown;
  for (const auto& [k, v] : values_) {
    if (!used_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
  }
  if (!unknown.empty()) throw ValidationError("config: unknown keys: " + unknown);
}

void read_model_config(const KeyValues& kv, ModelConfig& c, const std::string& prefix) {
  kv.read(prefix + "in_channels", c.in_channels);
  kv.read(prefix + "out_channels", c.out_channels);
  kv.read(prefix + "levels", c.levels);
  kv.read(prefix + "height", c.height);
  kv.read(prefix + "width", c.width);
  std::string preset;
  kv.read(prefix + "preset", preset);
  if (!preset.empty()) {
    const auto& p = width_preset(preset);
    c.base_width = p.base_width;
    c.multipliers = p.multipliers;
  }
  kv.read(prefix + "base_width", c.base_width);
  kv.read(prefix + "multipliers", c.multipliers);
  kv.read(prefix + "residual_blocks", c.residual_blocks);
  std::string scaling = to_string(c.scaling);
  kv.read(prefix + "scaling", scaling);
  c.scaling = parse_scaling(scaling);
  kv.read(prefix + "patch_size", c.patch_size);
  kv.read(prefix + "min_patch", c.min_patch);
  kv.read(prefix + "max_groups", c.max_groups);
  kv.read(prefix + "lambda_dc_init", c.lambda_dc_init);
  kv.read(prefix + "lambda_hfc_init", c.lambda_hfc_init);
  kv.read(prefix + "lambda_low_init", c.lambda_low_init);
  kv.read(prefix + "lambda_high_init", c.lambda_high_init);
  kv.read(prefix + "tau", c.tau);
}

void write_model_config(std::map<std::string, std::string>& out, const ModelConfig& c,
                        const std::string& prefix) {
  out[prefix + "in_channels"] = std::to_string(c.in_channels);
  out[prefix + "out_channels"] = std::to_string(c.out_channels);
  out[prefix + "levels"] = std::to_string(c.levels);
  out[prefix + "height"] = std::to_string(c.height);
  out[prefix + "width"] = std::to_string(c.width);
  out[prefix + "base_width"] = std::to_string(c.base_width);
  out[prefix + "multipliers"] = join(c.multipliers);
  out[prefix + "residual_blocks"] = c.residual_blocks ? "true" : "false";
  out[prefix + "scaling"] = to_string(c.scaling);
  out[prefix + "patch_size"] = std::to_string(c.patch_size);
  out[prefix + "min_patch"] = std::to_string(c.min_patch);
  out[prefix + "max_groups"] = std::to_string(c.max_groups);
  out[prefix + "lambda_dc_init"] = format(c.lambda_dc_init);
  out[prefix + "lambda_hfc_init"] = format(c.lambda_hfc_init);
  out[prefix + "lambda_low_init"] = format(c.lambda_low_init);
  out[prefix + "lambda_high_init"] = format(c.lambda_high_init);
  out[prefix + "tau"] = format(c.tau);
}

RunConfig RunConfig::from(const KeyValues& kv) {
  RunConfig r;
  read_model_config(kv, r.model);

  auto& s = r.solver;
  kv.read("solver.grid", s.grid);
  std::string domain = s.domain == kolmogorov::Domain::unit ? "unit" : "two_pi";
  kv.read("solver.domain", domain);
  s.domain = parse_domain(domain);
  kv.read("solver.nu", s.nu);
  kv.read("solver.chi", s.chi);
  kv.read("solver.dt", s.dt);
  kv.read("solver.t_final", s.t_final);
  kv.read("solver.record_dt", s.record_dt);
  kv.read("solver.cfl_safety", s.cfl_safety);

  auto& d = r.data;
  kv.read("data.samples", d.samples);
  kv.read("data.first_seed", d.first_seed);
  kv.read("data.train_fraction", d.train_fraction);
  kv.read("data.val_fraction", d.val_fraction);
  kv.read("data.history", d.history);

  auto& t = r.train;
  kv.read("train.epochs", t.epochs);
  kv.read("train.decay_start", t.decay_start);
  kv.read("train.decay_steps", t.decay_steps);
  kv.read("train.lr", t.lr);
  kv.read("train.lr_final", t.lr_final);
  kv.read("train.batch_size", t.batch_size);
  kv.read("train.clip_norm", t.clip_norm);
  kv.read("train.beta1", t.lion.beta1);
  kv.read("train.beta2", t.lion.beta2);
  kv.read("train.weight_decay", t.lion.weight_decay);
  kv.read("train.eval_every", t.eval_every);

  kv.read("bands.low", r.bands.low_fraction);
  kv.read("bands.mid", r.bands.mid_fraction);

  auto& e = r.effectiveness;
  kv.read("effectiveness.lambda_dc", e.lambda_dc);
  kv.read("effectiveness.lambda_hfc", e.lambda_hfc);
  kv.read("effectiveness.patch", e.patch);
  kv.read("effectiveness.floor", e.floor);
  std::vector<int> roi{e.roi.y0, e.roi.x0, e.roi.h, e.roi.w};
  kv.read("effectiveness.roi", roi);
  if (roi.size() != 4) throw ValidationError("config: effectiveness.roi needs y0,x0,h,w");
  e.roi = Roi{roi[0], roi[1], roi[2], roi[3]};

  kv.read("sweep.widths", r.sweep_widths);
  kv.read("sweep.variants", r.sweep_variants);
  kv.read("compare.seeds", r.compare_seeds);
  kv.read("split", r.split);
  kv.read("latents.sample", r.latent_sample);
  kv.read("effectiveness.field", r.effectiveness_field);
  kv.read("effectiveness.size", r.effectiveness_size);
  kv.read("effectiveness.seeds", r.effectiveness_seeds);
  kv.read("effectiveness.frame", r.effectiveness_frame);
  kv.read("effectiveness.sample", r.effectiveness_sample);
  kv.read("latents.cutoffs", r.latent_cutoffs);
  kv.read("dataset", r.dataset);
  kv.read("checkpoint", r.checkpoint);
  kv.read("input", r.input);
  std::string out = r.out.string();
  kv.read("out", out);
  r.out = out;
  kv.read("seed", r.seed);
  kv.read("deterministic", r.deterministic);
  r.train.seed = r.seed;

  kv.reject_unused();
  r.validate();
  return r;
}

void RunConfig::validate() const {
  model.validate();
  solver.validate();
  data.validate();
  train.validate();
  bands.validate();
  effectiveness.validate();
  if (sweep_widths.empty()) throw ValidationError("config: sweep.widths is empty");
  if (compare_seeds.empty()) throw ValidationError("config: compare.seeds is empty");
  if (sweep_variants.empty()) throw ValidationError("config: sweep.variants is empty");
  for (const auto& v : sweep_variants) parse_scaling(v);
  parse_split(split);
  if (latent_sample < 0) throw ValidationError("config: latents.sample must be non-negative");
  parse_field_class(effectiveness_field);
  if (effectiveness_size < 3) throw ValidationError("config: effectiveness.size must be at least 3");
  if (effectiveness_seeds < 1) throw ValidationError("config: effectiveness.seeds must be positive");
  if (effectiveness_sample < 0) throw ValidationError("config: effectiveness.sample must be non-negative");
  for (double c : latent_cutoffs) {
    if (!(c > 0.0 && c < 1.0)) throw ValidationError("config: latents.cutoffs must lie in (0,1)");
  }
  if (out.empty()) throw ValidationError("config: out is empty");
}

std::string RunConfig::resolved_text() const {
  std::map<std::string, std::string> kv;
  write_model_config(kv, model);
  kv["solver.grid"] = std::to_string(solver.grid);
  kv["solver.domain"] = solver.domain == kolmogorov::Domain::unit ? "unit" : "two_pi";
  kv["solver.nu"] = format(solver.nu);
  kv["solver.chi"] = format(solver.chi);
  kv["solver.dt"] = format(solver.dt);
  kv["solver.t_final"] = format(solver.t_final);
  kv["solver.record_dt"] = format(solver.record_dt);
  kv["solver.cfl_safety"] = format(solver.cfl_safety);
  kv["data.samples"] = std::to_string(data.samples);
  kv["data.first_seed"] = std::to_string(data.first_seed);
  kv["data.train_fraction"] = format(data.train_fraction);
  kv["data.val_fraction"] = format(data.val_fraction);
  kv["data.history"] = std::to_string(data.history);
  kv["train.epochs"] = std::to_string(train.epochs);
  kv["train.decay_start"] = std::to_string(train.decay_start);
  kv["train.decay_steps"] = std::to_string(train.decay_steps);
  kv["train.lr"] = format(train.lr);
  kv["train.lr_final"] = format(train.lr_final);
  kv["train.batch_size"] = std::to_string(train.batch_size);
  kv["train.clip_norm"] = format(train.clip_norm);
  kv["train.beta1"] = format(train.lion.beta1);
  kv["train.beta2"] = format(train.lion.beta2);
  kv["train.weight_decay"] = format(train.lion.weight_decay);
  kv["train.eval_every"] = std::to_string(train.eval_every);
  kv["bands.low"] = format(bands.low_fraction);
  kv["bands.mid"] = format(bands.mid_fraction);
  kv["effectiveness.lambda_dc"] = format(effectiveness.lambda_dc);
  kv["effectiveness.lambda_hfc"] = format(effectiveness.lambda_hfc);
  kv["effectiveness.patch"] = std::to_string(effectiveness.patch);
  kv["effectiveness.floor"] = format(effectiveness.floor);
  kv["effectiveness.roi"] = join(std::vector<int>{effectiveness.roi.y0, effectiveness.roi.x0,
                                                  effectiveness.roi.h, effectiveness.roi.w});
  kv["sweep.widths"] = join(sweep_widths);
  kv["sweep.variants"] = join(sweep_variants);
  kv["compare.seeds"] = join(compare_seeds);
  kv["split"] = split;
  kv["latents.sample"] = std::to_string(latent_sample);
  kv["effectiveness.field"] = effectiveness_field;
  kv["effectiveness.size"] = std::to_string(effectiveness_size);
  kv["effectiveness.seeds"] = std::to_string(effectiveness_seeds);
  kv["effectiveness.frame"] = std::to_string(effectiveness_frame);
  kv["effectiveness.sample"] = std::to_string(effectiveness_sample);
  kv["latents.cutoffs"] = join(latent_cutoffs);
  kv["dataset"] = dataset;
  kv["checkpoint"] = checkpoint;
  kv["input"] = input;
  kv["out"] = out.string();
  kv["seed"] = std::to_string(seed);
  kv["deterministic"] = deterministic ? "true" : "false";

  std::string text;
  for (const auto& [k, v] : kv) text += k + " = " + v + "\n";
  return text;
}

}  // namespace specbias
