#include "specbias/model.hpp"

#include <cmath>
#include <sstream>

#include "specbias/hfs.hpp"

namespace specbias {

ScalingVariant parse_scaling(const std::string& s) {
  if (s == "none") return ScalingVariant::none;
  if (s == "hfs") return ScalingVariant::hfs;
  if (s == "fourier") return ScalingVariant::fourier;
  throw ValidationError("unknown scaling variant '" + s + "' (expected none|hfs|fourier)");
}

std::string to_string(ScalingVariant v) {
  switch (v) {
    case ScalingVariant::none:
      return "none";
    case ScalingVariant::hfs:
      return "hfs";
    case ScalingVariant::fourier:
      return "fourier";
  }
  return "none";
}

std::vector<int> ModelConfig::widths() const {
  std::vector<int> w;
  w.reserve(multipliers.size());
  for (int m : multipliers) w.push_back(base_width * m);
  return w;
}

int ModelConfig::patch_at(int level) const {
  return std::max(min_patch, patch_size >> level);
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("model: " + msg); };
  if (levels < 1) fail("levels must be >= 1");
  if (in_channels < 1 || out_channels < 1) fail("channel counts must be positive");
  if (base_width < 1) fail("base_width must be positive");
  if (static_cast<int>(multipliers.size()) != levels + 1) {
    fail("multipliers needs levels + 1 = " + std::to_string(levels + 1) + " entries, got " +
         std::to_string(multipliers.size()));
  }
  for (int m : multipliers) {
    if (m < 1) fail("multipliers must be positive");
  }
  const int div = 1 << levels;
  if (height % div != 0 || width % div != 0) {
    fail("input " + std::to_string(height) + "x" + std::to_string(width) +
         " is not divisible by 2^levels = " + std::to_string(div));
  }
  if (max_groups < 1) fail("max_groups must be positive");
  if (scaling == ScalingVariant::hfs) {
    if (patch_size < 1 || min_patch < 1) fail("patch sizes must be positive");
    for (int l = 0; l <= levels; ++l) {
      const int p = patch_at(l);
      const int h = height >> l;
      const int w = width >> l;
      if (h % p != 0 || w % p != 0) {
        fail("patch " + std::to_string(p) + " does not divide level " + std::to_string(l) +
             " size " + std::to_string(h) + "x" + std::to_string(w));
      }
    }
  }
  if (scaling == ScalingVariant::fourier && !(tau > 0.0 && tau < 1.0)) fail("tau must lie in (0,1)");
}

int groups_for(int channels, int max_groups) {
  for (int g = std::min(channels, max_groups); g > 1; --g) {
    if (channels % g == 0) return g;
  }
  return 1;
}

template <typename T>
ResUNet<T>::ResUNet(const ModelConfig& config, std::uint64_t seed) : config_(config), rng_(seed) {
  config_.validate();
  const auto w = config_.widths();
  const int L = config_.levels;

  stem_ = make_conv("stem", config_.in_channels, w[0], 3, 1);
  encoder_.resize(L);
  for (int l = 0; l < L; ++l) {
    const std::string name = "enc" + std::to_string(l);
    const int cin = l == 0 ? w[0] : w[l - 1];
    encoder_[l].push_back(make_block(name + ".block0", cin, w[l], l, "encoder"));
    encoder_[l].push_back(make_block(name + ".block1", w[l], w[l], l, "encoder"));
    down_.push_back(make_conv(name + ".down", w[l], w[l], 3, 2));
  }
  bottleneck_ = make_block("bottleneck", w[L - 1], w[L], L, "bottleneck");
  up_.resize(L);
  decoder_.resize(L);
  for (int l = L - 1; l >= 0; --l) {
    const std::string name = "dec" + std::to_string(l);
    up_[l] = make_conv(name + ".up", w[l + 1], w[l], 3, 1);
    decoder_[l].push_back(make_block(name + ".block0", 2 * w[l], w[l], l, "decoder"));
    decoder_[l].push_back(make_block(name + ".block1", w[l], w[l], l, "decoder"));
  }
  head_ = make_conv("head", w[0], config_.out_channels, 1, 1);
}

template <typename T>
Parameter<T>* ResUNet<T>::add_param(const std::string& name, Shape shape, bool decay) {
  params_.emplace_back(name, Tensor<T>(shape), decay);
  return &params_.back();
}

template <typename T>
typename ResUNet<T>::Conv ResUNet<T>::make_conv(const std::string& name, int cin, int cout, int k,
                                                int stride) {
  Conv c;
  c.w = add_param(name + ".w", Shape{cout, cin, k, k}, true);
  c.b = add_param(name + ".b", Shape{1, cout, 1, 1}, true);
  c.stride = stride;
  c.pad = k / 2;
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (cin * k * k)));
  for (auto& v : c.w->value.vec()) v = static_cast<T>(normal(rng_));
  return c;
}

template <typename T>
typename ResUNet<T>::Norm ResUNet<T>::make_norm(const std::string& name, int c) {
  Norm n;
  n.gamma = add_param(name + ".gamma", Shape{1, c, 1, 1}, true);
  n.beta = add_param(name + ".beta", Shape{1, c, 1, 1}, true);
  n.gamma->value.fill(T(1));
  n.groups = groups_for(c, config_.max_groups);
  return n;
}

template <typename T>
typename ResUNet<T>::Scale ResUNet<T>::make_scale(const std::string& name, int c, int level) {
  Scale s;
  if (config_.scaling == ScalingVariant::none) return s;
  const bool hfs = config_.scaling == ScalingVariant::hfs;
  s.a = add_param(name + (hfs ? ".lambda_dc" : ".lambda_low"), Shape{1, c, 1, 1}, false);
  s.b = add_param(name + (hfs ? ".lambda_hfc" : ".lambda_high"), Shape{1, c, 1, 1}, false);
  s.a->value.fill(static_cast<T>(hfs ? config_.lambda_dc_init : config_.lambda_low_init));
  s.b->value.fill(static_cast<T>(hfs ? config_.lambda_hfc_init : config_.lambda_high_init));
  s.patch = config_.patch_at(level);
  return s;
}

template <typename T>
typename ResUNet<T>::Block ResUNet<T>::make_block(const std::string& name, int cin, int cout,
                                                  int level, const std::string& component) {
  Block b;
  b.component = component;
  b.level = level;
  b.conv1 = make_conv(name + ".conv1", cin, cout, 3, 1);
  b.s1 = make_scale(name + ".scale1", cout, level);
  b.norm1 = make_norm(name + ".norm1", cout);
  b.conv2 = make_conv(name + ".conv2", cout, cout, 3, 1);
  b.s2 = make_scale(name + ".scale2", cout, level);
  b.norm2 = make_norm(name + ".norm2", cout);
  if (config_.residual_blocks) {
    if (cin != cout) {
      b.has_skip_conv = true;
      b.skip = make_conv(name + ".skip", cin, cout, 1, 1);
    }
    b.s3 = make_scale(name + ".scale_skip", cout, level);
  }
  return b;
}

template <typename T>
Var<T> ResUNet<T>::apply(Tape<T>& t, const Conv& c, const Var<T>& x) {
  return conv2d(x, t.parameter(*c.w), t.parameter(*c.b), c.stride, c.pad);
}

template <typename T>
Var<T> ResUNet<T>::apply(Tape<T>& t, const Norm& n, const Var<T>& x) {
  return group_norm(x, n.groups, t.parameter(*n.gamma), t.parameter(*n.beta));
}

template <typename T>
Var<T> ResUNet<T>::apply(Tape<T>& t, const Scale& s, const Var<T>& x) {
  if (s.a == nullptr) return x;
  if (config_.scaling == ScalingVariant::hfs) {
    return hfs_apply(x, t.parameter(*s.a), t.parameter(*s.b), s.patch);
  }
  return fourier_scale(x, t.parameter(*s.a), t.parameter(*s.b), config_.tau);
}

template <typename T>
Var<T> ResUNet<T>::apply(Tape<T>& t, const Block& b, const Var<T>& x) {
  Var<T> h = apply(t, b.conv1, x);
  h = gelu(apply(t, b.norm1, apply(t, b.s1, h)));
  h = apply(t, b.s2, apply(t, b.conv2, h));
  // The second norm sits after the residual sum: scaling sites on the skip
  // path would otherwise compound from block to block.
  if (config_.residual_blocks) {
    Var<T> s = b.has_skip_conv ? apply(t, b.skip, x) : x;
    h = add(h, apply(t, b.s3, s));
  }
  return gelu(apply(t, b.norm2, h));
}

namespace {

template <typename T>
void capture(std::vector<Latent>* out, const char* component, int level, const Var<T>& v) {
  if (out == nullptr) return;
  Latent lat;
  lat.component = component;
  lat.level = level;
  lat.shape = v.shape();
  lat.values.assign(v.value().vec().begin(), v.value().vec().end());
  out->push_back(std::move(lat));
}

}  // namespace

template <typename T>
Var<T> ResUNet<T>::forward(Tape<T>& tape, const Var<T>& x, std::vector<Latent>* latents) {
  const Shape& s = x.shape();
  if (s.c != config_.in_channels || s.h != config_.height || s.w != config_.width) {
    std::ostringstream msg;
    msg << "model: input " << s.str() << " does not match (n, " << config_.in_channels << ", "
        << config_.height << ", " << config_.width << ")";
    throw ValidationError(msg.str());
  }
  const int L = config_.levels;
  std::vector<Var<T>> skips(L);
  Var<T> h = apply(tape, stem_, x);
  for (int l = 0; l < L; ++l) {
    for (const auto& b : encoder_[l]) h = apply(tape, b, h);
    capture(latents, "encoder", l, h);
    skips[l] = h;
    h = downsample(h, tape.parameter(*down_[l].w), tape.parameter(*down_[l].b));
  }
  h = apply(tape, bottleneck_, h);
  capture(latents, "bottleneck", L, h);
  for (int l = L - 1; l >= 0; --l) {
    h = upsample(h, tape.parameter(*up_[l].w), tape.parameter(*up_[l].b));
    h = concat_channels(h, skips[l]);
    for (const auto& b : decoder_[l]) h = apply(tape, b, h);
    capture(latents, "decoder", l, h);
  }
  return apply(tape, head_, h);
}

template <typename T>
Tensor<T> ResUNet<T>::predict(const Tensor<T>& x, std::vector<Latent>* latents) {
  Tape<T> tape;
  tape.set_grad_enabled(false);
  return forward(tape, tape.input(x), latents).value();
}

template <typename T>
Tensor<T> ResUNet<T>::rollout(const Tensor<T>& history, int steps) {
  const int k = config_.out_channels;
  if (steps <= 0 || steps % k != 0) {
    throw ValidationError("rollout: steps must be a positive multiple of " + std::to_string(k));
  }
  const Shape hs = history.shape();
  const int cin = config_.in_channels;
  Tensor<T> out(Shape{hs.n, steps, hs.h, hs.w});
  Tensor<T> hist = history;
  const std::size_t plane = static_cast<std::size_t>(hs.h) * hs.w;
  for (int done = 0; done < steps; done += k) {
    const Tensor<T> pred = predict(hist);
    Tensor<T> next(hs);
    for (int n = 0; n < hs.n; ++n) {
      for (int c = 0; c < k; ++c) {
        std::copy_n(pred.plane(n, c), plane, out.plane(n, done + c));
      }
      // Newest frames last: shift the window left by k and append the prediction.
      for (int c = 0; c < cin; ++c) {
        const int src = c + k;
        const T* from = src < cin ? hist.plane(n, src) : pred.plane(n, src - cin);
        std::copy_n(from, plane, next.plane(n, c));
      }
    }
    hist = std::move(next);
  }
  return out;
}

template <typename T>
std::vector<Parameter<T>*> ResUNet<T>::parameter_ptrs() {
  std::vector<Parameter<T>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
std::size_t ResUNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
std::size_t ResUNet<T>::scaling_parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (!p.decay) n += p.value.size();
  }
  return n;
}

template <typename T>
double ResUNet<T>::scaling_overhead() const {
  return static_cast<double>(scaling_parameter_count()) / static_cast<double>(parameter_count());
}

template <typename T>
std::vector<LambdaRow> ResUNet<T>::lambda_snapshot() const {
  if (config_.scaling == ScalingVariant::none) {
    throw ValidationError("lambda_snapshot: model has no scaling sites");
  }
  const int L = config_.levels;
  struct Acc {
    double a = 0.0;
    double b = 0.0;
    std::size_t n = 0;
  };
  std::vector<Acc> enc(L);
  std::vector<Acc> dec(L);
  auto add_block = [](Acc& acc, const Block& blk) {
    for (const Scale* s : {&blk.s1, &blk.s2, &blk.s3}) {
      if (s->a == nullptr) continue;
      for (std::size_t i = 0; i < s->a->value.size(); ++i) {
        acc.a += s->a->value[i];
        acc.b += s->b->value[i];
      }
      acc.n += s->a->value.size();
    }
  };
  for (int l = 0; l < L; ++l) {
    for (const auto& b : encoder_[l]) add_block(enc[l], b);
    for (const auto& b : decoder_[l]) add_block(dec[l], b);
  }
  add_block(enc[L - 1], bottleneck_);
  std::vector<LambdaRow> rows;
  for (int l = 0; l < L; ++l) {
    rows.push_back({"encoder", l, enc[l].a / enc[l].n, enc[l].b / enc[l].n});
  }
  for (int l = L - 1; l >= 0; --l) {
    rows.push_back({"decoder", l, dec[l].a / dec[l].n, dec[l].b / dec[l].n});
  }
  return rows;
}

template <typename T>
void ResUNet<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class ResUNet<float>;
template class ResUNet<double>;

const std::vector<WidthPreset>& width_presets() {
  static const std::vector<WidthPreset> presets = {
      {"desk", 8, {1, 1, 2, 2, 4, 5}},
      {"1.7M", 10, {1, 2, 4, 8, 8, 10}},
      {"3.5M", 14, {1, 2, 4, 8, 9, 9}},
      {"16M", 31, {1, 2, 4, 8, 8, 10}},
  };
  return presets;
}

const WidthPreset& width_preset(const std::string& name) {
  for (const auto& p : width_presets()) {
    if (p.name == name) return p;
  }
  throw ValidationError("unknown width preset '" + name + "'");
}

}  // namespace specbias
