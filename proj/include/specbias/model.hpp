#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "specbias/autodiff.hpp"

namespace specbias {

enum class ScalingVariant { none, hfs, fourier };

ScalingVariant parse_scaling(const std::string& s);
std::string to_string(ScalingVariant v);

struct ModelConfig {
  int in_channels = 20;
  int out_channels = 5;
  int levels = 5;
  int height = 64;
  int width = 64;
  int base_width = 8;
  /// levels + 1 entries; the last one is the bottleneck.
  std::vector<int> multipliers{1, 1, 2, 2, 4, 5};
  bool residual_blocks = true;
  ScalingVariant scaling = ScalingVariant::none;
  /// Patch size at full resolution; halved per level, never below min_patch.
  int patch_size = 8;
  int min_patch = 2;
  /// Group count is the largest divisor of the channel count not above this.
  int max_groups = 8;
  double lambda_dc_init = 1.0;
  double lambda_hfc_init = 1.0;
  /// Fourier variant: low/high initial scales and radial cutoff.
  double lambda_low_init = 1.0;
  double lambda_high_init = 1.0;
  double tau = 0.5;

  std::vector<int> widths() const;
  int patch_at(int level) const;
  /// Throws ValidationError on any violated build-time invariant.
  void validate() const;
};

int groups_for(int channels, int max_groups);

/// Feature map emitted by forward() for latent inspection.
struct Latent {
  std::string component;  ///< "encoder" | "bottleneck" | "decoder"
  int level = 0;
  Shape shape;
  std::vector<double> values;
};

/// Per-layer mean of the two scale vectors (DC/HFC, or low/high for the
/// Fourier variant). Bottleneck sites are folded into the deepest encoder layer.
struct LambdaRow {
  std::string component;  ///< "encoder" | "decoder"
  int layer = 0;          ///< resolution level
  double mean_lambda_dc = 0.0;
  double mean_lambda_hfc = 0.0;
};

/// Residual UNet operator over (n, in_channels, H, W) -> (n, out_channels, H, W).
///
/// Encoder level l: two blocks at width w_l then a stride-2 conv. Bottleneck:
/// one block at w_L. Decoder level l: learned upsample to w_l, concatenation
/// with the encoder output of level l, two blocks. A 1x1 head maps w_0 to the
/// outputs. Scaling sites sit on each conv output and on the block skip path;
/// the second norm of a block follows the residual sum.
template <typename T>
class ResUNet {
 public:
  ResUNet(const ModelConfig& config, std::uint64_t seed);

  ResUNet(const ResUNet&) = delete;
  ResUNet& operator=(const ResUNet&) = delete;
  ResUNet(ResUNet&&) = default;

  const ModelConfig& config() const { return config_; }

  Var<T> forward(Tape<T>& tape, const Var<T>& x, std::vector<Latent>* latents = nullptr);

  /// Forward without gradient bookkeeping.
  Tensor<T> predict(const Tensor<T>& x, std::vector<Latent>* latents = nullptr);

  /// Feeds each predicted block back as the newest history frames.
  Tensor<T> rollout(const Tensor<T>& history, int steps);

  std::deque<Parameter<T>>& parameters() { return params_; }
  const std::deque<Parameter<T>>& parameters() const { return params_; }
  std::vector<Parameter<T>*> parameter_ptrs();

  std::size_t parameter_count() const;
  /// Parameters belonging to scaling sites (lambda vectors).
  std::size_t scaling_parameter_count() const;
  double scaling_overhead() const;

  std::vector<LambdaRow> lambda_snapshot() const;

  void zero_grad();

 private:
  struct Conv {
    Parameter<T>* w = nullptr;
    Parameter<T>* b = nullptr;
    int stride = 1;
    int pad = 0;
  };
  struct Norm {
    Parameter<T>* gamma = nullptr;
    Parameter<T>* beta = nullptr;
    int groups = 1;
  };
  struct Scale {
    Parameter<T>* a = nullptr;  ///< lambda_dc or lambda_low
    Parameter<T>* b = nullptr;  ///< lambda_hfc or lambda_high
    int patch = 0;
  };
  struct Block {
    Conv conv1, conv2;
    Norm norm1, norm2;
    bool has_skip_conv = false;
    Conv skip;
    Scale s1, s2, s3;
    std::string component;
    int level = 0;
  };

  Parameter<T>* add_param(const std::string& name, Shape shape, bool decay);
  Conv make_conv(const std::string& name, int cin, int cout, int k, int stride);
  Norm make_norm(const std::string& name, int c);
  Scale make_scale(const std::string& name, int c, int level);
  Block make_block(const std::string& name, int cin, int cout, int level,
                   const std::string& component);

  Var<T> apply(Tape<T>& t, const Conv& c, const Var<T>& x);
  Var<T> apply(Tape<T>& t, const Norm& n, const Var<T>& x);
  Var<T> apply(Tape<T>& t, const Scale& s, const Var<T>& x);
  Var<T> apply(Tape<T>& t, const Block& b, const Var<T>& x);

  ModelConfig config_;
  std::deque<Parameter<T>> params_;
  /// He-normal draws in declaration order; only conv weights consume it.
  std::mt19937_64 rng_;

  Conv stem_;
  std::vector<std::vector<Block>> encoder_;
  std::vector<Conv> down_;
  Block bottleneck_;
  std::vector<Conv> up_;
  std::vector<std::vector<Block>> decoder_;
  Conv head_;
};

extern template class ResUNet<float>;
extern template class ResUNet<double>;

/// Width tables for the size sweep (about 1.7M, 3.5M
/// and 16M parameters with the default 5-level layout) and the desk model.
struct WidthPreset {
  std::string name;
  int base_width;
  std::vector<int> multipliers;
};
const std::vector<WidthPreset>& width_presets();
const WidthPreset& width_preset(const std::string& name);

}  // namespace specbias
