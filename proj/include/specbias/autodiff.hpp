#pragma once

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "specbias/tensor.hpp"

namespace specbias {

/// Trainable tensor owned by a model. The tape accumulates into `grad`.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  /// False for parameters exempt from weight decay (the HFS / Fourier scales).
  bool decay = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, bool wd = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), decay(wd) {}

  void zero_grad() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    grad.fill(T(0));
  }
};

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename T>
class Var {
 public:
  Var() = default;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape<T>* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr && id_ >= 0; }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

/// Ordered record of primitive applications for one forward pass.
///
/// Nodes are appended in execution order, so every input of node i has an
/// index below i and a single reverse sweep visits each node once.
template <typename T>
class Tape {
 public:
  /// Accumulates `grad_out` into the input gradients; entries are null for
  /// inputs that do not require a gradient.
  using Backward =
      std::function<void(const Tensor<T>& grad_out, std::span<Tensor<T>* const> grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf bound to a model parameter; backward accumulates into `p.grad`.
  Var<T> parameter(Parameter<T>& p);
  /// Leaf owning its value. Its gradient, if requested, is read via grad().
  Var<T> input(Tensor<T> value, bool requires_grad = false);
  /// Append the result of a primitive. Checks the output for NaN/Inf.
  Var<T> record(Tensor<T> out, std::vector<Var<T>> inputs, Backward fn);

  /// True when a primitive over these inputs must keep a backward closure.
  bool needs_grad(std::initializer_list<Var<T>> inputs) const;

  /// Reverse sweep from a scalar loss. Repeated calls accumulate.
  void backward(const Var<T>& loss);

  const Tensor<T>& value(int id) const { return *nodes_.at(id).value; }
  bool requires_grad(int id) const { return nodes_.at(id).requires_grad; }
  /// Gradient of an owned input leaf (null if it never received one).
  const Tensor<T>* grad(const Var<T>& v) const;

  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    const Tensor<T>* value = nullptr;
    Tensor<T> owned;
    Tensor<T> leaf_grad;
    Tensor<T>* sink = nullptr;
    bool requires_grad = false;
    std::vector<int> inputs;
    Backward fn;
  };

  Node& push();

  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

/// 2D cross-correlation. w: (c_out, c_in, k, k) with k in {1,3}; b: (1, c_out, 1, 1).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad);

/// Tanh-approximated GELU.
template <typename T>
Var<T> gelu(const Var<T>& x);

/// Group normalization over (channels-in-group, h, w) followed by a per-channel affine.
template <typename T>
Var<T> group_norm(const Var<T>& x, int groups, const Var<T>& gamma, const Var<T>& beta,
                  double eps = 1e-5);

/// Nearest-neighbour x2 upsampling.
template <typename T>
Var<T> upsample_nearest2x(const Var<T>& x);

/// Learned downsampling: stride-2 3x3 convolution.
template <typename T>
Var<T> downsample(const Var<T>& x, const Var<T>& w, const Var<T>& b);

/// Learned upsampling: nearest x2 followed by a 3x3 convolution.
template <typename T>
Var<T> upsample(const Var<T>& x, const Var<T>& w, const Var<T>& b);

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

/// x * lambda[c]. lambda: (1, c, 1, 1).
template <typename T>
Var<T> scale_per_channel(const Var<T>& x, const Var<T>& lambda);

/// Mean squared error over every element; returns a (1,1,1,1) tensor.
template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Var<T>& target);

/// Sum of x * weights over every element; used to reduce maps to a scalar in tests.
template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& weights);

// ---------------------------------------------------------------------------
// Finite-difference oracle
// ---------------------------------------------------------------------------

struct FdReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Scalar loss built on a fresh tape from the current parameter values.
using LossFn = std::function<Var<double>(Tape<double>&)>;

/// Three-point (f(x+e) - f(x-e)) / 2e, or the five-point stencil with
/// O(e^4) truncation for deep compositions where roundoff at small e and
/// curvature at large e both exceed the tolerance.
enum class FdStencil { central2, central4 };

/// Central-difference check of every coordinate of `params` against the
/// tape's analytic gradient. Relative error uses the denominator
/// max(|analytic|, |numeric|, floor), so coordinates whose gradient sits below
/// `floor` are held to an absolute agreement of tolerance * floor.
FdReport finite_difference_check(const LossFn& f, std::span<Parameter<double>* const> params,
                                 double eps = 1e-5, FdStencil stencil = FdStencil::central2,
                                 double floor = 1e-8);

}  // namespace specbias
