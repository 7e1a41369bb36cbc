#include <cmath>

#include "specbias/autodiff.hpp"

namespace specbias {

template <typename T>
typename Tape<T>::Node& Tape<T>::push() {
  nodes_.emplace_back();
  return nodes_.back();
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& p) {
  if (p.grad.shape() != p.value.shape()) p.zero_grad();
  Node& node = push();
  node.value = &p.value;
  node.sink = &p.grad;
  node.requires_grad = grad_enabled_;
  return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename T>
Var<T> Tape<T>::input(Tensor<T> value, bool requires_grad) {
  Node& node = push();
  node.owned = std::move(value);
  node.value = &node.owned;
  node.requires_grad = requires_grad && grad_enabled_;
  return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename T>
bool Tape<T>::needs_grad(std::initializer_list<Var<T>> inputs) const {
  if (!grad_enabled_) return false;
  for (const auto& v : inputs) {
    if (v.valid() && requires_grad(v.id())) return true;
  }
  return false;
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> out, std::vector<Var<T>> inputs, Backward fn) {
  if (!out.all_finite()) {
    throw NumericalError("non-finite value produced by primitive #" +
                         std::to_string(nodes_.size()));
  }
  Node& node = push();
  node.owned = std::move(out);
  node.value = &node.owned;
  bool any = false;
  for (const auto& v : inputs) {
    if (v.tape() != this) throw ValidationError("input recorded on a different tape");
    node.inputs.push_back(v.id());
    any = any || requires_grad(v.id());
  }
  node.requires_grad = grad_enabled_ && any;
  if (node.requires_grad) node.fn = std::move(fn);
  return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename T>
const Tensor<T>* Tape<T>::grad(const Var<T>& v) const {
  const Node& node = nodes_.at(v.id());
  if (node.sink != nullptr) return node.sink;
  return node.leaf_grad.empty() ? nullptr : &node.leaf_grad;
}

namespace {

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  if (dst.shape() != src.shape()) dst = Tensor<T>(src.shape());
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0; i < src.size(); ++i) d[i] += s[i];
}

}  // namespace

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (loss.tape() != this) throw ValidationError("backward: loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw ValidationError("backward: loss is not a scalar, shape " + loss.shape().str());
  }
  if (!requires_grad(loss.id())) {
    throw ValidationError("backward: loss is detached from every trainable leaf");
  }

  std::vector<Tensor<T>> grads(nodes_.size());
  grads[loss.id()] = Tensor<T>(loss.shape(), T(1));
  std::vector<Tensor<T>*> slots;

  for (int i = loss.id(); i >= 0; --i) {
    if (grads[i].empty()) continue;
    Node& node = nodes_[i];
    if (node.fn) {
      slots.clear();
      for (int in : node.inputs) {
        if (nodes_[in].requires_grad) {
          if (grads[in].empty()) grads[in] = Tensor<T>(nodes_[in].value->shape());
          slots.push_back(&grads[in]);
        } else {
          slots.push_back(nullptr);
        }
      }
      node.fn(grads[i], slots);
    } else if (node.sink != nullptr) {
      accumulate(*node.sink, grads[i]);
    } else if (node.requires_grad) {
      accumulate(node.leaf_grad, grads[i]);
    }
    grads[i] = Tensor<T>();
  }
}

template class Tape<float>;
template class Tape<double>;

FdReport finite_difference_check(const LossFn& f, std::span<Parameter<double>* const> params,
                                 double eps, FdStencil stencil, double floor) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape;
    tape.backward(f(tape));
  }
  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  auto evaluate = [&f]() {
    Tape<double> tape;
    tape.set_grad_enabled(false);
    return f(tape).value()[0];
  };

  FdReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& values = params[pi]->value;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      auto at = [&](double offset) {
        values[i] = saved + offset;
        return evaluate();
      };
      double numeric = 0.0;
      if (stencil == FdStencil::central2) {
        numeric = (at(eps) - at(-eps)) / (2.0 * eps);
      } else {
        numeric = (8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps))) / (12.0 * eps);
      }
      values[i] = saved;

      const double a = analytic[pi][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error || report.checked == 1) {
        report.max_rel_error = rel;
        report.worst_param = params[pi]->name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace specbias
