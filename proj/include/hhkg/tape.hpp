#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <vector>

#include "hhkg/matrix.hpp"
#include "hhkg/parameter.hpp"

namespace hhkg {

// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;

  bool valid() const noexcept { return id != kNone; }
};

// Reverse-mode tape over matrix values. Each recorded op stores its
// forward value and, when any input needs a gradient, a closure that
// pushes the output gradient back to its inputs. With gradients disabled
// no closures are kept, so evaluation passes hold only values.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, Var self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var constant(Matrix<T> value) { return push(std::move(value), false, nullptr); }

  // The parameter's value is read in place, so it must not change while
  // this tape is alive.
  Var parameter(Parameter<T>& p) {
    Var v = push(Matrix<T>(), grad_enabled_ && p.trainable, nullptr);
    nodes_[v.id].param = &p;
    return v;
  }

  Var record(Matrix<T> value, std::initializer_list<Var> inputs, Backward backward) {
    bool needs = false;
    for (Var in : inputs) needs = needs || nodes_[in.id].needs_grad;
    return push(std::move(value), grad_enabled_ && needs, std::move(backward));
  }

  Var record(Matrix<T> value, const std::vector<Var>& inputs, Backward backward) {
    bool needs = false;
    for (Var in : inputs) needs = needs || nodes_[in.id].needs_grad;
    return push(std::move(value), grad_enabled_ && needs, std::move(backward));
  }

  const Matrix<T>& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.param ? n.param->value : n.value;
  }
  bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

  // Gradient buffer of v, allocated as zeros on first use.
  Matrix<T>& grad(Var v) {
    Node& n = nodes_.at(v.id);
    const Matrix<T>& val = value(v);
    if (n.grad.empty() && !val.empty()) n.grad = Matrix<T>(val.rows(), val.cols());
    return n.grad;
  }

  // Seeds d(loss)/d(loss) = 1 for a 1x1 loss, runs every closure in reverse
  // order and adds parameter gradients into Parameter::grad. Each gradient
  // buffer is released once it has been propagated, so intermediate
  // gradients are not readable afterwards.
  void backward(Var loss) {
    require(value(loss).rows() == 1 && value(loss).cols() == 1, "backward: loss must be 1x1");
    if (!needs_grad(loss)) return;
    grad(loss)(0, 0) = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, Var{i});
      if (n.param) {
        auto dst = n.param->grad.flat();
        auto src = nodes_[i].grad.flat();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
      n.grad = Matrix<T>();
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    Backward backward;
    Parameter<T>* param = nullptr;
    bool needs_grad = false;
  };

  Var push(Matrix<T> value, bool needs, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs;
    if (needs) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

}  // namespace hhkg
