// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "dietweight/tensor.hpp"

namespace dietweight {

/// A trainable tensor with its gradient accumulator.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Records primitive applications in execution order (which is a topological
/// order) and runs a single reverse sweep over them. One tape per thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to `param`; backward adds into param.grad.
  Var parameter(Parameter& param);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient of the last backward() loss w.r.t. this node (zeros if unreached).
  Tensor grad(Var v) const;

  /// Accumulates dLoss/dParam into every reachable Parameter. Throws
  /// ShapeError when `loss` is not a single value.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Used by the primitive implementations.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward, const char* op);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Tensor& out_grad(std::size_t id) const { return nodes_[id].grad; }
  /// Zero-initialized on first use within a sweep.
  Tensor& grad_slot(std::size_t id);
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    const char* op = "";
  };

  std::vector<Node> nodes_;
};

// Primitives. Shape mismatches throw ShapeError naming both shapes; a NaN or
// Inf in any output throws NumericError.

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
/// Multiplication by a constant.
Var scale(Var a, double factor);
/// [m,k] x [k,n] -> [m,n].
Var matmul(Var a, Var b);
Var transpose(Var a);
Var relu(Var a);
/// Softmax over the last axis.
Var softmax(Var a);
/// Per-row normalization over the last axis, then gain * xhat + bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Scalar mean/sum over every element.
Var mean(Var a);
Var sum(Var a);
Var square(Var a);
/// Concatenates rank-2 tensors along axis 0 (rows) or 1 (columns).
Var concat(const std::vector<Var>& parts, std::size_t axis);
/// Rows or columns [begin, end) of a rank-2 tensor.
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
/// Adds a length-c vector (shape [c] or [1,c]) to every row of an [r,c] tensor.
Var broadcast_add(Var x, Var row);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Compares reverse-mode gradients of `loss_fn` with central differences of
/// step h, coordinate by coordinate. Relative error per coordinate is
/// |g_ad - g_fd| / max(1e-6, |g_ad| + |g_fd|). Parameter values are restored;
/// The floor absorbs rounding on gradients that are exactly zero (an attention
/// key bias, for one).
/// their gradients are left holding the reverse-mode result.
GradCheckResult finite_diff_check(const std::function<Var(Tape&)>& loss_fn,
                                  const std::vector<Parameter*>& params, double h = 1e-5);

}  // namespace dietweight
