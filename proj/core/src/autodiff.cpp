// SPDX-License-Identifier: Apache-2.0
#include "dietweight/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "dietweight/error.hpp"

namespace dietweight {

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

const Tensor& Var::value() const { return tape->value(*this); }

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.op = "constant";
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& param) {
  if (!param.grad.same_shape(param.value)) param.grad = Tensor(param.value.shape());
  Node node;
  node.value = param.value;
  node.requires_grad = true;
  node.param = &param;
  node.op = "parameter";
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward, const char* op) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  Node node;
  node.value = std::move(value);
  node.op = op;
  for (std::size_t in : inputs) node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  node.inputs = std::move(inputs);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape());
    node.has_grad = true;
  }
  return node.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& node = nodes_[v.id];
  return node.has_grad ? node.grad : Tensor(node.value.shape());
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ConfigError("backward called with a Var from another tape");
  if (value(loss).size() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + shape_string(value(loss).shape()));
  }
  for (auto& node : nodes_) {
    node.has_grad = false;
    node.grad = Tensor();
  }
  grad_slot(loss.id).fill(1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.requires_grad) continue;
    if (node.param != nullptr) {
      auto dst = node.param->grad.values();
      auto src = node.grad.values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    } else if (node.backward) {
      node.backward(*this, i);
    }
  }
}

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

namespace {

Tape& tape_of(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw ConfigError("operands recorded on different tapes");
  return *a.tape;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got " + shape_string(a.shape()));
  }
}

void accumulate(Tape& t, std::size_t id, const Tensor& delta, double factor = 1.0) {
  if (!t.requires_grad(id)) return;
  auto dst = t.grad_slot(id).values();
  auto src = delta.values();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += factor * src[k];
}

template <typename Fn>
Tensor map_values(const Tensor& a, Fn fn) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i]);
  return out;
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  require_same_shape(x, y, "add");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return t.record(std::move(out), {a.id, b.id},
                  [](Tape& tp, std::size_t self) {
                    const auto& in = tp.inputs(self);
                    accumulate(tp, in[0], tp.out_grad(self));
                    accumulate(tp, in[1], tp.out_grad(self));
                  },
                  "add");
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  require_same_shape(x, y, "sub");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return t.record(std::move(out), {a.id, b.id},
                  [](Tape& tp, std::size_t self) {
                    const auto& in = tp.inputs(self);
                    accumulate(tp, in[0], tp.out_grad(self));
                    accumulate(tp, in[1], tp.out_grad(self), -1.0);
                  },
                  "sub");
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  require_same_shape(x, y, "mul");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return t.record(std::move(out), {a.id, b.id},
                  [](Tape& tp, std::size_t self) {
                    const auto& in = tp.inputs(self);
                    const Tensor& g = tp.out_grad(self);
                    const Tensor& xv = tp.value(in[0]);
                    const Tensor& yv = tp.value(in[1]);
                    if (tp.requires_grad(in[0])) {
                      auto dx = tp.grad_slot(in[0]).values();
                      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * yv[i];
                    }
                    if (tp.requires_grad(in[1])) {
                      auto dy = tp.grad_slot(in[1]).values();
                      for (std::size_t i = 0; i < dy.size(); ++i) dy[i] += g[i] * xv[i];
                    }
                  },
                  "mul");
}

Var scale(Var a, double factor) {
  Tape& t = *a.tape;
  Tensor out = map_values(t.value(a), [factor](double v) { return v * factor; });
  return t.record(std::move(out), {a.id},
                  [factor](Tape& tp, std::size_t self) {
                    accumulate(tp, tp.inputs(self)[0], tp.out_grad(self), factor);
                  },
                  "scale");
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  require_rank2(x, "matmul");
  require_rank2(y, "matmul");
  const std::size_t m = x.shape()[0];
  const std::size_t k = x.shape()[1];
  const std::size_t n = y.shape()[1];
  if (y.shape()[0] != k) {
    throw ShapeError("matmul: shape mismatch " + shape_string(x.shape()) + " x " +
                     shape_string(y.shape()));
  }
  Tensor out(Shape{m, n});
  gemm_accumulate(x.data(), y.data(), out.data(), m, k, n);
  return t.record(std::move(out), {a.id, b.id},
                  [m, k, n](Tape& tp, std::size_t self) {
                    const auto& in = tp.inputs(self);
                    const Tensor& g = tp.out_grad(self);  // m x n
                    const Tensor& xv = tp.value(in[0]);   // m x k
                    const Tensor& yv = tp.value(in[1]);   // k x n
                    if (tp.requires_grad(in[0])) {
                      // dA = dC * B^T
                      double* da = tp.grad_slot(in[0]).data();
                      for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t p = 0; p < k; ++p) {
                          double acc = 0.0;
                          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * yv[p * n + j];
                          da[i * k + p] += acc;
                        }
                      }
                    }
                    if (tp.requires_grad(in[1])) {
                      // dB = A^T * dC
                      double* db = tp.grad_slot(in[1]).data();
                      for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t p = 0; p < k; ++p) {
                          const double a_ip = xv[i * k + p];
                          if (a_ip == 0.0) continue;
                          for (std::size_t j = 0; j < n; ++j) db[p * n + j] += a_ip * g[i * n + j];
                        }
                      }
                    }
                  },
                  "matmul");
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  require_rank2(x, "transpose");
  const std::size_t r = x.shape()[0];
  const std::size_t c = x.shape()[1];
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return t.record(std::move(out), {a.id},
                  [r, c](Tape& tp, std::size_t self) {
                    const std::size_t in = tp.inputs(self)[0];
                    if (!tp.requires_grad(in)) return;
                    const Tensor& g = tp.out_grad(self);
                    double* dx = tp.grad_slot(in).data();
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += g[j * r + i];
                  },
                  "transpose");
}

Var relu(Var a) {
  Tape& t = *a.tape;
  Tensor out = map_values(t.value(a), [](double v) { return v > 0.0 ? v : 0.0; });
  return t.record(std::move(out), {a.id},
                  [](Tape& tp, std::size_t self) {
                    const std::size_t in = tp.inputs(self)[0];
                    if (!tp.requires_grad(in)) return;
                    const Tensor& g = tp.out_grad(self);
                    const Tensor& x = tp.value(in);
                    auto dx = tp.grad_slot(in).values();
                    for (std::size_t i = 0; i < dx.size(); ++i) {
                      if (x[i] > 0.0) dx[i] += g[i];
                    }
                  },
                  "relu");
}

Var softmax(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * cols;
    double* o = out.data() + r * cols;
    const double peak = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - peak);
      total += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  return t.record(std::move(out), {a.id},
                  [rows, cols](Tape& tp, std::size_t self) {
                    const std::size_t in = tp.inputs(self)[0];
                    if (!tp.requires_grad(in)) return;
                    const Tensor& g = tp.out_grad(self);
                    const Tensor& y = tp.value(self);
                    double* dx = tp.grad_slot(in).data();
                    for (std::size_t r = 0; r < rows; ++r) {
                      const std::size_t off = r * cols;
                      double dot = 0.0;
                      for (std::size_t c = 0; c < cols; ++c) dot += g[off + c] * y[off + c];
                      for (std::size_t c = 0; c < cols; ++c) dx[off + c] += y[off + c] * (g[off + c] - dot);
                    }
                  },
                  "softmax");
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& t = tape_of(x, gain);
  tape_of(x, bias);
  const Tensor& xv = t.value(x);
  const std::size_t rows = xv.rows();
  const std::size_t cols = xv.cols();
  if (t.value(gain).size() != cols || t.value(bias).size() != cols) {
    throw ShapeError("layer_norm: gain/bias " + shape_string(t.value(gain).shape()) + "/" +
                     shape_string(t.value(bias).shape()) + " do not match last axis of " +
                     shape_string(xv.shape()));
  }
  const Tensor& gv = t.value(gain);
  const Tensor& bv = t.value(bias);
  Tensor out(xv.shape());
  // Normalized values and inverse std are kept for the backward rule.
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += in[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (in[c] - mu) * inv_std[r];
      xhat[r * cols + c] = h;
      out[r * cols + c] = gv[c] * h + bv[c];
    }
  }
  return t.record(
      std::move(out), {x.id, gain.id, bias.id},
      [rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp, std::size_t self) {
        const auto& in = tp.inputs(self);
        const Tensor& g = tp.out_grad(self);
        const Tensor& gv = tp.value(in[1]);
        if (tp.requires_grad(in[1])) {
          double* dgain = tp.grad_slot(in[1]).data();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) dgain[c] += g[r * cols + c] * xhat[r * cols + c];
        }
        if (tp.requires_grad(in[2])) {
          double* dbias = tp.grad_slot(in[2]).data();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) dbias[c] += g[r * cols + c];
        }
        if (tp.requires_grad(in[0])) {
          double* dx = tp.grad_slot(in[0]).data();
          const double n = static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t off = r * cols;
            double mean_dh = 0.0;
            double mean_dh_h = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double dh = g[off + c] * gv[c];
              mean_dh += dh;
              mean_dh_h += dh * xhat[off + c];
            }
            mean_dh /= n;
            mean_dh_h /= n;
            for (std::size_t c = 0; c < cols; ++c) {
              const double dh = g[off + c] * gv[c];
              dx[off + c] += inv_std[r] * (dh - mean_dh - xhat[off + c] * mean_dh_h);
            }
          }
        }
      },
      "layer_norm");
}

Var sum(Var a) {
  Tape& t = *a.tape;
  double total = 0.0;
  for (double v : t.value(a).values()) total += v;
  return t.record(Tensor::scalar(total), {a.id},
                  [](Tape& tp, std::size_t self) {
                    const std::size_t in = tp.inputs(self)[0];
                    if (!tp.requires_grad(in)) return;
                    const double g = tp.out_grad(self)[0];
                    for (double& d : tp.grad_slot(in).values()) d += g;
                  },
                  "sum");
}

Var mean(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  if (x.size() == 0) throw ShapeError("mean of an empty tensor");
  double total = 0.0;
  for (double v : x.values()) total += v;
  const double n = static_cast<double>(x.size());
  return t.record(Tensor::scalar(total / n), {a.id},
                  [n](Tape& tp, std::size_t self) {
                    const std::size_t in = tp.inputs(self)[0];
                    if (!tp.requires_grad(in)) return;
                    const double g = tp.out_grad(self)[0] / n;
                    for (double& d : tp.grad_slot(in).values()) d += g;
                  },
                  "mean");
}

Var square(Var a) {
  Tape& t = *a.tape;
  Tensor out = map_values(t.value(a), [](double v) { return v * v; });
  return t.record(std::move(out), {a.id},
                  [](Tape& tp, std::size_t self) {
                    const std::size_t in = tp.inputs(self)[0];
                    if (!tp.requires_grad(in)) return;
                    const Tensor& g = tp.out_grad(self);
                    const Tensor& x = tp.value(in);
                    auto dx = tp.grad_slot(in).values();
                    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += 2.0 * x[i] * g[i];
                  },
                  "square");
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  if (axis > 1) throw ShapeError("concat axis must be 0 or 1");
  Tape& t = *parts.front().tape;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> extents;
  const Tensor& first = t.value(parts.front());
  require_rank2(first, "concat");
  const std::size_t other = first.shape()[1 - axis];
  std::size_t total = 0;
  for (Var p : parts) {
    tape_of(parts.front(), p);
    const Tensor& v = t.value(p);
    require_rank2(v, "concat");
    if (v.shape()[1 - axis] != other) {
      throw ShapeError("concat: shape mismatch " + shape_string(first.shape()) + " vs " +
                       shape_string(v.shape()) + " along axis " + std::to_string(axis));
    }
    ids.push_back(p.id);
    extents.push_back(v.shape()[axis]);
    total += v.shape()[axis];
  }
  const std::size_t rows = axis == 0 ? total : other;
  const std::size_t cols = axis == 0 ? other : total;
  Tensor out(Shape{rows, cols});
  std::size_t offset = 0;
  for (std::size_t p = 0; p < ids.size(); ++p) {
    const Tensor& v = t.value(ids[p]);
    const std::size_t vr = v.shape()[0];
    const std::size_t vc = v.shape()[1];
    for (std::size_t i = 0; i < vr; ++i)
      for (std::size_t j = 0; j < vc; ++j) {
        if (axis == 0) {
          out[(offset + i) * cols + j] = v[i * vc + j];
        } else {
          out[i * cols + offset + j] = v[i * vc + j];
        }
      }
    offset += extents[p];
  }
  return t.record(std::move(out), ids,
                  [axis, cols, extents](Tape& tp, std::size_t self) {
                    const auto& in = tp.inputs(self);
                    const Tensor& g = tp.out_grad(self);
                    std::size_t off = 0;
                    for (std::size_t p = 0; p < in.size(); ++p) {
                      if (tp.requires_grad(in[p])) {
                        Tensor& d = tp.grad_slot(in[p]);
                        const std::size_t vr = d.shape()[0];
                        const std::size_t vc = d.shape()[1];
                        for (std::size_t i = 0; i < vr; ++i)
                          for (std::size_t j = 0; j < vc; ++j) {
                            d[i * vc + j] += axis == 0 ? g[(off + i) * cols + j] : g[i * cols + off + j];
                          }
                      }
                      off += extents[p];
                    }
                  },
                  "concat");
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  require_rank2(x, "slice");
  if (axis > 1 || begin >= end || end > x.shape()[axis]) {
    throw ShapeError("slice: invalid range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") on axis " + std::to_string(axis) + " of " + shape_string(x.shape()));
  }
  const std::size_t rows = x.shape()[0];
  const std::size_t cols = x.shape()[1];
  const std::size_t out_rows = axis == 0 ? end - begin : rows;
  const std::size_t out_cols = axis == 0 ? cols : end - begin;
  const std::size_t r0 = axis == 0 ? begin : 0;
  const std::size_t c0 = axis == 0 ? 0 : begin;
  Tensor out(Shape{out_rows, out_cols});
  for (std::size_t i = 0; i < out_rows; ++i)
    for (std::size_t j = 0; j < out_cols; ++j) out[i * out_cols + j] = x[(r0 + i) * cols + c0 + j];
  return t.record(std::move(out), {a.id},
                  [=](Tape& tp, std::size_t self) {
                    const std::size_t in = tp.inputs(self)[0];
                    if (!tp.requires_grad(in)) return;
                    const Tensor& g = tp.out_grad(self);
                    double* dx = tp.grad_slot(in).data();
                    for (std::size_t i = 0; i < out_rows; ++i)
                      for (std::size_t j = 0; j < out_cols; ++j)
                        dx[(r0 + i) * cols + c0 + j] += g[i * out_cols + j];
                  },
                  "slice");
}

Var broadcast_add(Var x, Var row) {
  Tape& t = tape_of(x, row);
  const Tensor& xv = t.value(x);
  const Tensor& bv = t.value(row);
  require_rank2(xv, "broadcast_add");
  const std::size_t rows = xv.shape()[0];
  const std::size_t cols = xv.shape()[1];
  const bool row_shape = (bv.rank() == 1 && bv.shape()[0] == cols) ||
                         (bv.rank() == 2 && bv.shape()[0] == 1 && bv.shape()[1] == cols);
  if (!row_shape) {
    throw ShapeError("broadcast_add: shape mismatch " + shape_string(xv.shape()) + " + " +
                     shape_string(bv.shape()));
  }
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = xv[i * cols + j] + bv[j];
  return t.record(std::move(out), {x.id, row.id},
                  [rows, cols](Tape& tp, std::size_t self) {
                    const auto& in = tp.inputs(self);
                    const Tensor& g = tp.out_grad(self);
                    accumulate(tp, in[0], g);
                    if (tp.requires_grad(in[1])) {
                      double* db = tp.grad_slot(in[1]).data();
                      for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < cols; ++j) db[j] += g[i * cols + j];
                    }
                  },
                  "broadcast_add");
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

GradCheckResult finite_diff_check(const std::function<Var(Tape&)>& loss_fn,
                                  const std::vector<Parameter*>& params, double h) {
  for (Parameter* p : params) {
    p->grad = Tensor(p->value.shape());
  }
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto evaluate = [&]() {
    Tape tape;
    return loss_fn(tape).value().item();
  };

  GradCheckResult result;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double original = p->value[i];
      p->value[i] = original + h;
      const double up = evaluate();
      p->value[i] = original - h;
      const double down = evaluate();
      p->value[i] = original;
      const double fd = (up - down) / (2.0 * h);
      const double ad = p->grad[i];
      const double rel = std::abs(ad - fd) / std::max(1e-6, std::abs(ad) + std::abs(fd));
      ++result.coordinates;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = p->name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace dietweight
