// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Tape-based reverse-mode differentiation over dense matrices.
//
// Operations append nodes to a Tape in evaluation order, so node ids are a
// topological order and backward() is a single reverse sweep. Leaves bound to
// a Parameter hand their gradients back via accumulate_parameter_gradients().

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kinfuse/errors.hpp"
#include "kinfuse/tensor.hpp"

namespace kinfuse {

// A trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

enum class OpKind {
  constant,
  variable,
  parameter,
  matmul,
  add,
  sub,
  mul,
  scale,
  concat_cols,
  concat_rows,
  relu,
  leaky_relu,
  sigmoid,
  tanh,
  softmax,
  mean_rows,
  sum,
  sq_l2_norm,
  gather_rows,
  scatter_add_rows,
  segment_softmax,
  scale_rows,
  spmm,
  reshape,
  bce_with_logits,
  softmax_cross_entropy,
};

inline std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::constant: return "constant";
    case OpKind::variable: return "variable";
    case OpKind::parameter: return "parameter";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::concat_rows: return "concat_rows";
    case OpKind::relu: return "relu";
    case OpKind::leaky_relu: return "leaky_relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::tanh: return "tanh";
    case OpKind::softmax: return "softmax";
    case OpKind::mean_rows: return "mean_rows";
    case OpKind::sum: return "sum";
    case OpKind::sq_l2_norm: return "sq_l2_norm";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::scatter_add_rows: return "scatter_add_rows";
    case OpKind::segment_softmax: return "segment_softmax";
    case OpKind::scale_rows: return "scale_rows";
    case OpKind::spmm: return "spmm";
    case OpKind::reshape: return "reshape";
    case OpKind::bce_with_logits: return "bce_with_logits";
    case OpKind::softmax_cross_entropy: return "softmax_cross_entropy";
  }
  return "unknown";
}

// Constant sparse matrix in coordinate form (used for graph aggregation).
struct SparseMatrix {
  struct Entry {
    std::size_t row;
    std::size_t col;
    double value;
  };
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Entry> entries;
};

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  inline const Tensor& value() const;
  inline const Tensor& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) { return leaf(OpKind::constant, std::move(value), false, nullptr); }
  Var variable(Tensor value) { return leaf(OpKind::variable, std::move(value), true, nullptr); }
  Var parameter(Parameter& p) { return leaf(OpKind::parameter, p.value, true, &p); }

  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor& grad(std::size_t id) const { return nodes_.at(id).grad; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  // Adds `delta` into the gradient slot of `id` if that node needs one.
  void accumulate(std::size_t id, const Tensor& delta) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    n.grad += delta;
  }

  Tensor& grad_slot(std::size_t id) { return nodes_[id].grad; }

  // Appends an op node. The forward value must be finite.
  Var record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward) {
    if (!value.all_finite()) {
      throw NumericError(std::string(op_name(kind)) + " produced a non-finite value");
    }
    bool needs = false;
    for (std::size_t in : inputs) needs = needs || nodes_.at(in).requires_grad;
    Node n;
    n.kind = kind;
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    n.requires_grad = needs;
    if (needs) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  // Reverse sweep from a scalar loss. Gradient slots are reset first, so
  // calling backward twice yields identical gradients.
  void backward(Var loss) {
    if (loss.tape() != this) throw ContractError("backward on a node from another tape");
    const Tensor& lv = value(loss.id());
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ContractError("backward requires a scalar loss, got " + lv.shape_string());
    }
    for (Node& n : nodes_) {
      n.grad = n.requires_grad ? Tensor(n.value.rows(), n.value.cols()) : Tensor();
    }
    if (!nodes_[loss.id()].requires_grad) return;
    nodes_[loss.id()].grad[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward) n.backward(*this, i);
    }
    for (const Node& n : nodes_) {
      if (n.requires_grad && !n.grad.all_finite()) {
        throw NumericError(std::string("non-finite gradient at ") + std::string(op_name(n.kind)));
      }
    }
  }

  // Adds leaf gradients into their bound Parameter::grad slots.
  void accumulate_parameter_gradients() const {
    for (const Node& n : nodes_) {
      if (n.param == nullptr || n.grad.empty()) continue;
      if (n.param->grad.empty()) n.param->grad = Tensor(n.value.rows(), n.value.cols());
      n.param->grad += n.grad;
    }
  }

  void check_same(const Var& v) const {
    if (v.tape() != this) throw ContractError("operand belongs to a different tape");
  }

 private:
  struct Node {
    OpKind kind = OpKind::constant;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var leaf(OpKind kind, Tensor value, bool requires_grad, Parameter* param) {
    if (!value.all_finite()) {
      throw NumericError(std::string(op_name(kind)) + " leaf holds a non-finite value");
    }
    Node n;
    n.kind = kind;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.param = param;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline const Tensor& Var::grad() const { return tape_->grad(id_); }

namespace ad {

inline constexpr double kLeakySlope = 0.01;

namespace detail {

inline Tape& tape_of(const Var& a) {
  if (!a.valid()) throw ContractError("operation on an empty Var");
  return *a.tape();
}

inline Tape& tape_of(const Var& a, const Var& b) {
  Tape& t = tape_of(a);
  t.check_same(b);
  return t;
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": " + a.shape_string() + " vs " + b.shape_string());
  }
}

// C = A * B
inline void gemm(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) c(i, j) += av * b(p, j);
    }
  }
}

// C += A * B^T
inline void gemm_bt(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t n = a.rows(), m = b.rows(), k = a.cols();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a(i, p) * b(j, p);
      c(i, j) += s;
    }
  }
}

// C += A^T * B
inline void gemm_at(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < n; ++i) {
      const double av = a(p, i);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) c(i, j) += av * b(p, j);
    }
  }
}

// Elementwise op with derivative expressed through input x and output y.
template <typename Fn, typename Deriv>
Var unary(OpKind kind, const Var& x, Fn&& fn, Deriv deriv) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  Tensor out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fn(xv[i]);
  const std::size_t ix = x.id();
  return t.record(kind, {ix}, std::move(out), [ix, deriv](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& xv = tp.value(ix);
    const Tensor& yv = tp.value(self);
    Tensor& gx = tp.grad_slot(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

inline double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: " + av.shape_string() + " x " + bv.shape_string());
  }
  Tensor out(av.rows(), bv.cols());
  detail::gemm(av, bv, out);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(OpKind::matmul, {ia, ib}, std::move(out), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ia)) detail::gemm_bt(g, tp.value(ib), tp.grad_slot(ia));
    if (tp.requires_grad(ib)) detail::gemm_at(tp.value(ia), g, tp.grad_slot(ib));
  });
}

// Elementwise sum. `b` may also be a 1 x d row added to every row of `a`.
inline Var add(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool row_broadcast = !av.same_shape(bv) && bv.rows() == 1 && bv.cols() == av.cols();
  if (!av.same_shape(bv) && !row_broadcast) {
    throw DimensionError("add: " + av.shape_string() + " vs " + bv.shape_string());
  }
  Tensor out = av;
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) += row_broadcast ? bv(0, c) : bv(r, c);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(OpKind::add, {ia, ib}, std::move(out),
                  [ia, ib, row_broadcast](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    tp.accumulate(ia, g);
                    if (!tp.requires_grad(ib)) return;
                    if (!row_broadcast) {
                      tp.accumulate(ib, g);
                      return;
                    }
                    Tensor& gb = tp.grad_slot(ib);
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                      for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
                    }
                  });
}

inline Var sub(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a, b);
  detail::require_same_shape("sub", a.value(), b.value());
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(OpKind::sub, {ia, ib}, std::move(out), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    tp.accumulate(ia, g);
    if (!tp.requires_grad(ib)) return;
    Tensor& gb = tp.grad_slot(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

inline Var mul(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a, b);
  detail::require_same_shape("mul", a.value(), b.value());
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(OpKind::mul, {ia, ib}, std::move(out), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ia)) {
      Tensor& ga = tp.grad_slot(ia);
      const Tensor& bv = tp.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad_slot(ib);
      const Tensor& av = tp.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

inline Var scale(const Var& x, double factor) {
  Tape& t = detail::tape_of(x);
  Tensor out = x.value();
  for (double& v : out.data()) v *= factor;
  const std::size_t ix = x.id();
  return t.record(OpKind::scale, {ix}, std::move(out), [ix, factor](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad_slot(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

// Horizontal concatenation of operands with equal row counts.
inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols of nothing");
  Tape& t = detail::tape_of(parts.front());
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    t.check_same(p);
    if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.cols();
    ids.push_back(p.id());
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < pv.cols(); ++c) out(r, offset + c) = pv(r, c);
    }
    offset += pv.cols();
  }
  return t.record(OpKind::concat_cols, ids, std::move(out), [ids](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    std::size_t off = 0;
    for (std::size_t id : ids) {
      const std::size_t w = tp.value(id).cols();
      if (tp.requires_grad(id)) {
        Tensor& gp = tp.grad_slot(id);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t c = 0; c < w; ++c) gp(r, c) += g(r, off + c);
        }
      }
      off += w;
    }
  });
}

inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

// Vertical concatenation of operands with equal column counts.
inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows of nothing");
  Tape& t = detail::tape_of(parts.front());
  const std::size_t cols = parts.front().cols();
  std::vector<double> data;
  std::vector<std::size_t> ids;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    t.check_same(p);
    if (p.cols() != cols) throw DimensionError("concat_rows: column counts differ");
    const auto d = p.value().data();
    data.insert(data.end(), d.begin(), d.end());
    rows += p.rows();
    ids.push_back(p.id());
  }
  return t.record(OpKind::concat_rows, ids, Tensor(rows, cols, std::move(data)),
                  [ids](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    std::size_t off = 0;
                    for (std::size_t id : ids) {
                      const std::size_t n = tp.value(id).size();
                      if (tp.requires_grad(id)) {
                        Tensor& gp = tp.grad_slot(id);
                        for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
                      }
                      off += n;
                    }
                  });
}

inline Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}

inline Var relu(const Var& x) {
  return detail::unary(
      OpKind::relu, x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Var leaky_relu(const Var& x, double slope = kLeakySlope) {
  return detail::unary(
      OpKind::leaky_relu, x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

inline Var sigmoid(const Var& x) {
  return detail::unary(OpKind::sigmoid, x, detail::stable_sigmoid,
                       [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(const Var& x) {
  return detail::unary(
      OpKind::tanh, x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

// Row-wise softmax.
inline Var softmax(const Var& x) {
  Tape& t = detail::tape_of(x);
  const Tensor& xv = x.value();
  Tensor out(xv.rows(), xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double peak = -INFINITY;
    for (std::size_t c = 0; c < xv.cols(); ++c) peak = std::max(peak, xv(r, c));
    double total = 0.0;
    for (std::size_t c = 0; c < xv.cols(); ++c) {
      out(r, c) = std::exp(xv(r, c) - peak);
      total += out(r, c);
    }
    for (std::size_t c = 0; c < xv.cols(); ++c) out(r, c) /= total;
  }
  const std::size_t ix = x.id();
  return t.record(OpKind::softmax, {ix}, std::move(out), [ix](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Tensor& gx = tp.grad_slot(ix);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) gx(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

// n x d -> 1 x d column means.
inline Var mean_rows(const Var& x) {
  Tape& t = detail::tape_of(x);
  const Tensor& xv = x.value();
  if (xv.rows() == 0) throw DimensionError("mean_rows of a tensor with no rows");
  Tensor out(1, xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    for (std::size_t c = 0; c < xv.cols(); ++c) out(0, c) += xv(r, c);
  }
  const double inv = 1.0 / static_cast<double>(xv.rows());
  for (double& v : out.data()) v *= inv;
  const std::size_t ix = x.id();
  return t.record(OpKind::mean_rows, {ix}, std::move(out), [ix, inv](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad_slot(ix);
    for (std::size_t r = 0; r < gx.rows(); ++r) {
      for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += g(0, c) * inv;
    }
  });
}

inline Var sum(const Var& x) {
  Tape& t = detail::tape_of(x);
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  const std::size_t ix = x.id();
  return t.record(OpKind::sum, {ix}, Tensor::scalar(total), [ix](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    Tensor& gx = tp.grad_slot(ix);
    for (double& v : gx.data()) v += g;
  });
}

// Sum of squared entries, as a 1 x 1 tensor.
inline Var sq_l2_norm(const Var& x) {
  Tape& t = detail::tape_of(x);
  double total = 0.0;
  for (double v : x.value().data()) total += v * v;
  const std::size_t ix = x.id();
  return t.record(OpKind::sq_l2_norm, {ix}, Tensor::scalar(total), [ix](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    const Tensor& xv = tp.value(ix);
    Tensor& gx = tp.grad_slot(ix);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += 2.0 * xv[i] * g;
  });
}

// out[e] = x[index[e]]
inline Var gather_rows(const Var& x, std::vector<std::size_t> index) {
  Tape& t = detail::tape_of(x);
  const Tensor& xv = x.value();
  Tensor out(index.size(), xv.cols());
  for (std::size_t e = 0; e < index.size(); ++e) {
    if (index[e] >= xv.rows()) throw DimensionError("gather_rows: index out of range");
    for (std::size_t c = 0; c < xv.cols(); ++c) out(e, c) = xv(index[e], c);
  }
  const std::size_t ix = x.id();
  return t.record(OpKind::gather_rows, {ix}, std::move(out),
                  [ix, index = std::move(index)](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    Tensor& gx = tp.grad_slot(ix);
                    for (std::size_t e = 0; e < index.size(); ++e) {
                      for (std::size_t c = 0; c < g.cols(); ++c) gx(index[e], c) += g(e, c);
                    }
                  });
}

// out[index[e]] += x[e]; out has `rows` rows. Untouched rows stay zero.
inline Var scatter_add_rows(const Var& x, std::vector<std::size_t> index, std::size_t rows) {
  Tape& t = detail::tape_of(x);
  const Tensor& xv = x.value();
  if (index.size() != xv.rows()) throw DimensionError("scatter_add_rows: index length mismatch");
  Tensor out(rows, xv.cols());
  for (std::size_t e = 0; e < index.size(); ++e) {
    if (index[e] >= rows) throw DimensionError("scatter_add_rows: index out of range");
    for (std::size_t c = 0; c < xv.cols(); ++c) out(index[e], c) += xv(e, c);
  }
  const std::size_t ix = x.id();
  return t.record(OpKind::scatter_add_rows, {ix}, std::move(out),
                  [ix, index = std::move(index)](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    Tensor& gx = tp.grad_slot(ix);
                    for (std::size_t e = 0; e < index.size(); ++e) {
                      for (std::size_t c = 0; c < g.cols(); ++c) gx(e, c) += g(index[e], c);
                    }
                  });
}

// Softmax of an E x 1 column within groups sharing the same segment id.
inline Var segment_softmax(const Var& x, std::vector<std::size_t> segment, std::size_t segments) {
  Tape& t = detail::tape_of(x);
  const Tensor& xv = x.value();
  if (xv.cols() != 1 || segment.size() != xv.rows()) {
    throw DimensionError("segment_softmax expects an E x 1 column with E segment ids");
  }
  std::vector<double> peak(segments, -INFINITY);
  for (std::size_t e = 0; e < segment.size(); ++e) {
    if (segment[e] >= segments) throw DimensionError("segment_softmax: segment id out of range");
    peak[segment[e]] = std::max(peak[segment[e]], xv[e]);
  }
  std::vector<double> total(segments, 0.0);
  Tensor out(xv.rows(), 1);
  for (std::size_t e = 0; e < segment.size(); ++e) {
    out[e] = std::exp(xv[e] - peak[segment[e]]);
    total[segment[e]] += out[e];
  }
  for (std::size_t e = 0; e < segment.size(); ++e) out[e] /= total[segment[e]];
  const std::size_t ix = x.id();
  return t.record(OpKind::segment_softmax, {ix}, std::move(out),
                  [ix, segment = std::move(segment), segments](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    const Tensor& y = tp.value(self);
                    std::vector<double> dot(segments, 0.0);
                    for (std::size_t e = 0; e < segment.size(); ++e) dot[segment[e]] += g[e] * y[e];
                    Tensor& gx = tp.grad_slot(ix);
                    for (std::size_t e = 0; e < segment.size(); ++e) {
                      gx[e] += y[e] * (g[e] - dot[segment[e]]);
                    }
                  });
}

// Multiplies row e of x (E x d) by weight[e] (E x 1).
inline Var scale_rows(const Var& x, const Var& weight) {
  Tape& t = detail::tape_of(x, weight);
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (wv.cols() != 1 || wv.rows() != xv.rows()) {
    throw DimensionError("scale_rows: weight " + wv.shape_string() + " for " + xv.shape_string());
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    for (std::size_t c = 0; c < xv.cols(); ++c) out(r, c) *= wv[r];
  }
  const std::size_t ix = x.id(), iw = weight.id();
  return t.record(OpKind::scale_rows, {ix, iw}, std::move(out), [ix, iw](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& xv = tp.value(ix);
    const Tensor& wv = tp.value(iw);
    if (tp.requires_grad(ix)) {
      Tensor& gx = tp.grad_slot(ix);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) gx(r, c) += g(r, c) * wv[r];
      }
    }
    if (tp.requires_grad(iw)) {
      Tensor& gw = tp.grad_slot(iw);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < g.cols(); ++c) s += g(r, c) * xv(r, c);
        gw[r] += s;
      }
    }
  });
}

// Constant sparse matrix times dense operand.
inline Var spmm(const SparseMatrix& s, const Var& x) {
  Tape& t = detail::tape_of(x);
  const Tensor& xv = x.value();
  if (s.cols != xv.rows()) {
    throw DimensionError("spmm: sparse " + std::to_string(s.rows) + "x" + std::to_string(s.cols) +
                         " times " + xv.shape_string());
  }
  Tensor out(s.rows, xv.cols());
  for (const auto& e : s.entries) {
    for (std::size_t c = 0; c < xv.cols(); ++c) out(e.row, c) += e.value * xv(e.col, c);
  }
  const std::size_t ix = x.id();
  return t.record(OpKind::spmm, {ix}, std::move(out), [ix, s](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad_slot(ix);
    for (const auto& e : s.entries) {
      for (std::size_t c = 0; c < g.cols(); ++c) gx(e.col, c) += e.value * g(e.row, c);
    }
  });
}

inline Var reshape(const Var& x, std::size_t rows, std::size_t cols) {
  Tape& t = detail::tape_of(x);
  const Tensor& xv = x.value();
  if (rows * cols != xv.size()) {
    throw DimensionError("reshape " + xv.shape_string() + " to " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
  const auto d = xv.data();
  const std::size_t ix = x.id();
  return t.record(OpKind::reshape, {ix}, Tensor(rows, cols, std::vector<double>(d.begin(), d.end())),
                  [ix](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    Tensor& gx = tp.grad_slot(ix);
                    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                  });
}

// -[y log p + (1-y) log(1-p)], p = sigmoid(logit), evaluated in log space.
inline Var bce_with_logits(const Var& logit, double target) {
  Tape& t = detail::tape_of(logit);
  const double z = logit.value().item();
  const double loss = std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
  const std::size_t iz = logit.id();
  return t.record(OpKind::bce_with_logits, {iz}, Tensor::scalar(loss),
                  [iz, target](Tape& tp, std::size_t self) {
                    const double z = tp.value(iz)[0];
                    tp.grad_slot(iz)[0] += tp.grad(self)[0] * (detail::stable_sigmoid(z) - target);
                  });
}

// -log softmax(logits)[target] for a 1 x K row.
inline Var softmax_cross_entropy(const Var& logits, std::size_t target) {
  Tape& t = detail::tape_of(logits);
  const Tensor& z = logits.value();
  if (z.rows() != 1 || target >= z.cols()) {
    throw DimensionError("softmax_cross_entropy: target " + std::to_string(target) + " for " +
                         z.shape_string());
  }
  double peak = -INFINITY;
  for (double v : z.data()) peak = std::max(peak, v);
  double total = 0.0;
  for (double v : z.data()) total += std::exp(v - peak);
  const double lse = peak + std::log(total);
  const std::size_t iz = logits.id();
  return t.record(OpKind::softmax_cross_entropy, {iz}, Tensor::scalar(lse - z[target]),
                  [iz, target, lse](Tape& tp, std::size_t self) {
                    const double g = tp.grad(self)[0];
                    const Tensor& z = tp.value(iz);
                    Tensor& gz = tp.grad_slot(iz);
                    for (std::size_t c = 0; c < z.cols(); ++c) {
                      gz[c] += g * (std::exp(z[c] - lse) - (c == target ? 1.0 : 0.0));
                    }
                  });
}

}  // namespace ad
}  // namespace kinfuse
