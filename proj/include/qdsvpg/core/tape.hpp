// Copyright 2026 The qdsvpg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef QDSVPG_CORE_TAPE_HPP
#define QDSVPG_CORE_TAPE_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "qdsvpg/core/dense_array.hpp"
#include "qdsvpg/core/errors.hpp"

namespace qdsvpg {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
};

// Reverse-mode recording of one computation. Nodes are appended in
// evaluation order, so the node list is already topologically sorted.
// A Tape is meant to be built, differentiated and dropped per minibatch.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Var constant(DenseArray value) { return push(std::move(value), {}, nullptr, false); }

  Var parameter(DenseArray value) {
    Var v = push(std::move(value), {}, nullptr, true);
    parameters_.push_back(v.id);
    return v;
  }

  Var push(DenseArray value, std::vector<std::size_t> inputs, BackwardFn backward) {
    bool needs = false;
    for (std::size_t in : inputs) needs = needs || nodes_[in].needs_grad;
    return push(std::move(value), std::move(inputs), needs ? std::move(backward) : nullptr, needs);
  }

  const DenseArray& value(Var v) const { return nodes_.at(v.id).value; }
  const DenseArray& value(std::size_t id) const { return nodes_.at(id).value; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<std::size_t>& parameters() const noexcept { return parameters_; }

  /// Gradient buffer of a node during backward(); valid only when needs_grad(id).
  DenseArray& grad(std::size_t id) { return nodes_[id].grad; }

  /// Reverse sweep from a scalar loss; afterwards grad_of() reads results.
  void run_backward(Var loss) {
    if (loss.tape != this) throw ContractError("Tape::backward: loss recorded on another tape");
    const DenseArray& lv = nodes_.at(loss.id).value;
    if (lv.size() != 1)
      throw ContractError("Tape::backward: loss must be scalar, got shape " +
                          DenseArray::shape_string(lv.shape()));
    for (std::size_t k = 0; k <= loss.id; ++k) {
      Node& n = nodes_[k];
      if (n.needs_grad) n.grad = DenseArray(n.value.shape(), 0.0);
    }
    last_loss_ = loss.id;
    has_backward_ = true;
    if (!nodes_[loss.id].needs_grad) return;
    nodes_[loss.id].grad[0] = 1.0;
    for (std::size_t k = loss.id + 1; k-- > 0;) {
      Node& n = nodes_[k];
      if (n.backward) n.backward(*this, k);
    }
  }

  /// Gradient of the last run_backward() loss with respect to a node.
  DenseArray grad_of(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (!has_backward_ || v.id > last_loss_ || !n.needs_grad) return DenseArray(n.value.shape(), 0.0);
    return n.grad;
  }

  /// Gradients of a scalar loss for every parameter(), in registration order.
  std::vector<DenseArray> backward(Var loss) {
    run_backward(loss);
    std::vector<DenseArray> out;
    out.reserve(parameters_.size());
    for (std::size_t p : parameters_) out.push_back(grad_of(Var{this, p}));
    return out;
  }

  /// Flat concatenation of backward() output.
  std::vector<double> flat_gradient(Var loss) {
    std::vector<double> flat;
    for (const DenseArray& g : backward(loss)) flat.insert(flat.end(), g.values().begin(), g.values().end());
    return flat;
  }

 private:
  struct Node {
    DenseArray value;
    DenseArray grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;
  };

  Var push(DenseArray value, std::vector<std::size_t> inputs, BackwardFn backward, bool needs) {
    nodes_.push_back(Node{std::move(value), {}, std::move(inputs), std::move(backward), needs});
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  std::vector<std::size_t> parameters_;
  std::size_t last_loss_ = 0;
  bool has_backward_ = false;
};

namespace ad {

namespace detail {

inline Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw ContractError("ad: operands live on different tapes");
  return *a.tape;
}

inline void require_same_shape(const DenseArray& a, const DenseArray& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape " + DenseArray::shape_string(a.shape()) + " vs " +
                     DenseArray::shape_string(b.shape()));
}

// Elementwise unary op with derivative expressed through input x and output y.
template <typename F, typename D>
Var unary(Var a, F f, D dfdx) {
  Tape& t = *a.tape;
  const DenseArray& x = t.value(a);
  DenseArray y(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = f(x[k]);
  const std::size_t ia = a.id;
  return t.push(std::move(y), {ia}, [ia, dfdx](Tape& tp, std::size_t self) {
    if (!tp.needs_grad(ia)) return;
    const DenseArray& xv = tp.value(ia);
    const DenseArray& yv = tp.value(self);
    const DenseArray& g = tp.grad(self);
    DenseArray& ga = tp.grad(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * dfdx(xv[k], yv[k]);
  });
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const DenseArray& av = t.value(a);
  const DenseArray& bv = t.value(b);
  if (av.cols() != bv.rows())
    throw ShapeError("matmul: " + DenseArray::shape_string(av.shape()) + " x " +
                     DenseArray::shape_string(bv.shape()));
  DenseArray y = DenseArray::matrix(av.rows(), bv.cols());
  y.as_matrix().noalias() = av.as_matrix() * bv.as_matrix();
  const std::size_t ia = a.id, ib = b.id;
  return t.push(std::move(y), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).as_matrix();
    if (tp.needs_grad(ia)) tp.grad(ia).as_matrix().noalias() += g * tp.value(ib).as_matrix().transpose();
    if (tp.needs_grad(ib)) tp.grad(ib).as_matrix().noalias() += tp.value(ia).as_matrix().transpose() * g;
  });
}

/// a[n,m] + b[1,m] broadcast over rows.
inline Var add_row(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const DenseArray& av = t.value(a);
  const DenseArray& bv = t.value(b);
  if (bv.rows() != 1 || bv.cols() != av.cols())
    throw ShapeError("add_row: " + DenseArray::shape_string(av.shape()) + " + " +
                     DenseArray::shape_string(bv.shape()));
  DenseArray y = av;
  y.as_matrix().rowwise() += bv.as_matrix().row(0);
  const std::size_t ia = a.id, ib = b.id;
  return t.push(std::move(y), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).as_matrix();
    if (tp.needs_grad(ia)) tp.grad(ia).as_matrix() += g;
    if (tp.needs_grad(ib)) tp.grad(ib).as_matrix().row(0) += g.colwise().sum();
  });
}

/// b[1,m] repeated to [n,m].
inline Var broadcast_rows(Var b, std::size_t n) {
  Tape& t = *b.tape;
  const DenseArray& bv = t.value(b);
  if (bv.rows() != 1) throw ShapeError("broadcast_rows: expected a single row");
  DenseArray y = DenseArray::matrix(n, bv.cols());
  y.as_matrix().rowwise() = bv.as_matrix().row(0);
  const std::size_t ib = b.id;
  return t.push(std::move(y), {ib}, [ib](Tape& tp, std::size_t self) {
    if (tp.needs_grad(ib)) tp.grad(ib).as_matrix().row(0) += tp.grad(self).as_matrix().colwise().sum();
  });
}

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape(t.value(a), t.value(b), "add");
  DenseArray y = t.value(a);
  const DenseArray& bv = t.value(b);
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += bv[k];
  const std::size_t ia = a.id, ib = b.id;
  return t.push(std::move(y), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const DenseArray& g = tp.grad(self);
    for (std::size_t in : {ia, ib}) {
      if (!tp.needs_grad(in)) continue;
      DenseArray& gi = tp.grad(in);
      for (std::size_t k = 0; k < g.size(); ++k) gi[k] += g[k];
    }
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape(t.value(a), t.value(b), "sub");
  DenseArray y = t.value(a);
  const DenseArray& bv = t.value(b);
  for (std::size_t k = 0; k < y.size(); ++k) y[k] -= bv[k];
  const std::size_t ia = a.id, ib = b.id;
  return t.push(std::move(y), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const DenseArray& g = tp.grad(self);
    if (tp.needs_grad(ia)) {
      DenseArray& ga = tp.grad(ia);
      for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
    }
    if (tp.needs_grad(ib)) {
      DenseArray& gb = tp.grad(ib);
      for (std::size_t k = 0; k < g.size(); ++k) gb[k] -= g[k];
    }
  });
}

inline Var mul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape(t.value(a), t.value(b), "mul");
  DenseArray y = t.value(a);
  const DenseArray& bv = t.value(b);
  for (std::size_t k = 0; k < y.size(); ++k) y[k] *= bv[k];
  const std::size_t ia = a.id, ib = b.id;
  return t.push(std::move(y), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const DenseArray& g = tp.grad(self);
    if (tp.needs_grad(ia)) {
      DenseArray& ga = tp.grad(ia);
      const DenseArray& bv2 = tp.value(ib);
      for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * bv2[k];
    }
    if (tp.needs_grad(ib)) {
      DenseArray& gb = tp.grad(ib);
      const DenseArray& av2 = tp.value(ia);
      for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k] * av2[k];
    }
  });
}

inline Var scale(Var a, double c) {
  return detail::unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

inline Var shift(Var a, double c) {
  return detail::unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline Var neg(Var a) { return scale(a, -1.0); }

inline Var tanh(Var a) {
  return detail::unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var exp(Var a) {
  return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(Var a) {
  return detail::unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

/// log(1 + exp(x)), stable for large |x|.
inline Var softplus(Var a) {
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

inline Var square(Var a) {
  return detail::unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

/// Clamp with zero gradient outside [lo, hi].
inline Var clamp(Var a, double lo, double hi) {
  return detail::unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

/// Elementwise minimum; ties route the gradient to `a`.
inline Var minimum(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape(t.value(a), t.value(b), "minimum");
  const DenseArray& av = t.value(a);
  const DenseArray& bv = t.value(b);
  DenseArray y(av.shape());
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = std::min(av[k], bv[k]);
  const std::size_t ia = a.id, ib = b.id;
  return t.push(std::move(y), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const DenseArray& g = tp.grad(self);
    const DenseArray& x = tp.value(ia);
    const DenseArray& z = tp.value(ib);
    for (std::size_t k = 0; k < g.size(); ++k) {
      const bool pick_a = x[k] <= z[k];
      if (pick_a && tp.needs_grad(ia)) tp.grad(ia)[k] += g[k];
      if (!pick_a && tp.needs_grad(ib)) tp.grad(ib)[k] += g[k];
    }
  });
}

inline Var log_softmax_rows(Var a) {
  Tape& t = *a.tape;
  const DenseArray& x = t.value(a);
  const std::size_t n = x.rows(), m = x.cols();
  DenseArray y = DenseArray::matrix(n, m);
  for (std::size_t r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < m; ++c) mx = std::max(mx, x(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += std::exp(x(r, c) - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < m; ++c) y(r, c) = x(r, c) - lse;
  }
  const std::size_t ia = a.id;
  return t.push(std::move(y), {ia}, [ia](Tape& tp, std::size_t self) {
    if (!tp.needs_grad(ia)) return;
    const DenseArray& yv = tp.value(self);
    const DenseArray& g = tp.grad(self);
    DenseArray& ga = tp.grad(ia);
    const std::size_t rows = yv.rows(), cols = yv.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t c = 0; c < cols; ++c) gs += g(r, c);
      for (std::size_t c = 0; c < cols; ++c) ga(r, c) += g(r, c) - std::exp(yv(r, c)) * gs;
    }
  });
}

inline Var softmax_rows(Var a) { return exp(log_softmax_rows(a)); }

/// out[r] = a[r, idx[r]], shape [n,1].
inline Var pick(Var a, std::vector<std::size_t> idx) {
  Tape& t = *a.tape;
  const DenseArray& x = t.value(a);
  if (idx.size() != x.rows()) throw ShapeError("pick: index count does not match rows");
  DenseArray y = DenseArray::matrix(x.rows(), 1);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= x.cols()) throw ShapeError("pick: column index out of range");
    y[r] = x(r, idx[r]);
  }
  const std::size_t ia = a.id;
  return t.push(std::move(y), {ia}, [ia, idx = std::move(idx)](Tape& tp, std::size_t self) {
    if (!tp.needs_grad(ia)) return;
    const DenseArray& g = tp.grad(self);
    DenseArray& ga = tp.grad(ia);
    for (std::size_t r = 0; r < idx.size(); ++r) ga(r, idx[r]) += g[r];
  });
}

/// Sum over columns, shape [n,1].
inline Var row_sum(Var a) {
  Tape& t = *a.tape;
  const DenseArray& x = t.value(a);
  DenseArray y = DenseArray::matrix(x.rows(), 1);
  y.as_matrix() = x.as_matrix().rowwise().sum();
  const std::size_t ia = a.id;
  return t.push(std::move(y), {ia}, [ia](Tape& tp, std::size_t self) {
    if (!tp.needs_grad(ia)) return;
    DenseArray& ga = tp.grad(ia);
    const DenseArray& g = tp.grad(self);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g[r];
  });
}

inline Var sum(Var a) {
  Tape& t = *a.tape;
  const DenseArray& x = t.value(a);
  double s = 0.0;
  for (double v : x.values()) s += v;
  const std::size_t ia = a.id;
  return t.push(DenseArray::scalar(s), {ia}, [ia](Tape& tp, std::size_t self) {
    if (!tp.needs_grad(ia)) return;
    const double g = tp.grad(self)[0];
    for (double& v : tp.grad(ia).values()) v += g;
  });
}

inline Var mean(Var a) {
  const double n = static_cast<double>(a.tape->value(a).size());
  return scale(sum(a), 1.0 / n);
}

/// sum_k w_k a_k / sum_k w_k over all elements.
inline Var weighted_mean(Var a, std::span<const double> weights) {
  Tape& t = *a.tape;
  const DenseArray& x = t.value(a);
  if (weights.size() != x.size()) throw ShapeError("weighted_mean: weight count mismatch");
  double wsum = 0.0, s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    wsum += weights[k];
    s += weights[k] * x[k];
  }
  if (!(wsum > 0.0)) throw ContractError("weighted_mean: weights sum to zero");
  std::vector<double> w(weights.begin(), weights.end());
  for (double& v : w) v /= wsum;
  const std::size_t ia = a.id;
  return t.push(DenseArray::scalar(s / wsum), {ia}, [ia, w = std::move(w)](Tape& tp, std::size_t self) {
    if (!tp.needs_grad(ia)) return;
    const double g = tp.grad(self)[0];
    DenseArray& ga = tp.grad(ia);
    for (std::size_t k = 0; k < w.size(); ++k) ga[k] += g * w[k];
  });
}

/// log(sum_k w_k exp(a_k) / sum_k w_k), evaluated with max subtraction.
inline Var weighted_log_mean_exp(Var a, std::span<const double> weights) {
  Tape& t = *a.tape;
  const DenseArray& x = t.value(a);
  if (weights.size() != x.size()) throw ShapeError("weighted_log_mean_exp: weight count mismatch");
  double wsum = 0.0;
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < x.size(); ++k) {
    wsum += weights[k];
    if (weights[k] > 0.0) mx = std::max(mx, x[k]);
  }
  if (!(wsum > 0.0)) throw ContractError("weighted_log_mean_exp: weights sum to zero");
  std::vector<double> soft(x.size());
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    soft[k] = weights[k] * std::exp(x[k] - mx);
    s += soft[k];
  }
  for (double& v : soft) v /= s;
  const double value = mx + std::log(s / wsum);
  const std::size_t ia = a.id;
  return t.push(DenseArray::scalar(value), {ia}, [ia, soft = std::move(soft)](Tape& tp, std::size_t self) {
    if (!tp.needs_grad(ia)) return;
    const double g = tp.grad(self)[0];
    DenseArray& ga = tp.grad(ia);
    for (std::size_t k = 0; k < soft.size(); ++k) ga[k] += g * soft[k];
  });
}

/// Replace a constant-valued mask: out = a * m with m fixed.
inline Var mask(Var a, std::span<const double> m) {
  Tape& t = *a.tape;
  DenseArray c(t.value(a).shape(), std::vector<double>(m.begin(), m.end()));
  return mul(a, t.constant(std::move(c)));
}

}  // namespace ad
}  // namespace qdsvpg

#endif  // QDSVPG_CORE_TAPE_HPP
