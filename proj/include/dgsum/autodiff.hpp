#pragma once

// Minimal rank-2 reverse-mode automatic differentiation.
//
// A Tape records every operation executed on Tensors created from it. Tensors are
// lightweight handles (tape pointer + node id); values live on the tape. Nodes are
// stored in execution order, so reverse iteration is a valid topological order.
// All storage and accumulation is double precision.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "dgsum/errors.hpp"

namespace dgsum::ad {

using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using SparseHandle = std::shared_ptr<const SparseMatrix>;

class Tape;

/// Handle to a value recorded on a Tape.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  Tape* tape_ptr() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }

  const Matrix& value() const;
  /// Gradient of the last backward() target w.r.t. this tensor; zeros if nothing flowed here.
  Matrix grad() const;
  bool requires_grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double item() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A leaf value; gradients are tracked when `requires_grad` is set.
  Tensor leaf(Matrix value, bool requires_grad = false) {
    check_finite(value, "leaf");
    nodes_.push_back({std::move(value), Matrix(), requires_grad, nullptr});
    return {this, nodes_.size() - 1};
  }

  Tensor constant(Matrix value) { return leaf(std::move(value), false); }

  /// Records an op result. The closure is dropped when no parent needs a gradient.
  Tensor record(Matrix value, bool needs_grad, BackwardFn fn, const char* op) {
    check_finite(value, op);
    nodes_.push_back({std::move(value), Matrix(), needs_grad, needs_grad ? std::move(fn) : nullptr});
    return {this, nodes_.size() - 1};
  }

  const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  bool has_grad(std::size_t id) const { return nodes_.at(id).grad.size() != 0; }

  Matrix grad(std::size_t id) const {
    const auto& n = nodes_.at(id);
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Adds `g` into the gradient buffer of node `id` (no-op for nodes without grad).
  template <typename Expr>
  void accumulate(std::size_t id, const Expr& g) {
    auto& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  /// Reverse sweep from a 1x1 loss. Runs once per tape until reset_grads().
  void backward(const Tensor& loss) {
    if (nodes_.empty()) throw ContractError("backward: empty tape");
    if (loss.tape_ptr() != this) throw ContractError("backward: loss belongs to another tape");
    const auto& lv = nodes_.at(loss.id()).value;
    if (lv.rows() != 1 || lv.cols() != 1) throw ContractError("backward: loss must be a 1x1 scalar");
    if (backward_done_) throw ContractError("backward: already called; reset_grads() first");
    backward_done_ = true;
    accumulate(loss.id(), Matrix::Constant(1, 1, 1.0));
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.backward || n.grad.size() == 0) continue;
      n.backward(*this, n.grad);
    }
  }

  void reset_grads() {
    for (auto& n : nodes_) n.grad.resize(0, 0);
    backward_done_ = false;
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad;
    BackwardFn backward;
  };

  static void check_finite(const Matrix& m, const char* op) {
    if (!m.allFinite()) throw DataError(std::string("non-finite value produced by ") + op);
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

inline const Matrix& Tensor::value() const { return tape_->value(id_); }
inline Matrix Tensor::grad() const { return tape_->grad(id_); }
inline bool Tensor::requires_grad() const { return tape_->requires_grad(id_); }
inline double Tensor::item() const {
  const auto& v = value();
  if (v.size() != 1) throw ContractError("item: tensor is not a scalar");
  return v(0, 0);
}

// ---------------------------------------------------------------------------
// Operations

namespace detail {

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline Tape& same_tape(const Tensor& a, const Tensor& b) {
  if (a.tape_ptr() != b.tape_ptr()) throw ContractError("tensors recorded on different tapes");
  return a.tape();
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  auto& tape = detail::same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.rows())
    throw ShapeError("matmul: " + detail::shape_str(av) + " * " + detail::shape_str(bv));
  Matrix out;
  out.noalias() = av * bv;
  const auto ia = a.id(), ib = b.id();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [ia, ib](Tape& t, const Matrix& g) {
                       if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
                       if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
                     },
                     "matmul");
}

/// Constant sparse matrix times a tensor; only `x` receives a gradient.
inline Tensor spmm(const SparseHandle& s, const Tensor& x) {
  const auto& xv = x.value();
  if (s->cols() != xv.rows())
    throw ShapeError("spmm: sparse " + std::to_string(s->rows()) + "x" + std::to_string(s->cols()) + " * " +
                     detail::shape_str(xv));
  Matrix out = (*s) * xv;
  const auto ix = x.id();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [s, ix](Tape& t, const Matrix& g) { t.accumulate(ix, s->transpose() * g); }, "spmm");
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  auto& tape = detail::same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols())
    throw ShapeError("add: " + detail::shape_str(av) + " + " + detail::shape_str(bv));
  const auto ia = a.id(), ib = b.id();
  return tape.record(av + bv, a.requires_grad() || b.requires_grad(),
                     [ia, ib](Tape& t, const Matrix& g) {
                       t.accumulate(ia, g);
                       t.accumulate(ib, g);
                     },
                     "add");
}

/// Sum of equally shaped tensors.
inline Tensor add_n(std::span<const Tensor> ts) {
  if (ts.empty()) throw ContractError("add_n: no operands");
  auto& tape = ts.front().tape();
  Matrix out = ts.front().value();
  bool need = ts.front().requires_grad();
  std::vector<std::size_t> ids{ts.front().id()};
  for (std::size_t k = 1; k < ts.size(); ++k) {
    detail::same_tape(ts.front(), ts[k]);
    const auto& tv = ts[k].value();
    if (tv.rows() != out.rows() || tv.cols() != out.cols())
      throw ShapeError("add_n: " + detail::shape_str(out) + " + " + detail::shape_str(tv));
    out += tv;
    need = need || ts[k].requires_grad();
    ids.push_back(ts[k].id());
  }
  return tape.record(std::move(out), need,
                     [ids = std::move(ids)](Tape& t, const Matrix& g) {
                       for (auto id : ids) t.accumulate(id, g);
                     },
                     "add_n");
}

/// Adds the 1 x n row `bias` to every row of the m x n tensor `a`.
inline Tensor add_row_bias(const Tensor& a, const Tensor& bias) {
  auto& tape = detail::same_tape(a, bias);
  const auto& av = a.value();
  const auto& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols())
    throw ShapeError("add_row_bias: " + detail::shape_str(av) + " + row " + detail::shape_str(bv));
  Matrix out = av.rowwise() + bv.row(0);
  const auto ia = a.id(), ib = bias.id();
  return tape.record(std::move(out), a.requires_grad() || bias.requires_grad(),
                     [ia, ib](Tape& t, const Matrix& g) {
                       t.accumulate(ia, g);
                       if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
                     },
                     "add_row_bias");
}

inline Tensor scale(const Tensor& a, double c) {
  const auto ia = a.id();
  return a.tape().record(a.value() * c, a.requires_grad(),
                         [ia, c](Tape& t, const Matrix& g) { t.accumulate(ia, g * c); }, "scale");
}

inline Tensor relu(const Tensor& x) {
  Matrix out = x.value().cwiseMax(0.0);
  const auto ix = x.id();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [ix](Tape& t, const Matrix& g) {
                           const auto& xv = t.value(ix);
                           t.accumulate(ix, (xv.array() > 0.0).select(g, 0.0));
                         },
                         "relu");
}

inline constexpr double kSigmoidClamp = 30.0;

/// Logistic function; inputs are clamped to [-30, 30] first (zero gradient outside).
inline Tensor sigmoid(const Tensor& x) {
  Matrix out = x.value().unaryExpr([](double v) {
    const double c = std::clamp(v, -kSigmoidClamp, kSigmoidClamp);
    return 1.0 / (1.0 + std::exp(-c));
  });
  const auto ix = x.id();
  const auto iy = x.tape().size();  // id the result will receive
  return x.tape().record(std::move(out), x.requires_grad(),
                         [ix, iy](Tape& t, const Matrix& g) {
                           const auto& xv = t.value(ix);
                           const auto& s = t.value(iy);
                           Matrix d = (s.array() * (1.0 - s.array())).matrix();
                           d = (xv.array().abs() <= kSigmoidClamp).select(d, 0.0);
                           t.accumulate(ix, g.cwiseProduct(d));
                         },
                         "sigmoid");
}

/// Horizontal concatenation of tensors with equal row counts.
inline Tensor concat_cols(std::span<const Tensor> ts) {
  if (ts.empty()) throw ContractError("concat_cols: no operands");
  auto& tape = ts.front().tape();
  const auto rows = ts.front().rows();
  Eigen::Index total = 0;
  bool need = false;
  for (const auto& t : ts) {
    detail::same_tape(ts.front(), t);
    if (t.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    total += t.cols();
    need = need || t.requires_grad();
  }
  Matrix out(rows, total);
  std::vector<std::pair<std::size_t, Eigen::Index>> parts;  // (id, width)
  Eigen::Index at = 0;
  for (const auto& t : ts) {
    out.middleCols(at, t.cols()) = t.value();
    parts.emplace_back(t.id(), t.cols());
    at += t.cols();
  }
  return tape.record(std::move(out), need,
                     [parts = std::move(parts)](Tape& t, const Matrix& g) {
                       Eigen::Index off = 0;
                       for (auto [id, w] : parts) {
                         t.accumulate(id, g.middleCols(off, w));
                         off += w;
                       }
                     },
                     "concat_cols");
}

inline Tensor sum(const Tensor& x) {
  const auto ix = x.id();
  const auto r = x.rows(), c = x.cols();
  return x.tape().record(Matrix::Constant(1, 1, x.value().sum()), x.requires_grad(),
                         [ix, r, c](Tape& t, const Matrix& g) { t.accumulate(ix, Matrix::Constant(r, c, g(0, 0))); },
                         "sum");
}

inline Tensor mean(const Tensor& x) {
  if (x.value().size() == 0) throw ContractError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

inline constexpr double kProbClamp = 1e-7;

/// Weighted binary cross-entropy averaged over entries:
///   mean_i -[w * y_i * log s_i + (1 - y_i) * log(1 - s_i)]
/// with s clamped to [1e-7, 1 - 1e-7] (zero gradient where the clamp is active).
inline Tensor bce(const Tensor& scores, std::span<const double> labels, double pos_weight) {
  const auto& sv = scores.value();
  if (static_cast<std::size_t>(sv.size()) != labels.size())
    throw ContractError("bce: " + std::to_string(sv.size()) + " scores for " + std::to_string(labels.size()) +
                        " labels");
  if (labels.empty()) throw ContractError("bce: empty input");
  const double n = static_cast<double>(labels.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    const double s = std::clamp(sv(i), kProbClamp, 1.0 - kProbClamp);
    const double y = labels[static_cast<std::size_t>(i)];
    total += -(pos_weight * y * std::log(s) + (1.0 - y) * std::log(1.0 - s));
  }
  const auto is = scores.id();
  std::vector<double> ys(labels.begin(), labels.end());
  return scores.tape().record(Matrix::Constant(1, 1, total / n), scores.requires_grad(),
                              [is, ys = std::move(ys), pos_weight, n](Tape& t, const Matrix& g) {
                                const auto& s = t.value(is);
                                Matrix d(s.rows(), s.cols());
                                for (Eigen::Index i = 0; i < s.size(); ++i) {
                                  const double si = s(i);
                                  const double y = ys[static_cast<std::size_t>(i)];
                                  if (si < kProbClamp || si > 1.0 - kProbClamp) {
                                    d(i) = 0.0;
                                    continue;
                                  }
                                  d(i) = g(0, 0) * (-pos_weight * y / si + (1.0 - y) / (1.0 - si)) / n;
                                }
                                t.accumulate(is, d);
                              },
                              "bce");
}

// ---------------------------------------------------------------------------
// Gradient checking

/// Scalar function of several leaf tensors, recorded on the given tape.
using ScalarFn = std::function<Tensor(Tape&, std::span<const Tensor>)>;

/// Compares backward() gradients with central finite differences over every entry of
/// every input. Returns the max relative error |a - n| / max(|a|, |n|, 1e-8).
inline double finite_diff_check(const ScalarFn& f, std::vector<Matrix> inputs, double eps) {
  if (!(eps > 0.0)) throw ArgumentError("finite_diff_check: eps must be positive");
  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Tensor> leaves;
    for (const auto& x : inputs) leaves.push_back(tape.leaf(x, true));
    auto loss = f(tape, leaves);
    tape.backward(loss);
    for (const auto& l : leaves) analytic.push_back(l.grad());
  }
  auto eval = [&]() {
    Tape tape;
    std::vector<Tensor> leaves;
    for (const auto& x : inputs) leaves.push_back(tape.leaf(x, false));
    return f(tape, leaves).item();
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k](i);
      inputs[k](i) = orig + eps;
      const double fp = eval();
      inputs[k](i) = orig - eps;
      const double fm = eval();
      inputs[k](i) = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[k](i);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

inline double finite_diff_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Matrix& x, double eps) {
  return finite_diff_check([&f](Tape& t, std::span<const Tensor> xs) { return f(t, xs[0]); },
                           std::vector<Matrix>{x}, eps);
}

}  // namespace dgsum::ad
