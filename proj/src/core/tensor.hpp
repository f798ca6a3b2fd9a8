#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"

namespace ndr {

class Tape;

using Buf = std::vector<double>;
using BufPtr = std::shared_ptr<const Buf>;
using Shape = std::vector<int>;

inline long long shape_size(const Shape& s) {
  long long n = 1;
  for (int d : s) n *= d;
  return n;
}

// Dense row-major f64 tensor. Buffers are immutable and shared, so copies are
// cheap and untracked tensors can be used freely across threads. A tensor is
// "tracked" when it carries a node handle onto a Tape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, Buf data);
  Tensor(Shape shape, BufPtr data);

  static Tensor scalar(double v) { return Tensor({}, Buf{v}); }
  static Tensor vector(Buf v) {
    int n = int(v.size());
    return Tensor({n}, std::move(v));
  }
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v);
  static Tensor eye(int n);

  const Shape& shape() const { return shape_; }
  int rank() const { return int(shape_.size()); }
  int dim(int i) const { return shape_[size_t(i)]; }
  long long size() const { return shape_size(shape_); }
  bool empty() const { return data_ == nullptr; }

  std::span<const double> data() const { return {data_->data(), data_->size()}; }
  const BufPtr& buffer() const { return data_; }

  double value() const;                    // scalar (size-1) tensors only
  double operator()(int i) const { return (*data_)[size_t(i)]; }
  double operator()(int r, int c) const { return (*data_)[size_t(r) * size_t(shape_[1]) + size_t(c)]; }

  bool tracked() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

  // Same values with the tape handle dropped.
  Tensor detached() const { return Tensor(shape_, data_); }

 private:
  Shape shape_;
  BufPtr data_;
  Tape* tape_ = nullptr;
  int node_ = -1;

  friend class Tape;
};

enum class OpKind : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  MatMul,
  Transpose,
  Concat,
  Slice,
  Reshape,
  Clip,
  Log,
  Exp,
  Sigmoid,
  Tanh,
  Relu,
  Abs,
  Huber,
  Scale,
  AddConst,
  PowConst,
  Sum,
  SqNorm,
  Outer,
  DiagExtract,
  DiagEmbed,
  Cholesky,
  TriSolveLower,
  MatInv,
  AngleWrap,
  Atan2,
};

struct TapeNode {
  OpKind kind = OpKind::Leaf;
  std::vector<int> parents;      // node id per input, -1 for untracked inputs
  std::vector<BufPtr> ins;       // saved forward inputs
  std::vector<Shape> in_shapes;
  BufPtr out;
  Shape out_shape;
  double a = 0.0, b = 0.0;       // scalar payload (clip bounds, scale, exponent, ...)
  std::vector<int> iaux;         // integer payload (slice offsets, wrap mask, ...)
  BufPtr aux0, aux1;             // tensor payload (per-element clip bounds)
};

// Reverse-mode tape. Nodes are appended in execution order; backward() walks
// them once in strictly reverse order. Single-threaded by design; run one tape
// per trajectory and reduce gradients outside.
class Tape {
 public:
  // Registers a leaf and returns the tracked handle to it.
  Tensor watch(const Tensor& value);

  // Accumulates d(loss)/d(node) for every node reachable from `loss`.
  // Gradients of untouched leaves are zero.
  void backward(const Tensor& loss);

  // Gradient of the last backward() w.r.t. a tracked tensor (zeros if unused).
  Tensor grad(const Tensor& t) const;

  size_t num_nodes() const { return nodes_.size(); }
  void reset();

  int push(TapeNode node);
  const TapeNode& node(int id) const { return nodes_[size_t(id)]; }

  static Tensor adopt(Tensor t, Tape* tape, int node) {
    t.tape_ = tape;
    t.node_ = node;
    return t;
  }

 private:
  Buf& grad_buf(int id);

  std::vector<TapeNode> nodes_;
  std::vector<std::unique_ptr<Buf>> grads_;
};

// ---- Differentiable operations -------------------------------------------
//
// Each op computes its value eagerly, rejects non-finite results, and records
// itself when any input is tracked. Mixing inputs from two different tapes is
// an error.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// Hadamard product; either side may be a size-1 tensor (broadcast).
Tensor mul(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor concat(const std::vector<Tensor>& parts);
Tensor slice(const Tensor& a, int offset, int len);
Tensor reshape(const Tensor& a, Shape shape);
Tensor clip(const Tensor& a, double lo, double hi);
// Per-element bounds; lo/hi must be untracked constants.
Tensor clip(const Tensor& a, const Tensor& lo, const Tensor& hi);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor abs(const Tensor& a);
// Elementwise Huber with threshold delta (quadratic inside, linear outside).
Tensor huber(const Tensor& a, double delta);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor pow_const(const Tensor& a, double p);
Tensor sum(const Tensor& a);
Tensor sqnorm(const Tensor& a);
Tensor outer(const Tensor& a, const Tensor& b);
Tensor diag_part(const Tensor& a);
Tensor diag_matrix(const Tensor& v);
// Lower-triangular Cholesky factor; reads only the lower triangle of a.
Tensor cholesky(const Tensor& a);
// Solves L x = b with L lower triangular (b vector or matrix).
Tensor tri_solve_lower(const Tensor& l, const Tensor& b);
Tensor inverse(const Tensor& a);
// Wraps masked channels into (-pi, pi]; gradient passes through unchanged.
Tensor angle_wrap(const Tensor& a, const std::vector<int>& mask);
// Elementwise atan2(y, x).
Tensor atan2(const Tensor& y, const Tensor& x);

Tensor symmetrize(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);

// ---- Gradient checking -----------------------------------------------------

struct GradCheckReport {
  double max_rel_err = 0.0;
  long long worst_index = -1;
  bool pass = false;
};

// Compares grad_fn(point) against central finite differences of value_fn.
// Relative error uses max(|a|, |b|, 1e-3 * ||g||_inf + 1e-12) as denominator
// so near-zero entries are judged against the gradient's overall scale.
GradCheckReport grad_check(const std::function<double(std::span<const double>)>& value_fn,
                           std::span<const double> analytic_grad,
                           std::span<const double> point, double step, double tol);

}  // namespace ndr
