#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace ndr {

namespace {

std::string shape_str(const Shape& s) {
  std::string r = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) r += ",";
    r += std::to_string(s[i]);
  }
  return r + ")";
}

void check_finite(const Buf& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) fail(Err::NonFinite, std::string("non-finite value produced by ") + op);
  }
}

bool is_matrix(const Tensor& t) { return t.rank() == 2; }
bool is_vec(const Tensor& t) { return t.rank() == 1; }

void require(bool cond, const char* msg) {
  if (!cond) fail(Err::Shape, msg);
}

}  // namespace

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)), data_(std::make_shared<Buf>(size_t(shape_size(shape_)), 0.0)) {}

Tensor::Tensor(Shape shape, Buf data) : shape_(std::move(shape)), data_(std::make_shared<Buf>(std::move(data))) {
  if ((long long)(data_->size()) != shape_size(shape_))
    fail(Err::Shape, "tensor data length does not match shape " + shape_str(shape_));
}

Tensor::Tensor(Shape shape, BufPtr data) : shape_(std::move(shape)), data_(std::move(data)) {
  if ((long long)(data_->size()) != shape_size(shape_))
    fail(Err::Shape, "tensor data length does not match shape " + shape_str(shape_));
}

Tensor Tensor::full(Shape shape, double v) {
  Buf b(size_t(shape_size(shape)), v);
  return Tensor(std::move(shape), std::move(b));
}

Tensor Tensor::eye(int n) {
  Buf b(size_t(n) * size_t(n), 0.0);
  for (int i = 0; i < n; ++i) b[size_t(i) * size_t(n) + size_t(i)] = 1.0;
  return Tensor({n, n}, std::move(b));
}

double Tensor::value() const {
  if (size() != 1) fail(Err::Shape, "value() requires a size-1 tensor");
  return (*data_)[0];
}

// ---- Tape -------------------------------------------------------------------

Tensor Tape::watch(const Tensor& value) {
  TapeNode n;
  n.kind = OpKind::Leaf;
  n.out = value.buffer();
  n.out_shape = value.shape();
  Tensor t = value.detached();
  t.tape_ = this;
  t.node_ = push(std::move(n));
  return t;
}

int Tape::push(TapeNode node) {
  nodes_.push_back(std::move(node));
  return int(nodes_.size()) - 1;
}

void Tape::reset() {
  nodes_.clear();
  grads_.clear();
}

Buf& Tape::grad_buf(int id) {
  auto& g = grads_[size_t(id)];
  if (!g) g = std::make_unique<Buf>(nodes_[size_t(id)].out->size(), 0.0);
  return *g;
}

Tensor Tape::grad(const Tensor& t) const {
  if (t.tape() != this || t.node() < 0) fail(Err::InvalidArg, "grad() of a tensor not on this tape");
  const auto& g = grads_[size_t(t.node())];
  if (!g) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), *g);
}

// ---- Op construction helper --------------------------------------------------

namespace {

struct OpBuild {
  TapeNode node;
  Tape* tape = nullptr;

  void input(const Tensor& t) {
    if (t.tracked()) {
      if (tape && t.tape() != tape) fail(Err::InvalidArg, "op mixes tensors from two tapes");
      tape = t.tape();
      node.parents.push_back(t.node());
    } else {
      node.parents.push_back(-1);
    }
    node.ins.push_back(t.buffer());
    node.in_shapes.push_back(t.shape());
  }

  Tensor finish(OpKind kind, Shape out_shape, Buf out, const char* name) {
    check_finite(out, name);
    node.kind = kind;
    auto out_ptr = std::make_shared<Buf>(std::move(out));
    node.out = out_ptr;
    node.out_shape = out_shape;
    Tensor t(std::move(out_shape), BufPtr(out_ptr));
    if (tape) {
      int id = tape->push(std::move(node));
      return Tape::adopt(std::move(t), tape, id);
    }
    return t;
  }
};

// out += alpha * A(ra x ca) * B(ca x cb)  (row-major dense)
void gemm_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
              int ra, int ca, int cb, double alpha = 1.0) {
  for (int i = 0; i < ra; ++i) {
    for (int k = 0; k < ca; ++k) {
      double av = alpha * a[size_t(i) * size_t(ca) + size_t(k)];
      if (av == 0.0) continue;
      const double* brow = &b[size_t(k) * size_t(cb)];
      double* orow = &out[size_t(i) * size_t(cb)];
      for (int j = 0; j < cb; ++j) orow[j] += av * brow[j];
    }
  }
}

Buf transpose_buf(std::span<const double> a, int r, int c) {
  Buf out(size_t(r) * size_t(c));
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[size_t(j) * size_t(r) + size_t(i)] = a[size_t(i) * size_t(c) + size_t(j)];
  return out;
}

// Solves L x = b in place over columns of b (L lower, row-major n x n).
void forward_subst(std::span<const double> l, int n, std::span<double> x, int cols) {
  for (int c = 0; c < cols; ++c) {
    for (int i = 0; i < n; ++i) {
      double s = x[size_t(i) * size_t(cols) + size_t(c)];
      for (int k = 0; k < i; ++k) s -= l[size_t(i) * size_t(n) + size_t(k)] * x[size_t(k) * size_t(cols) + size_t(c)];
      double d = l[size_t(i) * size_t(n) + size_t(i)];
      if (d == 0.0) fail(Err::SingularInnovationCovariance, "zero diagonal in triangular solve");
      x[size_t(i) * size_t(cols) + size_t(c)] = s / d;
    }
  }
}

// Solves L^T x = b in place over columns of b.
void backward_subst(std::span<const double> l, int n, std::span<double> x, int cols) {
  for (int c = 0; c < cols; ++c) {
    for (int i = n - 1; i >= 0; --i) {
      double s = x[size_t(i) * size_t(cols) + size_t(c)];
      for (int k = i + 1; k < n; ++k) s -= l[size_t(k) * size_t(n) + size_t(i)] * x[size_t(k) * size_t(cols) + size_t(c)];
      double d = l[size_t(i) * size_t(n) + size_t(i)];
      if (d == 0.0) fail(Err::SingularInnovationCovariance, "zero diagonal in triangular solve");
      x[size_t(i) * size_t(cols) + size_t(c)] = s / d;
    }
  }
}

Buf cholesky_buf(std::span<const double> s, int n) {
  Buf l(size_t(n) * size_t(n), 0.0);
  for (int j = 0; j < n; ++j) {
    double d = s[size_t(j) * size_t(n) + size_t(j)];
    for (int k = 0; k < j; ++k) d -= l[size_t(j) * size_t(n) + size_t(k)] * l[size_t(j) * size_t(n) + size_t(k)];
    if (!(d > 0.0)) fail(Err::NotPositiveDefinite, "cholesky pivot <= 0 at column " + std::to_string(j));
    double dj = std::sqrt(d);
    l[size_t(j) * size_t(n) + size_t(j)] = dj;
    for (int i = j + 1; i < n; ++i) {
      double v = s[size_t(i) * size_t(n) + size_t(j)];
      for (int k = 0; k < j; ++k) v -= l[size_t(i) * size_t(n) + size_t(k)] * l[size_t(j) * size_t(n) + size_t(k)];
      l[size_t(i) * size_t(n) + size_t(j)] = v / dj;
    }
  }
  return l;
}

// Gauss-Jordan inverse with partial pivoting.
Buf inverse_buf(std::span<const double> a_in, int n) {
  Buf a(a_in.begin(), a_in.end());
  Buf inv(size_t(n) * size_t(n), 0.0);
  for (int i = 0; i < n; ++i) inv[size_t(i) * size_t(n) + size_t(i)] = 1.0;
  for (int col = 0; col < n; ++col) {
    int piv = col;
    double best = std::fabs(a[size_t(col) * size_t(n) + size_t(col)]);
    for (int r = col + 1; r < n; ++r) {
      double v = std::fabs(a[size_t(r) * size_t(n) + size_t(col)]);
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    if (!(best > 0.0) || !std::isfinite(best))
      fail(Err::SingularInnovationCovariance, "singular matrix in inverse");
    if (piv != col) {
      for (int j = 0; j < n; ++j) {
        std::swap(a[size_t(piv) * size_t(n) + size_t(j)], a[size_t(col) * size_t(n) + size_t(j)]);
        std::swap(inv[size_t(piv) * size_t(n) + size_t(j)], inv[size_t(col) * size_t(n) + size_t(j)]);
      }
    }
    double d = a[size_t(col) * size_t(n) + size_t(col)];
    for (int j = 0; j < n; ++j) {
      a[size_t(col) * size_t(n) + size_t(j)] /= d;
      inv[size_t(col) * size_t(n) + size_t(j)] /= d;
    }
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      double f = a[size_t(r) * size_t(n) + size_t(col)];
      if (f == 0.0) continue;
      for (int j = 0; j < n; ++j) {
        a[size_t(r) * size_t(n) + size_t(j)] -= f * a[size_t(col) * size_t(n) + size_t(j)];
        inv[size_t(r) * size_t(n) + size_t(j)] -= f * inv[size_t(col) * size_t(n) + size_t(j)];
      }
    }
  }
  return inv;
}

}  // namespace

// ---- Elementwise and structural ops ------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add: shape mismatch");
  Buf out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  OpBuild ob;
  ob.input(a);
  ob.input(b);
  return ob.finish(OpKind::Add, a.shape(), std::move(out), "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "sub: shape mismatch");
  Buf out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  OpBuild ob;
  ob.input(a);
  ob.input(b);
  return ob.finish(OpKind::Sub, a.shape(), std::move(out), "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  bool sa = a.size() == 1, sb = b.size() == 1;
  require(sa || sb || a.shape() == b.shape(), "mul: shape mismatch");
  const Tensor& big = sa ? b : a;
  Buf out(size_t(big.size()));
  auto ad = a.data();
  auto bd = b.data();
  if (sa && !sb) {
    for (size_t i = 0; i < out.size(); ++i) out[i] = ad[0] * bd[i];
  } else if (sb && !sa) {
    for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[0];
  } else if (sa && sb) {
    out.resize(1);
    out[0] = ad[0] * bd[0];
  } else {
    for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  }
  OpBuild ob;
  ob.input(a);
  ob.input(b);
  return ob.finish(OpKind::Mul, (sa && sb) ? a.shape() : big.shape(), std::move(out), "mul");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  int ra, ca, rb, cb;
  if (is_matrix(a)) {
    ra = a.dim(0);
    ca = a.dim(1);
  } else if (is_vec(a)) {
    ra = 1;
    ca = a.dim(0);
  } else {
    fail(Err::Shape, "matmul: lhs must be rank 1 or 2");
  }
  if (is_matrix(b)) {
    rb = b.dim(0);
    cb = b.dim(1);
  } else if (is_vec(b)) {
    rb = b.dim(0);
    cb = 1;
  } else {
    fail(Err::Shape, "matmul: rhs must be rank 1 or 2");
  }
  require(ca == rb, "matmul: inner dimensions do not match");
  Buf out(size_t(ra) * size_t(cb), 0.0);
  gemm_acc(a.data(), b.data(), out, ra, ca, cb);
  Shape os;
  if (is_matrix(a) && is_matrix(b))
    os = {ra, cb};
  else if (is_matrix(a))
    os = {ra};
  else if (is_matrix(b))
    os = {cb};
  else
    os = {};
  OpBuild ob;
  ob.input(a);
  ob.input(b);
  return ob.finish(OpKind::MatMul, std::move(os), std::move(out), "matmul");
}

Tensor transpose(const Tensor& a) {
  require(is_matrix(a), "transpose: rank-2 tensor required");
  Buf out = transpose_buf(a.data(), a.dim(0), a.dim(1));
  OpBuild ob;
  ob.input(a);
  return ob.finish(OpKind::Transpose, {a.dim(1), a.dim(0)}, std::move(out), "transpose");
}

Tensor concat(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat: empty input list");
  Buf out;
  OpBuild ob;
  std::vector<int> lens;
  for (const auto& p : parts) {
    require(p.rank() <= 1, "concat: rank-0/1 tensors required");
    ob.input(p);
    lens.push_back(int(p.size()));
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  ob.node.iaux = std::move(lens);
  int total = int(out.size());
  return ob.finish(OpKind::Concat, {total}, std::move(out), "concat");
}

Tensor slice(const Tensor& a, int offset, int len) {
  require(a.rank() == 1, "slice: rank-1 tensor required");
  require(offset >= 0 && len >= 0 && offset + len <= a.dim(0), "slice: out of range");
  Buf out(a.data().begin() + offset, a.data().begin() + offset + len);
  OpBuild ob;
  ob.input(a);
  ob.node.iaux = {offset, len};
  return ob.finish(OpKind::Slice, {len}, std::move(out), "slice");
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(shape_size(shape) == a.size(), "reshape: element count mismatch");
  Buf out(a.data().begin(), a.data().end());
  OpBuild ob;
  ob.input(a);
  return ob.finish(OpKind::Reshape, std::move(shape), std::move(out), "reshape");
}

namespace {

template <class F>
Tensor unary_ew(const Tensor& a, OpKind kind, const char* name, double pa, double pb, F&& f) {
  Buf out(size_t(a.size()));
  auto ad = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(ad[i]);
  OpBuild ob;
  ob.input(a);
  ob.node.a = pa;
  ob.node.b = pb;
  return ob.finish(kind, a.shape(), std::move(out), name);
}

}  // namespace

Tensor clip(const Tensor& a, double lo, double hi) {
  require(lo <= hi, "clip: lo > hi");
  return unary_ew(a, OpKind::Clip, "clip", lo, hi,
                  [&](double x) { return std::min(std::max(x, lo), hi); });
}

Tensor clip(const Tensor& a, const Tensor& lo, const Tensor& hi) {
  require(lo.shape() == a.shape() && hi.shape() == a.shape(), "clip: bound shape mismatch");
  require(!lo.tracked() && !hi.tracked(), "clip: bounds must be constants");
  Buf out(size_t(a.size()));
  auto ad = a.data();
  auto ld = lo.data();
  auto hd = hi.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(ad[i], ld[i]), hd[i]);
  OpBuild ob;
  ob.input(a);
  ob.node.aux0 = lo.buffer();
  ob.node.aux1 = hi.buffer();
  return ob.finish(OpKind::Clip, a.shape(), std::move(out), "clip");
}

Tensor log(const Tensor& a) {
  return unary_ew(a, OpKind::Log, "log", 0, 0, [](double x) { return std::log(x); });
}

Tensor exp(const Tensor& a) {
  return unary_ew(a, OpKind::Exp, "exp", 0, 0, [](double x) { return std::exp(x); });
}

Tensor sigmoid(const Tensor& a) {
  return unary_ew(a, OpKind::Sigmoid, "sigmoid", 0, 0, [](double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
}

Tensor tanh(const Tensor& a) {
  return unary_ew(a, OpKind::Tanh, "tanh", 0, 0, [](double x) { return std::tanh(x); });
}

Tensor relu(const Tensor& a) {
  return unary_ew(a, OpKind::Relu, "relu", 0, 0, [](double x) { return x > 0.0 ? x : 0.0; });
}

Tensor abs(const Tensor& a) {
  return unary_ew(a, OpKind::Abs, "abs", 0, 0, [](double x) { return std::fabs(x); });
}

Tensor huber(const Tensor& a, double delta) {
  require(delta > 0.0, "huber: delta must be positive");
  return unary_ew(a, OpKind::Huber, "huber", delta, 0, [&](double e) {
    double ae = std::fabs(e);
    return ae <= delta ? 0.5 * e * e : delta * (ae - 0.5 * delta);
  });
}

Tensor scale(const Tensor& a, double c) {
  return unary_ew(a, OpKind::Scale, "scale", c, 0, [&](double x) { return c * x; });
}

Tensor add_const(const Tensor& a, double c) {
  return unary_ew(a, OpKind::AddConst, "add_const", c, 0, [&](double x) { return x + c; });
}

Tensor pow_const(const Tensor& a, double p) {
  return unary_ew(a, OpKind::PowConst, "pow_const", p, 0, [&](double x) { return std::pow(x, p); });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  OpBuild ob;
  ob.input(a);
  return ob.finish(OpKind::Sum, {}, Buf{s}, "sum");
}

Tensor sqnorm(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x * x;
  OpBuild ob;
  ob.input(a);
  return ob.finish(OpKind::SqNorm, {}, Buf{s}, "sqnorm");
}

Tensor outer(const Tensor& a, const Tensor& b) {
  require(is_vec(a) && is_vec(b), "outer: rank-1 tensors required");
  int m = a.dim(0), n = b.dim(0);
  Buf out(size_t(m) * size_t(n));
  auto ad = a.data();
  auto bd = b.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[size_t(i) * size_t(n) + size_t(j)] = ad[size_t(i)] * bd[size_t(j)];
  OpBuild ob;
  ob.input(a);
  ob.input(b);
  return ob.finish(OpKind::Outer, {m, n}, std::move(out), "outer");
}

Tensor diag_part(const Tensor& a) {
  require(is_matrix(a) && a.dim(0) == a.dim(1), "diag_part: square matrix required");
  int n = a.dim(0);
  Buf out(size_t(n), 0.0);
  for (int i = 0; i < n; ++i) out[size_t(i)] = a(i, i);
  OpBuild ob;
  ob.input(a);
  return ob.finish(OpKind::DiagExtract, {n}, std::move(out), "diag_part");
}

Tensor diag_matrix(const Tensor& v) {
  require(is_vec(v), "diag_matrix: rank-1 tensor required");
  int n = v.dim(0);
  Buf out(size_t(n) * size_t(n), 0.0);
  for (int i = 0; i < n; ++i) out[size_t(i) * size_t(n) + size_t(i)] = v(i);
  OpBuild ob;
  ob.input(v);
  return ob.finish(OpKind::DiagEmbed, {n, n}, std::move(out), "diag_matrix");
}

Tensor cholesky(const Tensor& a) {
  require(is_matrix(a) && a.dim(0) == a.dim(1), "cholesky: square matrix required");
  int n = a.dim(0);
  double scale = 1.0, asym = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) {
      asym = std::max(asym, std::fabs(a(i, j) - a(j, i)));
      scale = std::max(scale, std::fabs(a(i, j)));
    }
  for (int i = 0; i < n; ++i) scale = std::max(scale, std::fabs(a(i, i)));
  if (asym > 1e-5 * scale) fail(Err::NotPositiveDefinite, "cholesky: input is not symmetric");
  Buf out = cholesky_buf(a.data(), n);
  OpBuild ob;
  ob.input(a);
  return ob.finish(OpKind::Cholesky, a.shape(), std::move(out), "cholesky");
}

Tensor tri_solve_lower(const Tensor& l, const Tensor& b) {
  require(is_matrix(l) && l.dim(0) == l.dim(1), "tri_solve_lower: square matrix required");
  int n = l.dim(0);
  int cols;
  if (is_vec(b)) {
    require(b.dim(0) == n, "tri_solve_lower: rhs length mismatch");
    cols = 1;
  } else if (is_matrix(b)) {
    require(b.dim(0) == n, "tri_solve_lower: rhs rows mismatch");
    cols = b.dim(1);
  } else {
    fail(Err::Shape, "tri_solve_lower: rhs must be rank 1 or 2");
  }
  Buf out(b.data().begin(), b.data().end());
  forward_subst(l.data(), n, out, cols);
  OpBuild ob;
  ob.input(l);
  ob.input(b);
  return ob.finish(OpKind::TriSolveLower, b.shape(), std::move(out), "tri_solve_lower");
}

Tensor inverse(const Tensor& a) {
  require(is_matrix(a) && a.dim(0) == a.dim(1), "inverse: square matrix required");
  Buf out = inverse_buf(a.data(), a.dim(0));
  OpBuild ob;
  ob.input(a);
  return ob.finish(OpKind::MatInv, a.shape(), std::move(out), "inverse");
}

Tensor angle_wrap(const Tensor& a, const std::vector<int>& mask) {
  require(a.rank() == 1 && int(mask.size()) == a.dim(0), "angle_wrap: mask length mismatch");
  Buf out(a.data().begin(), a.data().end());
  for (size_t i = 0; i < out.size(); ++i)
    if (mask[i]) out[i] = wrap_angle(out[i]);
  OpBuild ob;
  ob.input(a);
  ob.node.iaux = mask;
  return ob.finish(OpKind::AngleWrap, a.shape(), std::move(out), "angle_wrap");
}

Tensor atan2(const Tensor& y, const Tensor& x) {
  require(y.shape() == x.shape(), "atan2: shape mismatch");
  Buf out(size_t(y.size()));
  auto yd = y.data();
  auto xd = x.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::atan2(yd[i], xd[i]);
  OpBuild ob;
  ob.input(y);
  ob.input(x);
  return ob.finish(OpKind::Atan2, y.shape(), std::move(out), "atan2");
}

Tensor symmetrize(const Tensor& a) { return scale(add(a, transpose(a)), 0.5); }

double dot(const Tensor& a, const Tensor& b) {
  require(a.size() == b.size(), "dot: size mismatch");
  double s = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (size_t i = 0; i < ad.size(); ++i) s += ad[i] * bd[i];
  return s;
}

// ---- Backward -----------------------------------------------------------------

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this) fail(Err::InvalidArg, "backward: loss is not on this tape");
  if (loss.size() != 1) fail(Err::InvalidArg, "backward: loss must be scalar");
  grads_.clear();
  grads_.resize(nodes_.size());
  grad_buf(loss.node())[0] = 1.0;

  for (int id = int(nodes_.size()) - 1; id >= 0; --id) {
    const auto& g = grads_[size_t(id)];
    if (!g) continue;
    for (double x : *g)
      if (!std::isfinite(x)) fail(Err::NonFiniteGradient, "non-finite gradient at node " + std::to_string(id));
    const TapeNode& nd = nodes_[size_t(id)];
    const Buf& gy = *g;

    auto acc = [&](int input_idx) -> Buf* {
      int pid = nd.parents[size_t(input_idx)];
      if (pid < 0) return nullptr;
      return &grad_buf(pid);
    };

    switch (nd.kind) {
      case OpKind::Leaf:
        break;
      case OpKind::Add: {
        for (int s = 0; s < 2; ++s)
          if (Buf* gp = acc(s))
            for (size_t i = 0; i < gy.size(); ++i) (*gp)[i] += gy[i];
        break;
      }
      case OpKind::Sub: {
        if (Buf* gp = acc(0))
          for (size_t i = 0; i < gy.size(); ++i) (*gp)[i] += gy[i];
        if (Buf* gp = acc(1))
          for (size_t i = 0; i < gy.size(); ++i) (*gp)[i] -= gy[i];
        break;
      }
      case OpKind::Mul: {
        const Buf& av = *nd.ins[0];
        const Buf& bv = *nd.ins[1];
        bool sa = av.size() == 1, sb = bv.size() == 1;
        if (Buf* gp = acc(0)) {
          if (sa && !sb) {
            double s = 0.0;
            for (size_t i = 0; i < gy.size(); ++i) s += gy[i] * bv[i];
            (*gp)[0] += s;
          } else if (!sa && sb) {
            for (size_t i = 0; i < gy.size(); ++i) (*gp)[i] += gy[i] * bv[0];
          } else {
            for (size_t i = 0; i < gy.size(); ++i) (*gp)[i] += gy[i] * bv[i];
          }
        }
        if (Buf* gp = acc(1)) {
          if (sb && !sa) {
            double s = 0.0;
            for (size_t i = 0; i < gy.size(); ++i) s += gy[i] * av[i];
            (*gp)[0] += s;
          } else if (!sb && sa) {
            for (size_t i = 0; i < gy.size(); ++i) (*gp)[i] += gy[i] * av[0];
          } else {
            for (size_t i = 0; i < gy.size(); ++i) (*gp)[i] += gy[i] * av[i];
          }
        }
        break;
      }
      case OpKind::MatMul: {
        const Shape& sa = nd.in_shapes[0];
        const Shape& sb = nd.in_shapes[1];
        int m = sa.size() == 2 ? sa[0] : 1;
        int k = sa.size() == 2 ? sa[1] : sa[0];
        int n = sb.size() == 2 ? sb[1] : 1;
        // dA += dC * B^T ; dB += A^T * dC  (with vectors treated as 1-row/col)
        if (Buf* gp = acc(0)) {
          Buf bt = transpose_buf(*nd.ins[1], k, n);
          gemm_acc(gy, bt, *gp, m, n, k);
        }
        if (Buf* gp = acc(1)) {
          Buf at = transpose_buf(*nd.ins[0], m, k);
          gemm_acc(at, gy, *gp, k, m, n);
        }
        break;
      }
      case OpKind::Transpose: {
        if (Buf* gp = acc(0)) {
          int r = nd.in_shapes[0][0], c = nd.in_shapes[0][1];
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
              (*gp)[size_t(i) * size_t(c) + size_t(j)] += gy[size_t(j) * size_t(r) + size_t(i)];
        }
        break;
      }
      case OpKind::Concat: {
        int off = 0;
        for (size_t s = 0; s < nd.ins.size(); ++s) {
          int len = nd.iaux[s];
          if (Buf* gp = acc(int(s)))
            for (int i = 0; i < len; ++i) (*gp)[size_t(i)] += gy[size_t(off + i)];
          off += len;
        }
        break;
      }
      case OpKind::Slice: {
        if (Buf* gp = acc(0)) {
          int off = nd.iaux[0], len = nd.iaux[1];
          for (int i = 0; i < len; ++i) (*gp)[size_t(off + i)] += gy[size_t(i)];
        }
        break;
      }
      case OpKind::Reshape:
      case OpKind::AddConst:
      case OpKind::AngleWrap: {
        if (Buf* gp = acc(0))
          for (size_t i = 0; i < gy.size(); ++i) (*gp)[i] += gy[i];
        break;
      }
      case OpKind::Clip: {
        if (Buf* gp = acc(0)) {
          const Buf& x = *nd.ins[0];
          for (size_t i = 0; i < gy.size(); ++i) {
            double lo = nd.aux0 ? (*nd.aux0)[i] : nd.a;
            double hi = nd.aux1 ? (*nd.aux1)[i] : nd.b;
            // subgradient 1 on the boundary
            if (x[i] >= lo && x[i] <= hi) (*gp)[i] += gy[i];
          }
        }
        break;
      }
      case OpKind::Log: {
        if (Buf* gp = acc(0)) {
          const Buf& x = *nd.ins[0];
          for (size_t i = 0; i < gy.size(); ++i) (*gp)[i] += gy[i] / x[i];
        }
        break;
      }
      case OpKind::Exp: {
        if (Buf* gp = acc(0)) {
          const Buf& y = *nd.out;
          for (size_t i = 0; i < gy.size(); ++i) (*gp)[i] += gy[i] * y[i];
        }
        break;
      }
      case OpKind::Sigmoid: {
        if (Buf* gp = acc(0)) {
          const Buf& y = *nd.out;
          for (size_t i = 0; i < gy.size(); ++i) (*gp)[i] += gy[i] * y[i] * (1.0 - y[i]);
        }
        break;
      }
      case OpKind::Tanh: {
        if (Buf* gp = acc(0)) {
          const Buf& y = *nd.out;
          for (size_t i = 0; i < gy.size(); ++i) (*gp)[i] += gy[i] * (1.0 - y[i] * y[i]);
        }
        break;
      }
      case OpKind::Relu: {
        if (Buf* gp = acc(0)) {
          const Buf& x = *nd.ins[0];
          for (size_t i = 0; i < gy.size(); ++i)
            if (x[i] > 0.0) (*gp)[i] += gy[i];
        }
        break;
      }
      case OpKind::Abs: {
        if (Buf* gp = acc(0)) {
          const Buf& x = *nd.ins[0];
          // subgradient at 0 defined as +1
          for (size_t i = 0; i < gy.size(); ++i) (*gp)[i] += gy[i] * (x[i] >= 0.0 ? 1.0 : -1.0);
        }
        break;
      }
      case OpKind::Huber: {
        if (Buf* gp = acc(0)) {
          const Buf& x = *nd.ins[0];
          double d = nd.a;
          for (size_t i = 0; i < gy.size(); ++i) {
            double e = x[i];
            double de = std::fabs(e) <= d ? e : (e >= 0.0 ? d : -d);
            (*gp)[i] += gy[i] * de;
          }
        }
        break;
      }
      case OpKind::Scale: {
        if (Buf* gp = acc(0))
          for (size_t i = 0; i < gy.size(); ++i) (*gp)[i] += nd.a * gy[i];
        break;
      }
      case OpKind::PowConst: {
        if (Buf* gp = acc(0)) {
          const Buf& x = *nd.ins[0];
          for (size_t i = 0; i < gy.size(); ++i)
            (*gp)[i] += gy[i] * nd.a * std::pow(x[i], nd.a - 1.0);
        }
        break;
      }
      case OpKind::Sum: {
        if (Buf* gp = acc(0))
          for (size_t i = 0; i < gp->size(); ++i) (*gp)[i] += gy[0];
        break;
      }
      case OpKind::SqNorm: {
        if (Buf* gp = acc(0)) {
          const Buf& x = *nd.ins[0];
          for (size_t i = 0; i < gp->size(); ++i) (*gp)[i] += 2.0 * gy[0] * x[i];
        }
        break;
      }
      case OpKind::Outer: {
        const Buf& av = *nd.ins[0];
        const Buf& bv = *nd.ins[1];
        int m = int(av.size()), n = int(bv.size());
        if (Buf* gp = acc(0))
          for (int i = 0; i < m; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += gy[size_t(i) * size_t(n) + size_t(j)] * bv[size_t(j)];
            (*gp)[size_t(i)] += s;
          }
        if (Buf* gp = acc(1))
          for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int i = 0; i < m; ++i) s += gy[size_t(i) * size_t(n) + size_t(j)] * av[size_t(i)];
            (*gp)[size_t(j)] += s;
          }
        break;
      }
      case OpKind::DiagExtract: {
        if (Buf* gp = acc(0)) {
          int n = nd.in_shapes[0][0];
          for (int i = 0; i < n; ++i) (*gp)[size_t(i) * size_t(n) + size_t(i)] += gy[size_t(i)];
        }
        break;
      }
      case OpKind::DiagEmbed: {
        if (Buf* gp = acc(0)) {
          int n = int(gp->size());
          for (int i = 0; i < n; ++i) (*gp)[size_t(i)] += gy[size_t(i) * size_t(n) + size_t(i)];
        }
        break;
      }
      case OpKind::Cholesky: {
        // Reverse of L = chol(S), S read from its lower triangle.
        // A = L^T dL; Phi: keep strict lower, halve diagonal, zero upper.
        // B = L^{-T} Phi(A) L^{-1}; dS_ij += B_ij + B_ji (i>j), dS_ii += B_ii.
        if (Buf* gp = acc(0)) {
          int n = nd.out_shape[0];
          const Buf& l = *nd.out;
          Buf lt = transpose_buf(l, n, n);
          Buf a(size_t(n) * size_t(n), 0.0);
          gemm_acc(lt, gy, a, n, n, n);
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
              if (j > i)
                a[size_t(i) * size_t(n) + size_t(j)] = 0.0;
              else if (j == i)
                a[size_t(i) * size_t(n) + size_t(j)] *= 0.5;
            }
          // Solve L^T Y = Phi(A), then B L = Y  =>  B = Y L^{-1} via L^T B^T = Y^T.
          backward_subst(l, n, a, n);
          Buf yt = transpose_buf(a, n, n);
          backward_subst(l, n, yt, n);
          // yt = B^T
          for (int i = 0; i < n; ++i) {
            (*gp)[size_t(i) * size_t(n) + size_t(i)] += yt[size_t(i) * size_t(n) + size_t(i)];
            for (int j = 0; j < i; ++j)
              (*gp)[size_t(i) * size_t(n) + size_t(j)] +=
                  yt[size_t(j) * size_t(n) + size_t(i)] + yt[size_t(i) * size_t(n) + size_t(j)];
          }
        }
        break;
      }
      case OpKind::TriSolveLower: {
        // X = L^{-1} B:  dB = L^{-T} dX;  dL = -tril(dB X^T).
        int n = nd.in_shapes[0][0];
        int cols = nd.in_shapes[1].size() == 2 ? nd.in_shapes[1][1] : 1;
        const Buf& l = *nd.ins[0];
        const Buf& x = *nd.out;
        Buf db(gy.begin(), gy.end());
        backward_subst(l, n, db, cols);
        if (Buf* gp = acc(1))
          for (size_t i = 0; i < db.size(); ++i) (*gp)[i] += db[i];
        if (Buf* gp = acc(0)) {
          Buf xt = transpose_buf(x, n, cols);
          Buf dl(size_t(n) * size_t(n), 0.0);
          gemm_acc(db, xt, dl, n, cols, n, -1.0);
          for (int i = 0; i < n; ++i)
            for (int j = 0; j <= i; ++j)
              (*gp)[size_t(i) * size_t(n) + size_t(j)] += dl[size_t(i) * size_t(n) + size_t(j)];
        }
        break;
      }
      case OpKind::MatInv: {
        // Y = A^{-1}: dA = -Y^T dY Y^T.
        if (Buf* gp = acc(0)) {
          int n = nd.out_shape[0];
          Buf yt = transpose_buf(*nd.out, n, n);
          Buf tmp(size_t(n) * size_t(n), 0.0);
          gemm_acc(yt, gy, tmp, n, n, n);
          gemm_acc(tmp, yt, *gp, n, n, n, -1.0);
        }
        break;
      }
      case OpKind::Atan2: {
        const Buf& yv = *nd.ins[0];
        const Buf& xv = *nd.ins[1];
        if (Buf* gp = acc(0))
          for (size_t i = 0; i < gy.size(); ++i)
            (*gp)[i] += gy[i] * xv[i] / (xv[i] * xv[i] + yv[i] * yv[i]);
        if (Buf* gp = acc(1))
          for (size_t i = 0; i < gy.size(); ++i)
            (*gp)[i] += -gy[i] * yv[i] / (xv[i] * xv[i] + yv[i] * yv[i]);
        break;
      }
    }
  }
}

// ---- Gradient check -------------------------------------------------------------

GradCheckReport grad_check(const std::function<double(std::span<const double>)>& value_fn,
                           std::span<const double> analytic_grad, std::span<const double> point,
                           double step, double tol) {
  GradCheckReport rep;
  std::vector<double> p(point.begin(), point.end());
  std::vector<double> fd(p.size());
  for (size_t i = 0; i < p.size(); ++i) {
    double keep = p[i];
    p[i] = keep + step;
    double fp = value_fn(p);
    p[i] = keep - step;
    double fm = value_fn(p);
    p[i] = keep;
    fd[i] = (fp - fm) / (2.0 * step);
  }
  double gmax = 0.0;
  for (double g : fd) gmax = std::max(gmax, std::fabs(g));
  for (size_t i = 0; i < p.size(); ++i) {
    double a = analytic_grad[i], b = fd[i];
    double den = std::max({std::fabs(a), std::fabs(b), 1e-3 * gmax + 1e-12});
    double rel = std::fabs(a - b) / den;
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_index = (long long)(i);
    }
  }
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

}  // namespace ndr
