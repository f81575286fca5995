#include "mpnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

#include "mpnn/errors.hpp"
#include "mpnn/simd/kernels.hpp"

namespace mpnn {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw DimensionError("zero-length axis in shape " + shape_str(shape_));
  }
  data_.assign(shape_numel(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw DimensionError("zero-length axis in shape " + shape_str(shape_));
  }
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_str(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<double> values;
  std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != cols) throw DimensionError("ragged matrix literal");
    values.insert(values.end(), r.begin(), r.end());
  }
  return matrix(rows.size(), cols, std::move(values));
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 2) return shape_[0];
  if (shape_.size() <= 1) return 1;
  throw DimensionError("not a matrix: " + shape_str(shape_));
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 2) return shape_[1];
  if (shape_.size() == 1) return shape_[0];
  if (shape_.empty()) return 1;
  throw DimensionError("not a matrix: " + shape_str(shape_));
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_str(shape_));
  }
  return data_[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  requires_grad_ = on;
  return *this;
}

std::span<const double> Tensor::grad() const {
  if (!grad_) return {};
  return *grad_;
}

std::span<double> Tensor::mutable_grad() {
  if (!grad_) grad_.emplace(data_.size(), 0.0);
  return *grad_;
}

void Tensor::zero_grad() {
  if (!grad_) {
    grad_.emplace(data_.size(), 0.0);
  } else {
    std::fill(grad_->begin(), grad_->end(), 0.0);
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " +
                         shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

// ---- Tape -----------------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(id_); }

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.owned;
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::bind(Tensor& tensor) {
  Node n;
  n.external = &tensor;
  if (record_ && tensor.requires_grad()) {
    n.sink = &tensor;
    n.needs_grad = true;
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::bind(const Tensor& tensor) {
  Node n;
  n.external = &tensor;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(Tensor value, std::vector<std::size_t> inputs, const char* op,
               BackwardFn backward) {
  if (!value.all_finite()) {
    throw DivergenceError(std::string("non-finite value produced by ") + op);
  }
  Node n;
  n.owned = std::move(value);
  if (record_) {
    n.needs_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) {
      return nodes_[i].needs_grad;
    });
    if (n.needs_grad) {
      n.inputs = std::move(inputs);
      n.backward = std::move(backward);
    }
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

std::span<double> Tape::grad_target(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return {};
  if (n.grad.empty()) n.grad.assign(value(id).numel(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ContractError("loss recorded on another tape");
  if (loss.value().numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_str(loss.shape()));
  }
  if (!record_) throw ContractError("backward() on a non-recording tape");
  auto seed = grad_target(loss.id());
  if (!seed.empty()) seed[0] += 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.sink) {
      auto dst = n.sink->mutable_grad();
      simd::active().axpy(1.0, n.grad.data(), dst.data(), dst.size());
    }
  }
  clear();
}

void Tape::clear() { nodes_.clear(); }

// ---- Ops ------------------------------------------------------------------

namespace {

const simd::KernelTable& K() { return simd::active(); }

void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands on different tapes");
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " +
                         shape_str(t.shape()));
  }
}

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_matrix(A, "matmul");
  require_matrix(B, "matmul");
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  if (B.dim(0) != k) {
    throw DimensionError("matmul inner dimensions disagree: " +
                         shape_str(A.shape()) + " * " + shape_str(B.shape()));
  }
  Tensor out(Shape{m, n});
  K().gemm_acc(m, n, k, A.data().data(), k, 1, B.data().data(), n,
               out.data().data(), n);
  simd::add_multiplies(m * n * k);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(std::move(out), {ia, ib}, "matmul",
                       [ia, ib, m, n, k](Tape& t, std::span<const double> g) {
                         const double* Av = t.value(ia).data().data();
                         const double* Bv = t.value(ib).data().data();
                         if (auto da = t.grad_target(ia); !da.empty()) {
                           K().gemm_nt_acc(m, k, n, g.data(), n, Bv, n, da.data(), k);
                         }
                         if (auto db = t.grad_target(ib); !db.empty()) {
                           K().gemm_acc(k, n, m, Av, 1, k, g.data(), n, db.data(), n);
                         }
                       });
}

Var transpose(Var a) {
  const Tensor& A = a.value();
  require_matrix(A, "transpose");
  const std::size_t m = A.dim(0), n = A.dim(1);
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = A.at(i, j);
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), {ia}, "transpose",
                       [ia, m, n](Tape& t, std::span<const double> g) {
                         auto da = t.grad_target(ia);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j)
                             da[i * n + j] += g[j * m + i];
                       });
}

const char* pointwise_name(Pointwise op) {
  switch (op) {
    case Pointwise::kIdentity:
      return "identity";
    case Pointwise::kSigmoid:
      return "sigmoid";
    case Pointwise::kTanh:
      return "tanh";
    case Pointwise::kRelu:
      return "relu";
    case Pointwise::kSoftplus:
      return "softplus";
  }
  return "?";
}

namespace {

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var pointwise(Pointwise op, Var x) {
  if (op == Pointwise::kIdentity) return x;
  const Tensor& X = x.value();
  Tensor out(X.shape(), std::vector<double>(X.numel()));
  auto in = X.data();
  auto o = out.data();
  switch (op) {
    case Pointwise::kSigmoid:
      for (std::size_t i = 0; i < in.size(); ++i) o[i] = sigmoid_scalar(in[i]);
      break;
    case Pointwise::kTanh:
      for (std::size_t i = 0; i < in.size(); ++i) o[i] = std::tanh(in[i]);
      break;
    case Pointwise::kRelu:
      for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
      break;
    case Pointwise::kSoftplus:
      for (std::size_t i = 0; i < in.size(); ++i)
        o[i] = std::max(in[i], 0.0) + std::log1p(std::exp(-std::abs(in[i])));
      break;
    case Pointwise::kIdentity:
      break;
  }
  const std::size_t ix = x.id();
  const std::size_t self = x.tape().size();
  return x.tape().push(
      std::move(out), {ix}, pointwise_name(op),
      [ix, self, op](Tape& t, std::span<const double> g) {
        auto dx = t.grad_target(ix);
        auto y = t.value(self).data();
        switch (op) {
          case Pointwise::kSigmoid:
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * y[i] * (1.0 - y[i]);
            break;
          case Pointwise::kTanh:
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (1.0 - y[i] * y[i]);
            break;
          case Pointwise::kRelu:
            for (std::size_t i = 0; i < g.size(); ++i)
              if (y[i] > 0.0) dx[i] += g[i];
            break;
          case Pointwise::kSoftplus:
            // d/dx log(1 + e^x) = sigmoid(x) = 1 - e^-y
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] -= g[i] * std::expm1(-y[i]);
            break;
          case Pointwise::kIdentity:
            break;
        }
      });
}

Var sigmoid(Var x) { return pointwise(Pointwise::kSigmoid, x); }
Var tanh(Var x) { return pointwise(Pointwise::kTanh, x); }
Var relu(Var x) { return pointwise(Pointwise::kRelu, x); }
Var softplus(Var x) { return pointwise(Pointwise::kSoftplus, x); }

namespace {

enum class Binary { kAdd, kSub, kMul };

Var binary(Binary kind, Var a, Var b) {
  static constexpr const char* kNames[] = {"add", "sub", "mul"};
  require_same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const char* name = kNames[static_cast<int>(kind)];
  const std::size_t ia = a.id(), ib = b.id();
  Tape& tape = a.tape();

  if (A.shape() == B.shape()) {
    const std::size_t n = A.numel();
    Tensor out(A.shape(), std::vector<double>(n));
    const double* x = A.data().data();
    const double* y = B.data().data();
    double* o = out.data().data();
    switch (kind) {
      case Binary::kAdd:
        K().add(x, y, o, n);
        break;
      case Binary::kSub:
        K().sub(x, y, o, n);
        break;
      case Binary::kMul:
        K().mul(x, y, o, n);
        simd::add_multiplies(n);
        break;
    }
    return tape.push(std::move(out), {ia, ib}, name,
                     [kind, ia, ib, n](Tape& t, std::span<const double> g) {
                       auto da = t.grad_target(ia);
                       auto db = t.grad_target(ib);
                       switch (kind) {
                         case Binary::kAdd:
                           if (!da.empty()) K().axpy(1.0, g.data(), da.data(), n);
                           if (!db.empty()) K().axpy(1.0, g.data(), db.data(), n);
                           break;
                         case Binary::kSub:
                           if (!da.empty()) K().axpy(1.0, g.data(), da.data(), n);
                           if (!db.empty()) K().axpy(-1.0, g.data(), db.data(), n);
                           break;
                         case Binary::kMul:
                           if (!da.empty())
                             K().mul_acc(g.data(), t.value(ib).data().data(), da.data(), n);
                           if (!db.empty())
                             K().mul_acc(g.data(), t.value(ia).data().data(), db.data(), n);
                           break;
                       }
                     });
  }

  // Scalar broadcast: exactly one side holds a single element.
  const bool a_scalar = A.numel() == 1;
  const bool b_scalar = B.numel() == 1;
  if (!a_scalar && !b_scalar) {
    throw DimensionError(std::string(name) + ": incompatible shapes " +
                         shape_str(A.shape()) + " and " + shape_str(B.shape()));
  }
  const bool scalar_left = a_scalar && !b_scalar;
  const Tensor& big = scalar_left ? B : A;
  const double s = scalar_left ? A[0] : B[0];
  const std::size_t n = big.numel();
  Tensor out(big.shape(), std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double x = scalar_left ? s : big[i];
    const double y = scalar_left ? big[i] : s;
    switch (kind) {
      case Binary::kAdd:
        out[i] = x + y;
        break;
      case Binary::kSub:
        out[i] = x - y;
        break;
      case Binary::kMul:
        out[i] = x * y;
        break;
    }
  }
  if (kind == Binary::kMul) simd::add_multiplies(n);
  return tape.push(
      std::move(out), {ia, ib}, name,
      [kind, ia, ib, n, scalar_left](Tape& t, std::span<const double> g) {
        const std::size_t ibig = scalar_left ? ib : ia;
        const std::size_t ismall = scalar_left ? ia : ib;
        auto dbig = t.grad_target(ibig);
        auto dsmall = t.grad_target(ismall);
        const double sv = t.value(ismall)[0];
        const Tensor& bigv = t.value(ibig);
        // Sign of each side in a - b.
        const double sign_big = (kind == Binary::kSub && scalar_left) ? -1.0 : 1.0;
        const double sign_small = (kind == Binary::kSub && !scalar_left) ? -1.0 : 1.0;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (kind == Binary::kMul) {
            if (!dbig.empty()) dbig[i] += g[i] * sv;
            acc += g[i] * bigv[i];
          } else {
            if (!dbig.empty()) dbig[i] += sign_big * g[i];
            acc += sign_small * g[i];
          }
        }
        if (!dsmall.empty()) dsmall[0] += acc;
      });
}

}  // namespace

Var add(Var a, Var b) { return binary(Binary::kAdd, a, b); }
Var sub(Var a, Var b) { return binary(Binary::kSub, a, b); }
Var mul(Var a, Var b) { return binary(Binary::kMul, a, b); }

Var scale(Var x, double c) {
  const Tensor& X = x.value();
  Tensor out(X.shape(), std::vector<double>(X.numel(), 0.0));
  K().axpy(c, X.data().data(), out.data().data(), X.numel());
  simd::add_multiplies(X.numel());
  const std::size_t ix = x.id();
  return x.tape().push(std::move(out), {ix}, "scale",
                       [ix, c](Tape& t, std::span<const double> g) {
                         auto dx = t.grad_target(ix);
                         K().axpy(c, g.data(), dx.data(), g.size());
                       });
}

Var one_minus(Var x) {
  const Tensor& X = x.value();
  Tensor out(X.shape(), std::vector<double>(X.numel()));
  for (std::size_t i = 0; i < X.numel(); ++i) out[i] = 1.0 - X[i];
  const std::size_t ix = x.id();
  return x.tape().push(std::move(out), {ix}, "one_minus",
                       [ix](Tape& t, std::span<const double> g) {
                         auto dx = t.grad_target(ix);
                         K().axpy(-1.0, g.data(), dx.data(), g.size());
                       });
}

Var add_bias(Var x, Var b) {
  require_same_tape(x, b);
  const Tensor& X = x.value();
  const Tensor& B = b.value();
  require_matrix(X, "add_bias");
  const std::size_t m = X.dim(0), n = X.dim(1);
  if (B.numel() != n || B.rank() > 2 || (B.rank() == 2 && B.dim(0) != 1)) {
    throw DimensionError("add_bias: bias " + shape_str(B.shape()) +
                         " does not match rows of " + shape_str(X.shape()));
  }
  Tensor out(X.shape(), std::vector<double>(X.numel()));
  for (std::size_t i = 0; i < m; ++i) {
    K().add(X.data().data() + i * n, B.data().data(), out.data().data() + i * n, n);
  }
  const std::size_t ix = x.id(), ib = b.id();
  return x.tape().push(std::move(out), {ix, ib}, "add_bias",
                       [ix, ib, m, n](Tape& t, std::span<const double> g) {
                         if (auto dx = t.grad_target(ix); !dx.empty()) {
                           K().axpy(1.0, g.data(), dx.data(), m * n);
                         }
                         if (auto db = t.grad_target(ib); !db.empty()) {
                           for (std::size_t i = 0; i < m; ++i)
                             K().axpy(1.0, g.data() + i * n, db.data(), n);
                         }
                       });
}

Var reduce_sum(Var x, std::size_t axis) {
  const Tensor& X = x.value();
  const AxisSplit s = split_axis(X.shape(), axis, "reduce_sum");
  Shape out_shape = X.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(Shape(out_shape), std::vector<double>(s.outer * s.inner, 0.0));
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.len; ++l)
      K().axpy(1.0, X.data().data() + (o * s.len + l) * s.inner,
               out.data().data() + o * s.inner, s.inner);
  const std::size_t ix = x.id();
  return x.tape().push(std::move(out), {ix}, "reduce_sum",
                       [ix, s](Tape& t, std::span<const double> g) {
                         auto dx = t.grad_target(ix);
                         for (std::size_t o = 0; o < s.outer; ++o)
                           for (std::size_t l = 0; l < s.len; ++l)
                             K().axpy(1.0, g.data() + o * s.inner,
                                      dx.data() + (o * s.len + l) * s.inner, s.inner);
                       });
}

Var sum(Var x) {
  const Tensor& X = x.value();
  double total = 0.0;
  for (double v : X.data()) total += v;
  const std::size_t ix = x.id();
  return x.tape().push(Tensor::scalar(total), {ix}, "sum",
                       [ix](Tape& t, std::span<const double> g) {
                         auto dx = t.grad_target(ix);
                         for (double& d : dx) d += g[0];
                       });
}

Var mean(Var x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.value().numel()));
}

Var softmax(Var x, std::size_t axis) {
  const Tensor& X = x.value();
  const AxisSplit s = split_axis(X.shape(), axis, "softmax");
  Tensor out(X.shape(), std::vector<double>(X.numel()));
  auto at = [&](std::size_t o, std::size_t l, std::size_t i) {
    return (o * s.len + l) * s.inner + i;
  };
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      double mx = X[at(o, 0, i)];
      for (std::size_t l = 1; l < s.len; ++l) mx = std::max(mx, X[at(o, l, i)]);
      double z = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) {
        const double e = std::exp(X[at(o, l, i)] - mx);
        out[at(o, l, i)] = e;
        z += e;
      }
      for (std::size_t l = 0; l < s.len; ++l) out[at(o, l, i)] /= z;
    }
  }
  const std::size_t ix = x.id();
  const std::size_t self = x.tape().size();
  return x.tape().push(
      std::move(out), {ix}, "softmax",
      [ix, self, s](Tape& t, std::span<const double> g) {
        auto dx = t.grad_target(ix);
        const Tensor& y = t.value(self);
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t i = 0; i < s.inner; ++i) {
            double gy = 0.0;
            for (std::size_t l = 0; l < s.len; ++l) {
              const std::size_t k = (o * s.len + l) * s.inner + i;
              gy += g[k] * y[k];
            }
            for (std::size_t l = 0; l < s.len; ++l) {
              const std::size_t k = (o * s.len + l) * s.inner + i;
              dx[k] += y[k] * (g[k] - gy);
            }
          }
        }
      });
}

Var concat(std::span<const Var> xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("concat of zero tensors");
  if (xs.size() == 1) return xs[0];
  const Shape& first = xs[0].shape();
  split_axis(first, axis, "concat");
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> lens;
  for (const Var& v : xs) {
    require_same_tape(xs[0], v);
    const Shape& sh = v.shape();
    if (sh.size() != first.size()) {
      throw DimensionError("concat rank mismatch: " + shape_str(first) + " vs " +
                           shape_str(sh));
    }
    for (std::size_t d = 0; d < sh.size(); ++d) {
      if (d != axis && sh[d] != first[d]) {
        throw DimensionError("concat shape mismatch off-axis: " + shape_str(first) +
                             " vs " + shape_str(sh));
      }
    }
    out_shape[axis] += sh[axis];
    ids.push_back(v.id());
    lens.push_back(sh[axis]);
  }
  const AxisSplit s = split_axis(out_shape, axis, "concat");
  Tensor out(out_shape);
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const std::size_t chunk = lens[k] * s.inner;
      const double* src = xs[k].value().data().data() + o * chunk;
      std::copy(src, src + chunk, out.data().data() + o * s.len * s.inner + offset);
      offset += chunk;
    }
  }
  return xs[0].tape().push(
      std::move(out), ids, "concat",
      [ids, lens, s](Tape& t, std::span<const double> g) {
        for (std::size_t o = 0; o < s.outer; ++o) {
          std::size_t offset = 0;
          for (std::size_t k = 0; k < ids.size(); ++k) {
            const std::size_t chunk = lens[k] * s.inner;
            if (auto dx = t.grad_target(ids[k]); !dx.empty()) {
              K().axpy(1.0, g.data() + o * s.len * s.inner + offset,
                       dx.data() + o * chunk, chunk);
            }
            offset += chunk;
          }
        }
      });
}

Var concat(std::initializer_list<Var> xs, std::size_t axis) {
  return concat(std::span<const Var>(xs.begin(), xs.size()), axis);
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const std::size_t ix = x.id();
  return x.tape().push(std::move(out), {ix}, "reshape",
                       [ix](Tape& t, std::span<const double> g) {
                         auto dx = t.grad_target(ix);
                         K().axpy(1.0, g.data(), dx.data(), g.size());
                       });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  const Tensor& X = x.value();
  require_matrix(X, "slice_cols");
  const std::size_t m = X.dim(0), n = X.dim(1);
  if (begin >= end || end > n) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of range for " +
                         shape_str(X.shape()));
  }
  const std::size_t w = end - begin;
  Tensor out(Shape{m, w});
  for (std::size_t i = 0; i < m; ++i) {
    const double* src = X.data().data() + i * n + begin;
    std::copy(src, src + w, out.data().data() + i * w);
  }
  const std::size_t ix = x.id();
  return x.tape().push(std::move(out), {ix}, "slice_cols",
                       [ix, m, n, w, begin](Tape& t, std::span<const double> g) {
                         auto dx = t.grad_target(ix);
                         for (std::size_t i = 0; i < m; ++i)
                           K().axpy(1.0, g.data() + i * w, dx.data() + i * n + begin, w);
                       });
}

Var gather_rows(Var x, std::span<const std::size_t> index) {
  const Tensor& X = x.value();
  require_matrix(X, "gather_rows");
  const std::size_t n = X.dim(0), c = X.dim(1);
  if (index.empty()) throw DimensionError("gather_rows with empty index");
  for (std::size_t r : index) {
    if (r >= n) throw DimensionError("gather_rows index out of range");
  }
  Tensor out(Shape{index.size(), c});
  for (std::size_t i = 0; i < index.size(); ++i) {
    const double* src = X.data().data() + index[i] * c;
    std::copy(src, src + c, out.data().data() + i * c);
  }
  const std::size_t ix = x.id();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return x.tape().push(std::move(out), {ix}, "gather_rows",
                       [ix, c, idx = std::move(idx)](Tape& t, std::span<const double> g) {
                         auto dx = t.grad_target(ix);
                         for (std::size_t i = 0; i < idx.size(); ++i)
                           K().axpy(1.0, g.data() + i * c, dx.data() + idx[i] * c, c);
                       });
}

Var scatter_add_rows(Var x, std::span<const std::size_t> index,
                     std::size_t rows) {
  const Tensor& X = x.value();
  require_matrix(X, "scatter_add_rows");
  const std::size_t e = X.dim(0), c = X.dim(1);
  if (index.size() != e) {
    throw DimensionError("scatter_add_rows: " + std::to_string(index.size()) +
                         " indices for " + std::to_string(e) + " rows");
  }
  Tensor out(Shape{rows, c});
  for (std::size_t i = 0; i < e; ++i) {
    if (index[i] >= rows) throw DimensionError("scatter_add_rows index out of range");
    K().axpy(1.0, X.data().data() + i * c, out.data().data() + index[i] * c, c);
  }
  const std::size_t ix = x.id();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return x.tape().push(std::move(out), {ix}, "scatter_add_rows",
                       [ix, c, idx = std::move(idx)](Tape& t, std::span<const double> g) {
                         auto dx = t.grad_target(ix);
                         for (std::size_t i = 0; i < idx.size(); ++i)
                           K().axpy(1.0, g.data() + idx[i] * c, dx.data() + i * c, c);
                       });
}

Var gathered_matvec(Var mats, std::span<const std::size_t> mat_index, Var vecs,
                    std::span<const std::size_t> vec_index, std::size_t d_out,
                    std::size_t d_in) {
  require_same_tape(mats, vecs);
  const Tensor& M = mats.value();
  const Tensor& V = vecs.value();
  require_matrix(M, "gathered_matvec");
  require_matrix(V, "gathered_matvec");
  if (M.dim(1) != d_out * d_in || V.dim(1) != d_in) {
    throw DimensionError("gathered_matvec: matrices " + shape_str(M.shape()) +
                         " and vectors " + shape_str(V.shape()) +
                         " do not match " + std::to_string(d_out) + "x" +
                         std::to_string(d_in));
  }
  if (mat_index.size() != vec_index.size() || mat_index.empty()) {
    throw DimensionError("gathered_matvec: index lists disagree or are empty");
  }
  const std::size_t e = mat_index.size();
  const std::size_t stride = d_out * d_in;
  for (std::size_t i = 0; i < e; ++i) {
    if (mat_index[i] >= M.dim(0)) throw ContractError("matrix index out of range");
    if (vec_index[i] >= V.dim(0)) throw DimensionError("vector index out of range");
  }
  Tensor out(Shape{e, d_out});
  const double* Mv = M.data().data();
  const double* Vv = V.data().data();
  for (std::size_t i = 0; i < e; ++i) {
    K().gemm_nt_acc(1, d_out, d_in, Vv + vec_index[i] * d_in, d_in,
                    Mv + mat_index[i] * stride, d_in, out.data().data() + i * d_out,
                    d_out);
  }
  simd::add_multiplies(e * d_out * d_in);
  const std::size_t im = mats.id(), iv = vecs.id();
  std::vector<std::size_t> mi(mat_index.begin(), mat_index.end());
  std::vector<std::size_t> vi(vec_index.begin(), vec_index.end());
  return mats.tape().push(
      std::move(out), {im, iv}, "gathered_matvec",
      [im, iv, d_out, d_in, stride, mi = std::move(mi), vi = std::move(vi)](
          Tape& t, std::span<const double> g) {
        auto dm = t.grad_target(im);
        auto dv = t.grad_target(iv);
        const double* Mv = t.value(im).data().data();
        const double* Vv = t.value(iv).data().data();
        for (std::size_t i = 0; i < mi.size(); ++i) {
          const double* gi = g.data() + i * d_out;
          if (!dm.empty()) {
            // dM += g_i^T v_i
            K().gemm_acc(d_out, d_in, 1, gi, 1, 1, Vv + vi[i] * d_in, d_in,
                         dm.data() + mi[i] * stride, d_in);
          }
          if (!dv.empty()) {
            // dv += g_i M
            K().gemm_acc(1, d_in, d_out, gi, 0, 1, Mv + mi[i] * stride, d_in,
                         dv.data() + vi[i] * d_in, d_in);
          }
        }
      });
}

}  // namespace mpnn
