#pragma once

// Dense float64 tensors and a define-by-run reverse-mode tape.
//
// `Tensor` is a plain value: shape, row-major data, and an optional gradient
// buffer. Computation happens on a `Tape`, which records each op together
// with its backward rule. External tensors (model parameters, inputs under a
// gradient check) are bound to the tape by reference; after
// `Tape::backward` their `grad()` holds d(loss)/d(tensor), accumulated.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mpnn {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled tensor.
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor full(Shape shape, double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  /// Size along `axis`.
  std::size_t dim(std::size_t axis) const;
  /// Matrix view: rank-2 gives (rows, cols); rank-1 [n] is a 1 x n row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  /// Value of a single-element tensor.
  double item() const;

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool on = true);
  bool has_grad() const { return grad_.has_value(); }
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  /// Allocates a zero gradient buffer if absent, else zeroes it.
  void zero_grad();
  void clear_grad() { grad_.reset(); }

  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
  std::optional<std::vector<double>> grad_;
};

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; invalid once the
/// tape is cleared.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the op's output gradient; must accumulate into the gradients
  /// of those inputs for which `Tape::grad_target` is non-empty.
  using BackwardFn = std::function<void(Tape&, std::span<const double> grad_out)>;

  /// With `record = false` the tape evaluates eagerly and keeps no backward
  /// rules (inference mode).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Copies `value` onto the tape; never receives gradients.
  Var constant(Tensor value);
  /// Binds a tensor by reference without copying. If it requires grad,
  /// backward accumulates into `tensor.grad()`. The tensor must outlive
  /// the tape's current recording.
  Var bind(Tensor& tensor);
  /// Read-only binding; never receives gradients.
  Var bind(const Tensor& tensor);

  /// Populates gradients of every bound requires-grad tensor reachable from
  /// `loss` (which must hold exactly one element), then clears the tape.
  void backward(Var loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return record_; }

  // Op-implementation interface.
  Var push(Tensor value, std::vector<std::size_t> inputs, const char* op,
           BackwardFn backward);
  const Tensor& value(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  /// Gradient accumulator for node `id`, or an empty span if that node
  /// does not participate in differentiation.
  std::span<double> grad_target(std::size_t id);

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor* sink = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::vector<double> grad;
    bool needs_grad = false;
  };

  bool record_;
  std::vector<Node> nodes_;
};

// ---- Ops ----------------------------------------------------------------
// Forward ops check their inputs' shapes (DimensionError) and their output
// for NaN/Inf (DivergenceError).

/// [m x k] * [k x n] -> [m x n].
Var matmul(Var a, Var b);
Var transpose(Var a);

enum class Pointwise { kIdentity, kSigmoid, kTanh, kRelu, kSoftplus };
const char* pointwise_name(Pointwise op);
Var pointwise(Pointwise op, Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var relu(Var x);
/// log(1 + e^x), computed without overflow.
Var softplus(Var x);

/// Elementwise binary ops. Operands must have identical shapes, or one of
/// them must hold a single element (scalar broadcast).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
/// x * c for a constant c.
Var scale(Var x, double c);
/// 1 - x.
Var one_minus(Var x);
/// Adds bias b[n] to every row of x[m x n].
Var add_bias(Var x, Var b);

/// Sums out `axis`; the result drops that axis.
Var reduce_sum(Var x, std::size_t axis);
/// Sum of all elements, shape {}.
Var sum(Var x);
Var mean(Var x);
Var softmax(Var x, std::size_t axis);
Var concat(std::span<const Var> xs, std::size_t axis);
Var concat(std::initializer_list<Var> xs, std::size_t axis);
Var reshape(Var x, Shape shape);
/// Columns [begin, end) of a matrix.
Var slice_cols(Var x, std::size_t begin, std::size_t end);

/// out[i] = x[index[i]] row-wise.
Var gather_rows(Var x, std::span<const std::size_t> index);
/// out[index[i]] += x[i] row-wise, out has `rows` rows.
Var scatter_add_rows(Var x, std::span<const std::size_t> index,
                     std::size_t rows);

/// Batched matrix-vector product with indirection. `mats` is [R x (d_out *
/// d_in)], each row a row-major d_out x d_in matrix; `vecs` is [N x d_in].
/// Row e of the [E x d_out] result is mats[mat_index[e]] * vecs[vec_index[e]].
Var gathered_matvec(Var mats, std::span<const std::size_t> mat_index, Var vecs,
                    std::span<const std::size_t> vec_index, std::size_t d_out,
                    std::size_t d_in);

}  // namespace mpnn
