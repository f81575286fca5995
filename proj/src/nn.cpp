#include "mpnn/nn.hpp"

#include <cmath>

#include "mpnn/errors.hpp"

namespace mpnn {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  auto [it, inserted] = tensors_.emplace(name, std::move(value));
  if (!inserted) throw ContractError("duplicate parameter '" + name + "'");
  it->second.set_requires_grad(true);
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ContractError("missing parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ContractError("missing parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : tensors_) t.zero_grad();
}

bool operator==(const ParamStore& a, const ParamStore& b) {
  if (a.tensors_.size() != b.tensors_.size()) return false;
  for (auto ia = a.tensors_.begin(), ib = b.tensors_.begin();
       ia != a.tensors_.end(); ++ia, ++ib) {
    if (ia->first != ib->first) return false;
    if (ia->second.shape() != ib->second.shape()) return false;
    if (ia->second.values() != ib->second.values()) return false;
  }
  return true;
}

Var Binder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = tape_.bind(params_.at(name));
  bound_.emplace(name, v);
  return v;
}

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

void add_linear(ParamStore& params, const std::string& prefix, std::size_t in,
                std::size_t out, Rng& rng, bool bias) {
  params.add(prefix + ".w", init_uniform({in, out}, in, rng));
  if (bias) params.add(prefix + ".b", Tensor(Shape{out}));
}

Var linear(Binder& bind, const std::string& prefix, Var x, bool bias) {
  Var y = matmul(x, bind(prefix + ".w"));
  return bias ? add_bias(y, bind(prefix + ".b")) : y;
}

void add_mlp(ParamStore& params, const std::string& prefix, std::size_t in,
             std::size_t hidden, std::size_t out, Rng& rng) {
  add_linear(params, prefix + ".l1", in, hidden, rng);
  add_linear(params, prefix + ".l2", hidden, out, rng);
}

Var mlp(Binder& bind, const std::string& prefix, Var x, Pointwise activation) {
  Var hidden = pointwise(activation, linear(bind, prefix + ".l1", x));
  return linear(bind, prefix + ".l2", hidden);
}

void add_gru(ParamStore& params, const std::string& prefix, std::size_t d_in,
             std::size_t d, Rng& rng) {
  for (const char* gate : {"z", "r", "h"}) {
    params.add(prefix + ".w_" + gate, init_uniform({d_in, d}, d_in, rng));
    params.add(prefix + ".u_" + gate, init_uniform({d, d}, d, rng));
  }
}

GruParams bind_gru(Binder& bind, const std::string& prefix) {
  return GruParams{bind(prefix + ".w_z"), bind(prefix + ".u_z"),
                   bind(prefix + ".w_r"), bind(prefix + ".u_r"),
                   bind(prefix + ".w_h"), bind(prefix + ".u_h")};
}

Var gru_cell(Var x, Var h, const GruParams& p) {
  const std::size_t d_in = x.value().cols();
  const std::size_t d = h.value().cols();
  if (x.value().rank() != 2 || h.value().rank() != 2 || x.rows() != h.rows()) {
    throw DimensionError("gru_cell: x " + shape_str(x.shape()) + " and h " +
                         shape_str(h.shape()) + " must be matrices with equal rows");
  }
  for (Var w : {p.w_z, p.w_r, p.w_h}) {
    if (w.shape() != Shape{d_in, d}) {
      throw DimensionError("gru_cell: input weight " + shape_str(w.shape()) +
                           " expected " + shape_str({d_in, d}));
    }
  }
  for (Var u : {p.u_z, p.u_r, p.u_h}) {
    if (u.shape() != Shape{d, d}) {
      throw DimensionError("gru_cell: recurrent weight " + shape_str(u.shape()) +
                           " expected " + shape_str({d, d}));
    }
  }
  Var z = sigmoid(matmul(x, p.w_z) + matmul(h, p.u_z));
  Var r = sigmoid(matmul(x, p.w_r) + matmul(h, p.u_r));
  Var candidate = tanh(matmul(x, p.w_h) + matmul(r * h, p.u_h));
  return one_minus(z) * h + z * candidate;
}

}  // namespace mpnn
