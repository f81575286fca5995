#pragma once

// Named parameter storage plus the small layers every model variant is
// built from: affine maps, one-hidden-layer MLPs and the GRU cell.

#include <cstddef>
#include <map>
#include <string>
#include <unordered_map>

#include "mpnn/random.hpp"
#include "mpnn/tensor.hpp"

namespace mpnn {

/// Flat name -> tensor map. Iteration order is lexicographic by name, which
/// fixes the order of checkpoints and optimizer updates.
class ParamStore {
 public:
  /// Inserts a trainable tensor; the name must be new.
  Tensor& add(const std::string& name, Tensor value);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  std::size_t size() const { return tensors_.size(); }
  std::size_t total_values() const;

  void zero_grad();

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  friend bool operator==(const ParamStore& a, const ParamStore& b);

 private:
  std::map<std::string, Tensor> tensors_;
};

/// Binds parameters onto one tape, once per name.
class Binder {
 public:
  Binder(Tape& tape, ParamStore& params) : tape_(tape), params_(params) {}

  Var operator()(const std::string& name);
  Tape& tape() { return tape_; }
  ParamStore& params() { return params_; }

 private:
  Tape& tape_;
  ParamStore& params_;
  std::unordered_map<std::string, Var> bound_;
};

/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng);

// Affine layer `prefix.w` [in x out], `prefix.b` [out]; x is [rows x in].
void add_linear(ParamStore& params, const std::string& prefix, std::size_t in,
                std::size_t out, Rng& rng, bool bias = true);
Var linear(Binder& bind, const std::string& prefix, Var x, bool bias = true);

// One hidden layer: `prefix.l1` (in -> hidden, activation) then `prefix.l2`
// (hidden -> out, linear).
void add_mlp(ParamStore& params, const std::string& prefix, std::size_t in,
             std::size_t hidden, std::size_t out, Rng& rng);
Var mlp(Binder& bind, const std::string& prefix, Var x,
        Pointwise activation = Pointwise::kRelu);

/// GRU weights, row-vector convention: gates are x * W + h * U.
struct GruParams {
  Var w_z, u_z, w_r, u_r, w_h, u_h;
};

void add_gru(ParamStore& params, const std::string& prefix, std::size_t d_in,
             std::size_t d, Rng& rng);
GruParams bind_gru(Binder& bind, const std::string& prefix);

/// Batched over rows: x [n x d_in], h [n x d] -> h' [n x d].
///   z  = sigmoid(x W_z + h U_z)
///   r  = sigmoid(x W_r + h U_r)
///   h~ = tanh(x W + (r * h) U)
///   h' = (1 - z) * h + z * h~
Var gru_cell(Var x, Var h, const GruParams& p);

}  // namespace mpnn
