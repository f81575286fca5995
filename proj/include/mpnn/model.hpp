#pragma once

// Message passing phase (messages, aggregation, GRU update, towers, master
// node) and the graph-level readouts.
//
// Node states are rows of an [n x d] matrix. Every undirected edge is
// treated as two directed edges with the same features. Messages run on two
// channels with separate weights: for a directed edge s -> t, t receives the
// in-channel message computed from s, and s receives the out-channel message
// computed from t. The aggregated message of node v is
// concat(sum of in-channel messages, sum of out-channel messages), width 2d.
//
// Parameter names (tower t, channel c in {in, out}):
//   tower<t>.msg_<c>.bank                      matmul       [alphabet x dk*dk]
//   tower<t>.msg_<c>.l1/.l2                    edge network 5 -> H -> dk*dk
//   tower<t>.msg_<c>.l1/.l2                    pair         2dk+e -> 2dk -> dk
//   tower<t>.msg_<c>.cf/.df/.fc                dtnn
//   tower<t>.gru.*                             shared across all steps
//   mix.w, mix.b                               towers > 1
//   master.h0, master.{to,from}_node_{in,out}.w, master.gru.*
//   readout.*

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mpnn/molgraph.hpp"
#include "mpnn/nn.hpp"
#include "mpnn/tensor.hpp"

namespace mpnn {

enum class MessageFn { kMatmul, kEdgeNetwork, kPair, kDtnn };
enum class UpdateFn { kGru, kResidual };
enum class ReadoutFn { kGgnn, kSet2Set, kDtnnSum };

std::string_view message_fn_name(MessageFn m);
MessageFn parse_message_fn(std::string_view name);
std::string_view update_fn_name(UpdateFn u);
UpdateFn parse_update_fn(std::string_view name);
std::string_view readout_fn_name(ReadoutFn r);
ReadoutFn parse_readout_fn(std::string_view name);
/// Hidden MLP activation: "softplus" or "relu".
Pointwise parse_activation(std::string_view name);

struct ModelConfig {
  MessageFn message = MessageFn::kEdgeNetwork;
  UpdateFn update = UpdateFn::kGru;
  ReadoutFn readout = ReadoutFn::kSet2Set;
  std::size_t steps = 3;  // T
  std::size_t node_dim = 32;  // d
  std::size_t towers = 1;  // k
  std::size_t master_dim = 0;  // 0 disables the master node
  bool master_in_readout = true;
  std::size_t set2set_steps = 6;  // M
  std::size_t set2set_dim = 0;  // 0 means d
  std::size_t edge_hidden = 0;  // edge network hidden width, 0 means d / k
  EdgeRepr edge_repr = EdgeRepr::kRawDistance;
  bool explicit_hydrogens = false;
  bool virtual_edges = false;
  bool include_charge = false;
  std::size_t output_dim = 1;
  /// Hidden activation of every MLP (edge network, pair message, readouts).
  Pointwise activation = Pointwise::kSoftplus;

  std::size_t tower_dim() const { return node_dim / towers; }
  std::size_t feature_width() const { return atom_feature_width(include_charge); }
  std::size_t edge_width() const;
  std::size_t alphabet_size() const;
  std::size_t query_dim() const { return set2set_dim ? set2set_dim : node_dim; }

  /// Throws ConfigError for inconsistent settings.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// enn-s2s: edge network messages, raw distance edges, set2set readout.
ModelConfig enn_s2s_config(std::size_t node_dim = 32, std::size_t steps = 3);

struct PropagateResult {
  Var h;  // [n x d] after T steps
  std::optional<Var> master;  // [1 x d_master]
  std::uint64_t message_multiplies = 0;
};

/// Attention weights of each set2set step, for inspection.
struct Set2SetTrace {
  std::vector<std::vector<double>> attention;
};

// ---- message functions (batched over directed edges) --------------------
// `senders[e]` is the node whose state is transformed, `receivers[e]` the
// node the message is delivered to, `pairs[e]` the undirected pair that
// supplies the edge features.

/// A_label * h_w with `bank` [alphabet x d*d].
Var message_matmul(Var bank, Var h, std::span<const std::size_t> senders,
                   std::span<const std::size_t> labels, std::size_t d);
/// The per-pair d x d matrices A(e) of an edge network, [P x d*d].
Var edge_network_matrices(Binder& bind, const std::string& prefix, Var edge_vectors,
                          Pointwise activation = Pointwise::kSoftplus);
/// A(e_vw) * h_w given matrices from `edge_network_matrices`.
Var message_edge_network(Var matrices, Var h, std::span<const std::size_t> senders,
                         std::span<const std::size_t> pairs, std::size_t d);
/// f(h_w, h_v, e_vw) with f an MLP over the concatenation.
Var message_pair(Binder& bind, const std::string& prefix, Var h, Var edge_vectors,
                 std::span<const std::size_t> senders,
                 std::span<const std::size_t> receivers,
                 std::span<const std::size_t> pairs,
                 Pointwise activation = Pointwise::kSoftplus);
/// tanh(W_fc ((W_cf h_w + b1) * (W_df e_vw + b2))).
Var message_dtnn(Binder& bind, const std::string& prefix, Var h, Var edge_vectors,
                 std::span<const std::size_t> senders, std::span<const std::size_t> pairs);

/// Sums each channel's messages per receiver and concatenates the channels:
/// [n x 2d]. Either message set may be absent (graph without edges).
Var aggregate(Tape& tape, std::optional<Var> in_messages,
              std::span<const std::size_t> in_receivers,
              std::optional<Var> out_messages,
              std::span<const std::size_t> out_receivers, std::size_t n, std::size_t d);

// ---- readouts ------------------------------------------------------------

/// sum_v sigmoid(i(h_v^T, h_v^0)) * j(h_v^T); i, j one-hidden-layer MLPs.
Var readout_ggnn(Binder& bind, Var h_final, Var h_initial,
                 Pointwise activation = Pointwise::kSoftplus);
/// Projects each (h_v^T, x_v) tuple, runs M attention steps and feeds q*
/// through an output MLP. `extra` rows (already projected) join the set.
Var readout_set2set(Binder& bind, Var h_final, Var features, std::size_t steps,
                    std::optional<Var> extra = std::nullopt,
                    Set2SetTrace* trace = nullptr,
                    Pointwise activation = Pointwise::kSoftplus);
/// Set2set core on an already projected memory [n x D]: returns q* [1 x 2D].
Var set2set_embedding(Binder& bind, const std::string& cell_prefix, Var memory,
                      std::size_t steps, Set2SetTrace* trace = nullptr);
/// sum_v NN(h_v^T) with NN one hidden layer.
Var readout_dtnn_sum(Binder& bind, Var h_final,
                     Pointwise activation = Pointwise::kSoftplus);

class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  ParamStore init_params(std::uint64_t seed) const;

  /// Virtual edges, encoding and master node as configured.
  EncodedGraph prepare(const MolecularGraph& g) const;

  /// Padded input features h^0 [n x d].
  Tensor initial_states(const EncodedGraph& g) const;

  /// T steps of message passing. Dispatches to the tower path when k > 1.
  PropagateResult propagate(Binder& bind, const EncodedGraph& g, Var h0) const;
  /// Tower path: k slices of width d/k with separate weights, mixed by a
  /// shared affine network after every step. With k = 1 the mixing is
  /// skipped and the result equals `propagate`.
  PropagateResult towers_propagate(Binder& bind, const EncodedGraph& g, Var h0) const;

  Var readout(Binder& bind, const EncodedGraph& g, const PropagateResult& prop, Var h0,
              Var features, Set2SetTrace* trace = nullptr) const;

  /// Full model: graph -> [output_dim] prediction (normalized target space).
  Var forward(Tape& tape, ParamStore& params, const EncodedGraph& g,
              Set2SetTrace* trace = nullptr) const;

  /// Convenience: forward pass without recording, returns the values.
  std::vector<double> predict(ParamStore& params, const EncodedGraph& g) const;

 private:
  void check_graph(const EncodedGraph& g) const;

  ModelConfig config_;
};

}  // namespace mpnn
