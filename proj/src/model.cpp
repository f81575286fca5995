#include "mpnn/model.hpp"

#include <algorithm>

#include "mpnn/errors.hpp"
#include "mpnn/simd/kernels.hpp"

namespace mpnn {

std::string_view message_fn_name(MessageFn m) {
  static constexpr std::string_view kNames[] = {"matmul", "edgenet", "pair", "dtnn"};
  return kNames[static_cast<int>(m)];
}

MessageFn parse_message_fn(std::string_view name) {
  for (MessageFn m : {MessageFn::kMatmul, MessageFn::kEdgeNetwork, MessageFn::kPair,
                      MessageFn::kDtnn}) {
    if (message_fn_name(m) == name) return m;
  }
  throw ConfigError("unknown message function '" + std::string(name) + "'");
}

std::string_view update_fn_name(UpdateFn u) {
  return u == UpdateFn::kGru ? "gru" : "residual";
}

UpdateFn parse_update_fn(std::string_view name) {
  if (name == "gru") return UpdateFn::kGru;
  if (name == "residual") return UpdateFn::kResidual;
  throw ConfigError("unknown update function '" + std::string(name) + "'");
}

std::string_view readout_fn_name(ReadoutFn r) {
  static constexpr std::string_view kNames[] = {"ggnn", "set2set", "dtnnsum"};
  return kNames[static_cast<int>(r)];
}

ReadoutFn parse_readout_fn(std::string_view name) {
  for (ReadoutFn r : {ReadoutFn::kGgnn, ReadoutFn::kSet2Set, ReadoutFn::kDtnnSum}) {
    if (readout_fn_name(r) == name) return r;
  }
  throw ConfigError("unknown readout '" + std::string(name) + "'");
}

Pointwise parse_activation(std::string_view name) {
  if (name == "softplus") return Pointwise::kSoftplus;
  if (name == "relu") return Pointwise::kRelu;
  throw ConfigError("unknown activation '" + std::string(name) + "' (softplus or relu)");
}

// ---- ModelConfig ------------------------------------------------------------

std::size_t ModelConfig::edge_width() const {
  switch (edge_repr) {
    case EdgeRepr::kChemical:
      return kChemicalAlphabet;
    case EdgeRepr::kDistanceBins:
      return kBinsAlphabet;
    case EdgeRepr::kRawDistance:
      return kRawEdgeWidth;
  }
  return 0;
}

std::size_t ModelConfig::alphabet_size() const {
  return edge_repr == EdgeRepr::kDistanceBins ? kBinsAlphabet : kChemicalAlphabet;
}

void ModelConfig::validate() const {
  if (node_dim == 0) throw ConfigError("node dimension must be positive");
  if (towers == 0 || node_dim % towers != 0) {
    throw ConfigError("towers k=" + std::to_string(towers) + " must divide d=" +
                      std::to_string(node_dim));
  }
  if (node_dim < feature_width()) {
    throw ConfigError("node dimension " + std::to_string(node_dim) +
                      " is smaller than the atom feature width " +
                      std::to_string(feature_width()));
  }
  if (message == MessageFn::kMatmul && edge_repr == EdgeRepr::kRawDistance) {
    throw ConfigError("matmul messages need discrete edge labels (chemical or bins)");
  }
  if (readout == ReadoutFn::kSet2Set && set2set_steps < 1) {
    throw ConfigError("set2set needs M >= 1");
  }
  if (master_dim > 0 && towers > 1) {
    throw ConfigError("the master node is only supported with a single tower");
  }
  if (output_dim == 0) throw ConfigError("output dimension must be positive");
  if (activation != Pointwise::kSoftplus && activation != Pointwise::kRelu) {
    throw ConfigError("hidden activation must be softplus or relu");
  }
}

nlohmann::json to_json(const ModelConfig& c) {
  return {
      {"message", message_fn_name(c.message)},
      {"update", update_fn_name(c.update)},
      {"readout", readout_fn_name(c.readout)},
      {"steps", c.steps},
      {"node_dim", c.node_dim},
      {"towers", c.towers},
      {"master_dim", c.master_dim},
      {"master_in_readout", c.master_in_readout},
      {"set2set_steps", c.set2set_steps},
      {"set2set_dim", c.set2set_dim},
      {"edge_hidden", c.edge_hidden},
      {"edge_repr", edge_repr_name(c.edge_repr)},
      {"explicit_hydrogens", c.explicit_hydrogens},
      {"virtual_edges", c.virtual_edges},
      {"include_charge", c.include_charge},
      {"output_dim", c.output_dim},
      {"activation", pointwise_name(c.activation)},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.message = parse_message_fn(j.at("message").get<std::string>());
    c.update = parse_update_fn(j.at("update").get<std::string>());
    c.readout = parse_readout_fn(j.at("readout").get<std::string>());
    c.steps = j.at("steps").get<std::size_t>();
    c.node_dim = j.at("node_dim").get<std::size_t>();
    c.towers = j.at("towers").get<std::size_t>();
    c.master_dim = j.at("master_dim").get<std::size_t>();
    c.master_in_readout = j.at("master_in_readout").get<bool>();
    c.set2set_steps = j.at("set2set_steps").get<std::size_t>();
    c.set2set_dim = j.at("set2set_dim").get<std::size_t>();
    c.edge_hidden = j.at("edge_hidden").get<std::size_t>();
    c.edge_repr = parse_edge_repr(j.at("edge_repr").get<std::string>());
    c.explicit_hydrogens = j.at("explicit_hydrogens").get<bool>();
    c.virtual_edges = j.at("virtual_edges").get<bool>();
    c.include_charge = j.at("include_charge").get<bool>();
    c.output_dim = j.at("output_dim").get<std::size_t>();
    c.activation = parse_activation(j.at("activation").get<std::string>());
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

ModelConfig enn_s2s_config(std::size_t node_dim, std::size_t steps) {
  ModelConfig c;
  c.message = MessageFn::kEdgeNetwork;
  c.readout = ReadoutFn::kSet2Set;
  c.edge_repr = EdgeRepr::kRawDistance;
  c.node_dim = node_dim;
  c.steps = steps;
  return c;
}

// ---- message functions ------------------------------------------------------

Var message_matmul(Var bank, Var h, std::span<const std::size_t> senders,
                   std::span<const std::size_t> labels, std::size_t d) {
  for (std::size_t label : labels) {
    if (label >= bank.value().dim(0)) {
      throw ContractError("edge label " + std::to_string(label) +
                          " outside alphabet of size " +
                          std::to_string(bank.value().dim(0)));
    }
  }
  return gathered_matvec(bank, labels, h, senders, d, d);
}

Var edge_network_matrices(Binder& bind, const std::string& prefix, Var edge_vectors,
                          Pointwise activation) {
  return mlp(bind, prefix, edge_vectors, activation);
}

Var message_edge_network(Var matrices, Var h, std::span<const std::size_t> senders,
                         std::span<const std::size_t> pairs, std::size_t d) {
  return gathered_matvec(matrices, pairs, h, senders, d, d);
}

Var message_pair(Binder& bind, const std::string& prefix, Var h, Var edge_vectors,
                 std::span<const std::size_t> senders,
                 std::span<const std::size_t> receivers,
                 std::span<const std::size_t> pairs, Pointwise activation) {
  Var input = concat({gather_rows(h, senders), gather_rows(h, receivers),
                      gather_rows(edge_vectors, pairs)},
                     1);
  return mlp(bind, prefix, input, activation);
}

Var message_dtnn(Binder& bind, const std::string& prefix, Var h, Var edge_vectors,
                 std::span<const std::size_t> senders, std::span<const std::size_t> pairs) {
  // Both projections are computed once per node / per pair, then gathered.
  Var node_part = linear(bind, prefix + ".cf", h);
  Var edge_part = linear(bind, prefix + ".df", edge_vectors);
  Var product = gather_rows(node_part, senders) * gather_rows(edge_part, pairs);
  return tanh(linear(bind, prefix + ".fc", product, /*bias=*/false));
}

Var aggregate(Tape& tape, std::optional<Var> in_messages,
              std::span<const std::size_t> in_receivers,
              std::optional<Var> out_messages,
              std::span<const std::size_t> out_receivers, std::size_t n, std::size_t d) {
  auto channel = [&](std::optional<Var> msgs, std::span<const std::size_t> recv) {
    if (!msgs) return tape.constant(Tensor(Shape{n, d}));
    return scatter_add_rows(*msgs, recv, n);
  };
  return concat({channel(in_messages, in_receivers), channel(out_messages, out_receivers)}, 1);
}

// ---- readouts ---------------------------------------------------------------

Var readout_ggnn(Binder& bind, Var h_final, Var h_initial, Pointwise activation) {
  Var gate = sigmoid(mlp(bind, "readout.i", concat({h_final, h_initial}, 1), activation));
  Var value = mlp(bind, "readout.j", h_final, activation);
  return reduce_sum(gate * value, 0);
}

Var set2set_embedding(Binder& bind, const std::string& cell_prefix, Var memory,
                      std::size_t steps, Set2SetTrace* trace) {
  if (steps < 1) throw ConfigError("set2set needs M >= 1");
  Tape& tape = bind.tape();
  const std::size_t dq = memory.cols();
  const GruParams cell = bind_gru(bind, cell_prefix);
  Var q = tape.constant(Tensor(Shape{1, dq}));
  Var q_star = tape.constant(Tensor(Shape{1, 2 * dq}));
  for (std::size_t m = 0; m < steps; ++m) {
    q = gru_cell(q_star, q, cell);
    Var scores = matmul(memory, transpose(q));  // [n x 1]
    Var attention = softmax(scores, 0);
    if (trace) trace->attention.push_back(attention.value().values());
    Var glimpse = matmul(transpose(attention), memory);  // [1 x dq]
    q_star = concat({q, glimpse}, 1);
  }
  return q_star;
}

Var readout_set2set(Binder& bind, Var h_final, Var features, std::size_t steps,
                    std::optional<Var> extra, Set2SetTrace* trace, Pointwise activation) {
  Var memory = linear(bind, "readout.proj", concat({h_final, features}, 1));
  if (extra) memory = concat({memory, *extra}, 0);
  Var q_star = set2set_embedding(bind, "readout.cell", memory, steps, trace);
  Var out = mlp(bind, "readout.out", q_star, activation);
  return reshape(out, {out.cols()});
}

Var readout_dtnn_sum(Binder& bind, Var h_final, Pointwise activation) {
  return reduce_sum(mlp(bind, "readout.nn", h_final, activation), 0);
}

// ---- Model ------------------------------------------------------------------

Model::Model(ModelConfig config) : config_(std::move(config)) { config_.validate(); }

namespace {

std::string tower_prefix(std::size_t t) { return "tower" + std::to_string(t) + "."; }

constexpr const char* kChannels[] = {"msg_in", "msg_out"};

}  // namespace

ParamStore Model::init_params(std::uint64_t seed) const {
  const ModelConfig& c = config_;
  Rng rng(seed);
  ParamStore p;
  const std::size_t d = c.node_dim;
  const std::size_t dk = c.tower_dim();
  const std::size_t ew = c.edge_width();
  const std::size_t out = c.output_dim;

  for (std::size_t t = 0; t < c.towers; ++t) {
    const std::string tp = tower_prefix(t);
    for (const char* ch : kChannels) {
      const std::string mp = tp + ch;
      switch (c.message) {
        case MessageFn::kMatmul:
          p.add(mp + ".bank", init_uniform({c.alphabet_size(), dk * dk}, dk, rng));
          break;
        case MessageFn::kEdgeNetwork:
          add_mlp(p, mp, ew, c.edge_hidden ? c.edge_hidden : dk, dk * dk, rng);
          break;
        case MessageFn::kPair:
          add_mlp(p, mp, 2 * dk + ew, 2 * dk, dk, rng);
          break;
        case MessageFn::kDtnn:
          add_linear(p, mp + ".cf", dk, dk, rng);
          add_linear(p, mp + ".df", ew, dk, rng);
          add_linear(p, mp + ".fc", dk, dk, rng, /*bias=*/false);
          break;
      }
    }
    if (c.update == UpdateFn::kGru) add_gru(p, tp + "gru", 2 * dk, dk, rng);
  }
  if (c.towers > 1) add_linear(p, "mix", d, d, rng);

  const std::size_t dm = c.master_dim;
  if (dm > 0) {
    p.add("master.h0", init_uniform({dm}, dm, rng));
    add_linear(p, "master.to_node_in", dm, d, rng, false);
    add_linear(p, "master.to_node_out", dm, d, rng, false);
    add_linear(p, "master.from_node_in", d, dm, rng, false);
    add_linear(p, "master.from_node_out", d, dm, rng, false);
    if (c.update == UpdateFn::kGru) add_gru(p, "master.gru", 2 * dm, dm, rng);
  }

  switch (c.readout) {
    case ReadoutFn::kGgnn:
      add_mlp(p, "readout.i", 2 * d, d, out, rng);
      add_mlp(p, "readout.j", d, d, out, rng);
      break;
    case ReadoutFn::kSet2Set: {
      const std::size_t dq = c.query_dim();
      add_linear(p, "readout.proj", d + c.feature_width(), dq, rng);
      if (dm > 0 && c.master_in_readout) add_linear(p, "readout.master_proj", dm, dq, rng);
      add_gru(p, "readout.cell", 2 * dq, dq, rng);
      add_mlp(p, "readout.out", 2 * dq, d, out, rng);
      break;
    }
    case ReadoutFn::kDtnnSum:
      add_mlp(p, "readout.nn", d, d, out, rng);
      break;
  }
  return p;
}

EncodedGraph Model::prepare(const MolecularGraph& g) const {
  if (g.explicit_hydrogens != config_.explicit_hydrogens) {
    throw ContractError(g.id + ": hydrogen mode of the data does not match the model");
  }
  const MolecularGraph& base = g;
  EncodedGraph e = config_.virtual_edges
                       ? encode(add_virtual_edges(base), config_.edge_repr, config_.include_charge)
                       : encode(base, config_.edge_repr, config_.include_charge);
  return add_master_node(e, config_.master_dim);
}

void Model::check_graph(const EncodedGraph& g) const {
  if (g.repr != config_.edge_repr) {
    throw ContractError("graph encoded as '" + std::string(edge_repr_name(g.repr)) +
                        "' but the model expects '" +
                        std::string(edge_repr_name(config_.edge_repr)) + "'");
  }
  if (g.feature_width != config_.feature_width()) {
    throw ContractError("atom feature width does not match the model");
  }
  if (g.has_master != (config_.master_dim > 0) ||
      (g.has_master && g.master_dim != config_.master_dim)) {
    throw ContractError("master node of the graph does not match the model");
  }
}

Tensor Model::initial_states(const EncodedGraph& g) const {
  const std::size_t d = config_.node_dim;
  Tensor h0(Shape{g.num_atoms, d});
  for (std::size_t v = 0; v < g.num_atoms; ++v) {
    std::copy_n(g.node_features.begin() + static_cast<std::ptrdiff_t>(v * g.feature_width),
                g.feature_width, h0.data().begin() + static_cast<std::ptrdiff_t>(v * d));
  }
  return h0;
}

PropagateResult Model::propagate(Binder& bind, const EncodedGraph& g, Var h0) const {
  return towers_propagate(bind, g, h0);
}

PropagateResult Model::towers_propagate(Binder& bind, const EncodedGraph& g, Var h0) const {
  check_graph(g);
  const ModelConfig& c = config_;
  Tape& tape = bind.tape();
  const std::size_t n = g.num_atoms;
  const std::size_t d = c.node_dim;
  const std::size_t k = c.towers;
  const std::size_t dk = c.tower_dim();
  if (h0.shape() != Shape{n, d}) {
    throw DimensionError("initial states " + shape_str(h0.shape()) + " expected " +
                         shape_str({n, d}));
  }

  // Channel index lists. In: sender = src, receiver = dst. Out: reversed.
  const auto directed = to_directed(g);
  std::vector<std::size_t> src, dst, pair, label;
  for (const DirectedEdge& e : directed) {
    src.push_back(e.src);
    dst.push_back(e.dst);
    pair.push_back(e.pair);
    label.push_back(g.labels[e.pair]);
  }
  const bool has_edges = !directed.empty();
  Var edge_vectors;
  if (has_edges) {
    edge_vectors =
        tape.constant(Tensor(Shape{g.num_pairs(), g.edge_width}, g.edge_vectors));
  }

  PropagateResult result;
  auto counted = [&](auto&& fn) {
    const std::uint64_t before = simd::multiply_count();
    auto value = fn();
    result.message_multiplies += simd::multiply_count() - before;
    return value;
  };

  // Edge-network matrices depend only on edge features and tied weights.
  std::vector<std::array<Var, 2>> edge_mats(k);
  if (c.message == MessageFn::kEdgeNetwork && has_edges) {
    for (std::size_t t = 0; t < k; ++t) {
      for (int ch = 0; ch < 2; ++ch) {
        edge_mats[t][ch] = counted([&] {
          return edge_network_matrices(bind, tower_prefix(t) + kChannels[ch], edge_vectors,
                                       c.activation);
        });
      }
    }
  }

  auto channel_messages = [&](std::size_t t, int ch, Var h) -> std::optional<Var> {
    if (!has_edges) return std::nullopt;
    const std::string mp = tower_prefix(t) + kChannels[ch];
    const std::span<const std::size_t> senders = ch == 0 ? src : dst;
    const std::span<const std::size_t> receivers = ch == 0 ? dst : src;
    switch (c.message) {
      case MessageFn::kMatmul:
        return message_matmul(bind(mp + ".bank"), h, senders, label, dk);
      case MessageFn::kEdgeNetwork:
        return message_edge_network(edge_mats[t][ch], h, senders, pair, dk);
      case MessageFn::kPair:
        return message_pair(bind, mp, h, edge_vectors, senders, receivers, pair, c.activation);
      case MessageFn::kDtnn:
        return message_dtnn(bind, mp, h, edge_vectors, senders, pair);
    }
    return std::nullopt;
  };

  std::vector<Var> slices(k);
  for (std::size_t t = 0; t < k; ++t) {
    slices[t] = k == 1 ? h0 : slice_cols(h0, t * dk, (t + 1) * dk);
  }
  std::optional<Var> master;
  const std::size_t dm = c.master_dim;
  if (g.has_master) master = reshape(bind("master.h0"), {1, dm});

  for (std::size_t step = 0; step < c.steps; ++step) {
    std::vector<Var> updated(k);
    std::optional<Var> master_messages;
    std::optional<Var> to_nodes;
    if (master) {
      counted([&] {
        Var pooled = reshape(reduce_sum(slices[0], 0), {1, d});
        master_messages = concat({linear(bind, "master.from_node_in", pooled, false),
                                  linear(bind, "master.from_node_out", pooled, false)},
                                 1);
        to_nodes = concat({linear(bind, "master.to_node_in", *master, false),
                           linear(bind, "master.to_node_out", *master, false)},
                          1);
        return 0;
      });
    }
    for (std::size_t t = 0; t < k; ++t) {
      Var m = counted([&] {
        auto in = channel_messages(t, 0, slices[t]);
        auto out = channel_messages(t, 1, slices[t]);
        return aggregate(tape, in, dst, out, src, n, dk);
      });
      if (to_nodes) m = add_bias(m, *to_nodes);
      if (c.update == UpdateFn::kGru) {
        updated[t] = gru_cell(m, slices[t], bind_gru(bind, tower_prefix(t) + "gru"));
      } else {
        updated[t] = slices[t] + slice_cols(m, 0, dk) + slice_cols(m, dk, 2 * dk);
      }
    }
    if (master) {
      if (c.update == UpdateFn::kGru) {
        master = gru_cell(*master_messages, *master, bind_gru(bind, "master.gru"));
      } else {
        master = *master + slice_cols(*master_messages, 0, dm) +
                 slice_cols(*master_messages, dm, 2 * dm);
      }
    }
    if (k > 1) {
      Var mixed = linear(bind, "mix", concat(std::span<const Var>(updated), 1));
      for (std::size_t t = 0; t < k; ++t) slices[t] = slice_cols(mixed, t * dk, (t + 1) * dk);
    } else {
      slices = std::move(updated);
    }
  }

  result.h = k == 1 ? slices[0] : concat(std::span<const Var>(slices), 1);
  result.master = master;
  return result;
}

Var Model::readout(Binder& bind, const EncodedGraph& g, const PropagateResult& prop, Var h0,
                   Var features, Set2SetTrace* trace) const {
  const ModelConfig& c = config_;
  const bool master_joins = prop.master && c.master_in_readout;
  // Node-wise readouts can only pool the master state when it has width d.
  const bool master_same_width = master_joins && c.master_dim == c.node_dim;
  switch (c.readout) {
    case ReadoutFn::kGgnn: {
      Var hT = prop.h;
      Var hI = h0;
      if (master_same_width) {
        hT = concat({hT, *prop.master}, 0);
        hI = concat({hI, reshape(bind("master.h0"), {1, c.master_dim})}, 0);
      }
      return readout_ggnn(bind, hT, hI, c.activation);
    }
    case ReadoutFn::kSet2Set: {
      std::optional<Var> extra;
      if (master_joins) extra = linear(bind, "readout.master_proj", *prop.master);
      return readout_set2set(bind, prop.h, features, c.set2set_steps, extra, trace,
                             c.activation);
    }
    case ReadoutFn::kDtnnSum: {
      Var hT = master_same_width ? concat({prop.h, *prop.master}, 0) : prop.h;
      return readout_dtnn_sum(bind, hT, c.activation);
    }
  }
  (void)g;
  throw ConfigError("unknown readout");
}

Var Model::forward(Tape& tape, ParamStore& params, const EncodedGraph& g,
                   Set2SetTrace* trace) const {
  check_graph(g);
  if (g.num_atoms == 0) return tape.constant(Tensor(Shape{config_.output_dim}));
  Binder bind(tape, params);
  Var features =
      tape.constant(Tensor(Shape{g.num_atoms, g.feature_width}, g.node_features));
  Var h0 = tape.constant(initial_states(g));
  const PropagateResult prop = propagate(bind, g, h0);
  return readout(bind, g, prop, h0, features, trace);
}

std::vector<double> Model::predict(ParamStore& params, const EncodedGraph& g) const {
  Tape tape(/*record=*/false);
  return forward(tape, params, g).value().values();
}

}  // namespace mpnn
