#include "mpnn/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mpnn/errors.hpp"
#include "mpnn/qm9_io.hpp"
#include "mpnn/spectral.hpp"

namespace mpnn::verify {

namespace {

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(3);
  ss << v;
  return ss.str();
}

CheckResult below(std::string name, double value, double limit, std::string detail = {}) {
  CheckResult r{std::move(name), value < limit, value, limit, std::move(detail)};
  return r;
}

ModelConfig small_config() {
  ModelConfig c;
  c.node_dim = 16;
  c.steps = 2;
  c.set2set_steps = 3;
  return c;
}

}  // namespace

MolecularGraph random_molecule(Rng& rng, std::size_t n) {
  static constexpr Element kHeavy[] = {Element::kC, Element::kN, Element::kO};
  MolecularGraph g;
  g.id = "random";
  Vec3 last{0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    Atom a;
    a.element = kHeavy[rng.index(3)];
    a.acceptor = a.element != Element::kC;
    a.donor = a.acceptor && rng.bernoulli(0.3);
    a.hydrogen_count = static_cast<int>(rng.index(3));
    a.hybridization = static_cast<Hybridization>(1 + rng.index(3));
    if (i > 0) {
      last = {last[0] + rng.uniform(-1.5, 1.5), last[1] + rng.uniform(-1.5, 1.5),
              last[2] + rng.uniform(-1.5, 1.5)};
    }
    a.position = last;
    g.atoms.push_back(a);
    if (i > 0) {
      const std::size_t parent = rng.index(i);
      const BondType t = static_cast<BondType>(rng.index(kNumBondTypes));
      g.bonds.push_back(Bond{parent, i, t, {}});
    }
  }
  if (n >= 4 && rng.bernoulli(0.5)) {
    // ring closure between the first atom and the last one when not bonded
    const bool bonded = std::any_of(g.bonds.begin(), g.bonds.end(), [&](const Bond& b) {
      return (b.a == 0 && b.b == n - 1) || (b.a == n - 1 && b.b == 0);
    });
    if (!bonded) g.bonds.push_back(Bond{0, n - 1, BondType::kSingle, {}});
  }
  for (Bond& b : g.bonds) b.distance = distance(*g.atoms[b.a].position, *g.atoms[b.b].position);
  for (Atom& a : g.atoms) a.aromatic = false;
  for (const Bond& b : g.bonds) {
    if (b.type == BondType::kAromatic) g.atoms[b.a].aromatic = g.atoms[b.b].aromatic = true;
  }
  g.validate();
  return g;
}

GradCheckStats gradient_check(const ModelConfig& config, const MolecularGraph& g,
                              std::uint64_t seed, double h, double floor) {
  const Model model(config);
  ParamStore params = model.init_params(seed);
  // Biases start at zero; move them off so their gradients are generic.
  Rng rng(Rng::derive(seed, 7));
  for (auto& [name, t] : params) {
    for (double& v : t.data()) v += rng.uniform(-0.1, 0.1);
  }
  const EncodedGraph e = model.prepare(g);

  params.zero_grad();
  {
    Tape tape;
    tape.backward(sum(model.forward(tape, params, e)));
  }
  auto objective = [&] {
    double s = 0.0;
    for (double v : model.predict(params, e)) s += v;
    return s;
  };

  GradCheckStats stats;
  for (auto& [name, t] : params) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double saved = t[i];
      t[i] = saved + h;
      const double up = objective();
      t[i] = saved - h;
      const double down = objective();
      t[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i];
      const double diff = std::abs(a - numeric);
      stats.max_abs_error = std::max(stats.max_abs_error, diff);
      // Differences below the absolute floor pass regardless of scale.
      const double rel = diff <= floor ? 0.0 : diff / std::max(std::abs(a), std::abs(numeric));
      if (rel > stats.max_rel_error) {
        stats.max_rel_error = rel;
        stats.worst = name + "[" + std::to_string(i) + "] analytic " + fmt(a) + " numeric " +
                      fmt(numeric);
      }
      ++stats.checked;
    }
  }
  return stats;
}

std::vector<std::pair<std::string, ModelConfig>> gradient_variants() {
  std::vector<std::pair<std::string, ModelConfig>> out;
  for (MessageFn m :
       {MessageFn::kMatmul, MessageFn::kEdgeNetwork, MessageFn::kPair, MessageFn::kDtnn}) {
    ModelConfig c = small_config();
    c.message = m;
    c.edge_repr = m == MessageFn::kMatmul ? EdgeRepr::kChemical : EdgeRepr::kRawDistance;
    out.emplace_back("message " + std::string(message_fn_name(m)) + " + gru + set2set", c);
  }
  for (ReadoutFn r : {ReadoutFn::kGgnn, ReadoutFn::kDtnnSum}) {
    ModelConfig c = small_config();
    c.readout = r;
    out.emplace_back("readout " + std::string(readout_fn_name(r)) + " (edgenet + gru)", c);
  }
  {
    ModelConfig c = small_config();
    c.message = MessageFn::kDtnn;
    c.update = UpdateFn::kResidual;
    c.readout = ReadoutFn::kDtnnSum;
    out.emplace_back("dtnn message + residual update + dtnnsum", c);
  }
  {
    ModelConfig c = small_config();
    c.towers = 4;
    c.message = MessageFn::kMatmul;
    c.edge_repr = EdgeRepr::kDistanceBins;
    c.readout = ReadoutFn::kGgnn;
    out.emplace_back("towers k=4 matmul + ggnn", c);
  }
  {
    ModelConfig c = small_config();
    c.master_dim = 8;
    out.emplace_back("master node d_m=8 (edgenet + set2set)", c);
  }
  return out;
}

std::vector<CheckResult> check_gradients(std::uint64_t seed, double tolerance) {
  Rng rng(seed);
  const MolecularGraph g = random_molecule(rng, 5);
  std::vector<CheckResult> out;
  for (const auto& [name, config] : gradient_variants()) {
    const GradCheckStats s = gradient_check(config, g, Rng::derive(seed, out.size()));
    out.push_back(below("gradient " + name, s.max_rel_error, tolerance,
                        std::to_string(s.checked) + " values, worst " + s.worst));
  }
  return out;
}

double invariance_deviation(const ModelConfig& config, std::size_t graphs, std::uint64_t seed) {
  const Model model(config);
  ParamStore params = model.init_params(seed);
  Rng rng(Rng::derive(seed, 1));
  double worst = 0.0;
  for (std::size_t i = 0; i < graphs; ++i) {
    const std::size_t n = static_cast<std::size_t>(rng.uniform_int(1, kMaxHeavyAtoms));
    const MolecularGraph g = random_molecule(rng, n);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<std::size_t>(perm));
    const auto a = model.predict(params, model.prepare(g));
    const auto b = model.predict(params, model.prepare(permute_atoms(g, perm)));
    for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
  }
  return worst;
}

std::vector<CheckResult> check_invariance(std::uint64_t seed, std::size_t graphs,
                                          double tolerance) {
  std::vector<CheckResult> out;
  for (MessageFn m :
       {MessageFn::kMatmul, MessageFn::kEdgeNetwork, MessageFn::kPair, MessageFn::kDtnn}) {
    for (ReadoutFn r : {ReadoutFn::kGgnn, ReadoutFn::kSet2Set, ReadoutFn::kDtnnSum}) {
      for (std::size_t k : {1, 4}) {
        ModelConfig c = small_config();
        c.steps = 3;
        c.message = m;
        c.readout = r;
        c.towers = k;
        c.edge_repr = m == MessageFn::kMatmul ? EdgeRepr::kDistanceBins : EdgeRepr::kRawDistance;
        const double dev = invariance_deviation(c, graphs, Rng::derive(seed, out.size()));
        out.push_back(below("invariance " + std::string(message_fn_name(m)) + "/" +
                                std::string(readout_fn_name(r)) + "/k=" + std::to_string(k),
                            dev, tolerance, std::to_string(graphs) + " graphs"));
      }
    }
  }
  return out;
}

std::vector<CheckResult> check_spectral(std::uint64_t seed, std::size_t graphs) {
  const spectral::EquivalenceReport r = spectral::check_equivalence(seed, graphs);
  const std::string detail = std::to_string(r.graphs) + " graphs";
  return {below("spectral dense vs mpnn", r.spectral_max_dev, 1e-8, detail),
          below("kipf-welling dense vs mpnn", r.gcn_max_dev, 1e-10, detail)};
}

std::vector<CheckResult> check_distance_bins(std::uint64_t seed, std::size_t molecules) {
  std::vector<CheckResult> out;
  const auto graphs = generate_synthetic(molecules, seed);
  std::size_t violations = 0;
  std::size_t pairs = 0;
  for (const MolecularGraph& g : graphs) {
    const EncodedGraph e = encode(g, EdgeRepr::kDistanceBins);
    if (e.alphabet_size != kBinsAlphabet || e.edge_width != kBinsAlphabet) ++violations;
    for (std::size_t p = 0; p < e.num_pairs(); ++p) {
      ++pairs;
      const std::size_t label = e.labels[p];
      if (label >= kBinsAlphabet) ++violations;
      const double dist =
          distance(*g.atoms[e.pair_u[p]].position, *g.atoms[e.pair_v[p]].position);
      const bool bonded = std::any_of(g.bonds.begin(), g.bonds.end(), [&](const Bond& b) {
        return std::min(b.a, b.b) == e.pair_u[p] && std::max(b.a, b.b) == e.pair_v[p];
      });
      if (!bonded && label != kNumBondTypes + bin_distance(dist)) ++violations;
      if (bonded && label >= kNumBondTypes) ++violations;
      for (std::size_t k = 0; k < e.edge_width; ++k) {
        const double expect = k == label ? 1.0 : 0.0;
        if (e.edge_vectors[p * e.edge_width + k] != expect) ++violations;
      }
    }
  }
  out.push_back(CheckResult{"bins alphabet 4 bonds + 10 distance bins",
                            violations == 0 && kBinsAlphabet == 14, double(violations), 1.0,
                            std::to_string(pairs) + " pairs in " +
                                std::to_string(graphs.size()) + " molecules"});
  const bool boundaries = bin_distance(2.0) == 1 && bin_distance(6.0) == 9 &&
                          bin_distance(std::nextafter(2.0, 0.0)) == 0 &&
                          bin_distance(std::nextafter(6.0, 0.0)) == 8 &&
                          bin_distance(2.5) == 2 && bin_distance(0.0) == 0;
  out.push_back(CheckResult{"bins boundaries 2.0 -> bin 1, 6.0 -> bin 9", boundaries,
                            boundaries ? 0.0 : 1.0, 1.0, ""});
  return out;
}

TowersBench bench_towers(std::uint64_t seed, std::size_t repeats, std::size_t d, std::size_t n,
                         std::size_t k) {
  Rng rng(seed);
  const MolecularGraph g = random_molecule(rng, n);
  TowersBench bench;
  for (std::size_t towers : {std::size_t{1}, k}) {
    ModelConfig c;
    c.message = MessageFn::kMatmul;
    c.edge_repr = EdgeRepr::kDistanceBins;
    c.readout = ReadoutFn::kGgnn;
    c.node_dim = d;
    c.towers = towers;
    c.steps = 1;
    const Model model(c);
    ParamStore params = model.init_params(Rng::derive(seed, towers));
    const EncodedGraph e = model.prepare(g);
    std::uint64_t mults = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < std::max<std::size_t>(1, repeats); ++r) {
      Tape tape(false);
      Binder bind(tape, params);
      const Var h0 = tape.constant(model.initial_states(e));
      const auto t0 = std::chrono::steady_clock::now();
      const PropagateResult prop = model.propagate(bind, e, h0);
      const auto t1 = std::chrono::steady_clock::now();
      mults = prop.message_multiplies;
      best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    if (towers == 1) {
      bench.multiplies_k1 = mults;
      bench.seconds_k1 = best;
    } else {
      bench.multiplies_k8 = mults;
      bench.seconds_k8 = best;
    }
  }
  return bench;
}

std::vector<CheckResult> check_towers(std::uint64_t seed, double limit) {
  const TowersBench b = bench_towers(seed);
  return {below("towers k=8 / k=1 message multiplies (d=200, n=9)", b.ratio(), limit,
                std::to_string(b.multiplies_k8) + " vs " + std::to_string(b.multiplies_k1) +
                    "; wall clock " + fmt(b.seconds_k8 * 1e3) + " ms vs " +
                    fmt(b.seconds_k1 * 1e3) + " ms (ratio " +
                    fmt(b.seconds_k8 / b.seconds_k1) + ")")};
}

}  // namespace mpnn::verify
