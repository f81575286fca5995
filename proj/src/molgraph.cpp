#include "mpnn/molgraph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <utility>

#include "mpnn/errors.hpp"

namespace mpnn {

Element parse_element(std::string_view symbol) {
  if (symbol == "H") return Element::kH;
  if (symbol == "C") return Element::kC;
  if (symbol == "N") return Element::kN;
  if (symbol == "O") return Element::kO;
  if (symbol == "F") return Element::kF;
  throw UnsupportedElementError("unsupported element '" + std::string(symbol) + "'");
}

std::string_view element_symbol(Element e) {
  static constexpr std::string_view kSymbols[] = {"H", "C", "N", "O", "F"};
  return kSymbols[static_cast<int>(e)];
}

int atomic_number(Element e) {
  static constexpr int kNumbers[] = {1, 6, 7, 8, 9};
  return kNumbers[static_cast<int>(e)];
}

int default_valence(Element e) {
  static constexpr int kValence[] = {1, 4, 3, 2, 1};
  return kValence[static_cast<int>(e)];
}

std::string_view bond_type_name(BondType t) {
  static constexpr std::string_view kNames[] = {"single",   "double",  "triple",
                                                "aromatic", "virtual", "master"};
  return kNames[static_cast<int>(t)];
}

BondType parse_bond_type(std::string_view name) {
  for (BondType t : {BondType::kSingle, BondType::kDouble, BondType::kTriple,
                     BondType::kAromatic, BondType::kVirtual, BondType::kMaster}) {
    if (bond_type_name(t) == name) return t;
  }
  throw ContractError("unknown bond type '" + std::string(name) + "'");
}

std::string_view hybridization_name(Hybridization h) {
  static constexpr std::string_view kNames[] = {"none", "sp", "sp2", "sp3"};
  return kNames[static_cast<int>(h)];
}

Hybridization parse_hybridization(std::string_view name) {
  if (name == "none" || name.empty()) return Hybridization::kNone;
  if (name == "sp") return Hybridization::kSp;
  if (name == "sp2") return Hybridization::kSp2;
  if (name == "sp3") return Hybridization::kSp3;
  throw ContractError("unknown hybridization '" + std::string(name) + "'");
}

std::string_view edge_repr_name(EdgeRepr r) {
  static constexpr std::string_view kNames[] = {"chemical", "bins", "raw"};
  return kNames[static_cast<int>(r)];
}

EdgeRepr parse_edge_repr(std::string_view name) {
  if (name == "chemical") return EdgeRepr::kChemical;
  if (name == "bins") return EdgeRepr::kDistanceBins;
  if (name == "raw") return EdgeRepr::kRawDistance;
  throw ConfigError("unknown edge representation '" + std::string(name) + "'");
}

double bond_order(BondType t) {
  switch (t) {
    case BondType::kSingle:
      return 1.0;
    case BondType::kDouble:
      return 2.0;
    case BondType::kTriple:
      return 3.0;
    case BondType::kAromatic:
      return 1.5;
    default:
      return 0.0;
  }
}

namespace {

bool is_chemical(BondType t) {
  return t != BondType::kVirtual && t != BondType::kMaster;
}

std::pair<std::size_t, std::size_t> ordered(std::size_t a, std::size_t b) {
  return a < b ? std::pair{a, b} : std::pair{b, a};
}

}  // namespace

bool MolecularGraph::has_positions() const {
  return !atoms.empty() && std::all_of(atoms.begin(), atoms.end(),
                                       [](const Atom& a) { return a.position.has_value(); });
}

std::size_t MolecularGraph::heavy_atom_count() const {
  return static_cast<std::size_t>(std::count_if(
      atoms.begin(), atoms.end(), [](const Atom& a) { return a.element != Element::kH; }));
}

void MolecularGraph::validate() const {
  if (heavy_atom_count() > kMaxHeavyAtoms) {
    throw ContractError(id + ": more than 9 heavy atoms");
  }
  if (explicit_hydrogens) {
    if (atoms.size() > kMaxExplicitNodes) {
      throw ContractError(id + ": more than 29 nodes with explicit hydrogens");
    }
    for (const Atom& a : atoms) {
      if (a.hydrogen_count != 0) {
        throw ContractError(id + ": hydrogen_count must be 0 when hydrogens are explicit");
      }
    }
  }
  for (const Atom& a : atoms) {
    if (a.hydrogen_count < 0) throw ContractError(id + ": negative hydrogen count");
  }
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const Bond& b : bonds) {
    if (b.a >= atoms.size() || b.b >= atoms.size()) {
      throw ContractError(id + ": bond endpoint out of range");
    }
    if (b.a == b.b) throw ContractError(id + ": self loop");
    if (!seen.insert(ordered(b.a, b.b)).second) {
      throw ContractError(id + ": duplicate bond");
    }
    if (b.distance && !(*b.distance >= 0.0)) {
      throw ContractError(id + ": negative bond distance");
    }
  }
}

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

std::size_t atom_feature_width(bool include_charge) {
  return kAtomFeatureWidth + (include_charge ? 1 : 0);
}

std::vector<double> featurize_atom(const Atom& atom, bool include_charge) {
  std::vector<double> f(atom_feature_width(include_charge), 0.0);
  f[static_cast<std::size_t>(atom.element)] = 1.0;
  f[5] = atom.atomic_number();
  f[6] = atom.acceptor ? 1.0 : 0.0;
  f[7] = atom.donor ? 1.0 : 0.0;
  f[8] = atom.aromatic ? 1.0 : 0.0;
  switch (atom.hybridization) {
    case Hybridization::kSp:
      f[9] = 1.0;
      break;
    case Hybridization::kSp2:
      f[10] = 1.0;
      break;
    case Hybridization::kSp3:
      f[11] = 1.0;
      break;
    case Hybridization::kNone:
      break;
  }
  f[12] = atom.hydrogen_count;
  if (include_charge) f[13] = atom.partial_charge.value_or(0.0);
  return f;
}

std::size_t bin_distance(double dist) {
  if (!(dist >= 0.0)) throw ContractError("distance must be nonnegative");
  if (dist < 2.0) return 0;
  if (dist >= 6.0) return 9;
  const auto i = static_cast<std::size_t>(std::floor((dist - 2.0) / 0.5));
  return std::min<std::size_t>(1 + i, 8);
}

void assign_fallback_hybridization(MolecularGraph& g) {
  std::vector<int> doubles(g.atoms.size(), 0), triples(g.atoms.size(), 0),
      aromatic(g.atoms.size(), 0);
  for (const Bond& b : g.bonds) {
    for (std::size_t end : {b.a, b.b}) {
      if (b.type == BondType::kDouble) ++doubles[end];
      if (b.type == BondType::kTriple) ++triples[end];
      if (b.type == BondType::kAromatic) ++aromatic[end];
    }
  }
  for (std::size_t i = 0; i < g.atoms.size(); ++i) {
    Atom& a = g.atoms[i];
    if (a.element == Element::kH || a.hybridization != Hybridization::kNone) continue;
    if (triples[i] > 0 || doubles[i] >= 2) {
      a.hybridization = Hybridization::kSp;
    } else if (doubles[i] == 1 || aromatic[i] > 0) {
      a.hybridization = Hybridization::kSp2;
    } else {
      a.hybridization = Hybridization::kSp3;
    }
  }
}

MolecularGraph add_virtual_edges(const MolecularGraph& g) {
  MolecularGraph out = g;
  std::set<std::pair<std::size_t, std::size_t>> present;
  for (const Bond& b : g.bonds) present.insert(ordered(b.a, b.b));
  for (std::size_t u = 0; u < g.atoms.size(); ++u) {
    for (std::size_t v = u + 1; v < g.atoms.size(); ++v) {
      if (!present.count({u, v})) out.bonds.push_back(Bond{u, v, BondType::kVirtual, {}});
    }
  }
  return out;
}

MolecularGraph permute_atoms(const MolecularGraph& g, const std::vector<std::size_t>& perm) {
  if (perm.size() != g.atoms.size()) throw ContractError("permutation size mismatch");
  std::vector<std::size_t> inverse(perm.size());
  std::vector<bool> hit(perm.size(), false);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= perm.size() || hit[perm[i]]) throw ContractError("not a permutation");
    hit[perm[i]] = true;
    inverse[perm[i]] = i;
  }
  MolecularGraph out = g;
  for (std::size_t i = 0; i < perm.size(); ++i) out.atoms[i] = g.atoms[perm[i]];
  for (Bond& b : out.bonds) {
    b.a = inverse[b.a];
    b.b = inverse[b.b];
  }
  return out;
}

EncodedGraph encode(const MolecularGraph& g, EdgeRepr repr, bool include_charge) {
  g.validate();
  const bool needs_positions = repr != EdgeRepr::kChemical;
  if (needs_positions && !g.atoms.empty() && !g.has_positions()) {
    throw ContractError(g.id + ": edge representation '" +
                        std::string(edge_repr_name(repr)) + "' requires atom positions");
  }

  EncodedGraph e;
  e.repr = repr;
  e.num_atoms = g.atoms.size();
  e.feature_width = atom_feature_width(include_charge);
  e.targets = g.targets;
  e.node_features.reserve(e.num_atoms * e.feature_width);
  for (const Atom& a : g.atoms) {
    const auto f = featurize_atom(a, include_charge);
    e.node_features.insert(e.node_features.end(), f.begin(), f.end());
  }

  std::map<std::pair<std::size_t, std::size_t>, BondType> bonded;
  for (const Bond& b : g.bonds) {
    if (b.type == BondType::kMaster) {
      throw ContractError(g.id + ": master edges are added after encoding");
    }
    bonded[ordered(b.a, b.b)] = b.type;
  }

  auto push_pair = [&](std::size_t u, std::size_t v, std::size_t label) {
    e.pair_u.push_back(u);
    e.pair_v.push_back(v);
    e.labels.push_back(label);
  };

  switch (repr) {
    case EdgeRepr::kChemical: {
      e.alphabet_size = kChemicalAlphabet;
      e.edge_width = kChemicalAlphabet;
      for (const auto& [uv, type] : bonded) {
        const std::size_t label =
            is_chemical(type) ? static_cast<std::size_t>(type) : kNumBondTypes;
        push_pair(uv.first, uv.second, label);
      }
      break;
    }
    case EdgeRepr::kDistanceBins: {
      e.alphabet_size = kBinsAlphabet;
      e.edge_width = kBinsAlphabet;
      for (std::size_t u = 0; u < e.num_atoms; ++u) {
        for (std::size_t v = u + 1; v < e.num_atoms; ++v) {
          auto it = bonded.find({u, v});
          if (it != bonded.end() && is_chemical(it->second)) {
            push_pair(u, v, static_cast<std::size_t>(it->second));
          } else {
            const double d = distance(*g.atoms[u].position, *g.atoms[v].position);
            push_pair(u, v, kNumBondTypes + bin_distance(d));
          }
        }
      }
      break;
    }
    case EdgeRepr::kRawDistance: {
      e.alphabet_size = kNumBondTypes + 1;
      e.edge_width = kRawEdgeWidth;
      for (std::size_t u = 0; u < e.num_atoms; ++u) {
        for (std::size_t v = u + 1; v < e.num_atoms; ++v) {
          auto it = bonded.find({u, v});
          const bool chem = it != bonded.end() && is_chemical(it->second);
          push_pair(u, v, chem ? static_cast<std::size_t>(it->second) : kNumBondTypes);
        }
      }
      break;
    }
  }

  e.edge_vectors.assign(e.num_pairs() * e.edge_width, 0.0);
  for (std::size_t p = 0; p < e.num_pairs(); ++p) {
    double* row = e.edge_vectors.data() + p * e.edge_width;
    if (repr == EdgeRepr::kRawDistance) {
      row[0] = distance(*g.atoms[e.pair_u[p]].position, *g.atoms[e.pair_v[p]].position);
      if (e.labels[p] < kNumBondTypes) row[1 + e.labels[p]] = 1.0;
    } else {
      row[e.labels[p]] = 1.0;
    }
  }
  return e;
}

EncodedGraph add_master_node(const EncodedGraph& g, std::size_t d_master) {
  EncodedGraph out = g;
  if (d_master == 0) return out;
  out.has_master = true;
  out.master_dim = d_master;
  return out;
}

std::vector<DirectedEdge> to_directed(const EncodedGraph& g) {
  std::vector<DirectedEdge> out;
  out.reserve(2 * g.num_pairs());
  for (std::size_t p = 0; p < g.num_pairs(); ++p) {
    out.push_back({g.pair_u[p], g.pair_v[p], p});
    out.push_back({g.pair_v[p], g.pair_u[p], p});
  }
  return out;
}

double propagation_cost(std::size_t num_edges, std::size_t num_nodes, std::size_t d,
                        std::size_t d_master) {
  return static_cast<double>(num_edges) * static_cast<double>(d) * static_cast<double>(d) +
         static_cast<double>(num_nodes) * static_cast<double>(d_master) *
             static_cast<double>(d_master);
}

}  // namespace mpnn
