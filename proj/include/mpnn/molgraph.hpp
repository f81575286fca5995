#pragma once

// Molecular graphs and their encoding into model inputs.
//
// Atom features (width 13, 14 with partial charge):
//   [0..4]   element one-hot over H, C, N, O, F
//   [5]      atomic number
//   [6]      acceptor
//   [7]      donor
//   [8]      aromatic
//   [9..11]  hybridization one-hot over sp, sp2, sp3 (all zero if none)
//   [12]     implicit hydrogen count
//   [13]     partial charge (only when requested)
//
// Edge labels for the discrete representations:
//   0..3     single, double, triple, aromatic bond
//   4        virtual edge (chemical representation only)
//   4..13    distance bin 0..9 of a non-bonded pair (distance bins)

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mpnn {

enum class Element { kH, kC, kN, kO, kF };
enum class Hybridization { kNone, kSp, kSp2, kSp3 };
enum class BondType { kSingle, kDouble, kTriple, kAromatic, kVirtual, kMaster };
enum class EdgeRepr { kChemical, kDistanceBins, kRawDistance };

using Vec3 = std::array<double, 3>;

inline constexpr std::size_t kNumTargets = 13;
inline constexpr std::size_t kAtomFeatureWidth = 13;
inline constexpr std::size_t kNumBondTypes = 4;
inline constexpr std::size_t kNumDistanceBins = 10;
inline constexpr std::size_t kChemicalAlphabet = kNumBondTypes + 1;
inline constexpr std::size_t kBinsAlphabet = kNumBondTypes + kNumDistanceBins;
inline constexpr std::size_t kRawEdgeWidth = 1 + kNumBondTypes;
inline constexpr std::size_t kMaxHeavyAtoms = 9;
inline constexpr std::size_t kMaxExplicitNodes = 29;

/// Throws UnsupportedElementError for anything outside H, C, N, O, F.
Element parse_element(std::string_view symbol);
std::string_view element_symbol(Element e);
int atomic_number(Element e);
/// Typical valence used by the synthetic generator and hybridization rule.
int default_valence(Element e);

std::string_view bond_type_name(BondType t);
BondType parse_bond_type(std::string_view name);
std::string_view hybridization_name(Hybridization h);
Hybridization parse_hybridization(std::string_view name);
std::string_view edge_repr_name(EdgeRepr r);
EdgeRepr parse_edge_repr(std::string_view name);
/// Bond order for chemical bonds (aromatic counts 1.5).
double bond_order(BondType t);

struct Atom {
  Element element = Element::kC;
  bool acceptor = false;
  bool donor = false;
  bool aromatic = false;
  Hybridization hybridization = Hybridization::kNone;
  int hydrogen_count = 0;
  std::optional<Vec3> position;
  std::optional<double> partial_charge;

  int atomic_number() const { return mpnn::atomic_number(element); }
};

struct Bond {
  std::size_t a = 0;
  std::size_t b = 0;
  BondType type = BondType::kSingle;
  std::optional<double> distance;
};

struct MolecularGraph {
  std::string id;
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  bool explicit_hydrogens = false;
  /// mu, alpha, HOMO, LUMO, gap, R2, ZPVE, U0, U, H, G, Cv, Omega.
  std::array<double, kNumTargets> targets{};

  bool has_positions() const;
  std::size_t heavy_atom_count() const;
  /// Throws ContractError describing the first violated invariant.
  void validate() const;
};

double distance(const Vec3& a, const Vec3& b);

std::vector<double> featurize_atom(const Atom& atom, bool include_charge = false);
std::size_t atom_feature_width(bool include_charge);

/// [0,2) -> 0, [2+0.5(i-1), 2+0.5i) -> i for i in 1..8, [6,inf) -> 9.
std::size_t bin_distance(double dist);

/// Assigns hybridization from bond orders where it is unset: all single ->
/// sp3, one double or aromatic -> sp2, a triple or two doubles -> sp.
/// Hydrogen stays kNone.
void assign_fallback_hybridization(MolecularGraph& g);

/// Marks every unbonded pair with a virtual edge. Chemical bonds unchanged.
MolecularGraph add_virtual_edges(const MolecularGraph& g);

/// Reorders atoms so that new atom i is old atom perm[i]; bonds follow.
MolecularGraph permute_atoms(const MolecularGraph& g, const std::vector<std::size_t>& perm);

struct DirectedEdge {
  std::size_t src;
  std::size_t dst;
  std::size_t pair;
};

struct EncodedGraph {
  EdgeRepr repr = EdgeRepr::kChemical;
  std::size_t num_atoms = 0;
  std::size_t feature_width = kAtomFeatureWidth;
  /// [num_atoms x feature_width], row-major.
  std::vector<double> node_features;

  // Undirected pairs u < v.
  std::vector<std::size_t> pair_u;
  std::vector<std::size_t> pair_v;
  /// Discrete label per pair; for the raw representation, the bond type
  /// index or kNumBondTypes when unbonded.
  std::vector<std::size_t> labels;
  std::size_t alphabet_size = kChemicalAlphabet;
  /// [num_pairs x edge_width]: one-hot label for discrete representations,
  /// [distance, bond one-hot(4)] for raw.
  std::vector<double> edge_vectors;
  std::size_t edge_width = kChemicalAlphabet;

  /// Master node: one extra node connected to every atom.
  bool has_master = false;
  std::size_t master_dim = 0;

  std::array<double, kNumTargets> targets{};

  std::size_t num_pairs() const { return labels.size(); }
  std::size_t num_nodes() const { return num_atoms + (has_master ? 1 : 0); }
  std::size_t num_master_edges() const { return has_master ? num_atoms : 0; }
};

EncodedGraph encode(const MolecularGraph& g, EdgeRepr repr, bool include_charge = false);

/// Adds the master node. d_master == 0 leaves the graph unchanged.
EncodedGraph add_master_node(const EncodedGraph& g, std::size_t d_master);

/// Each undirected pair yields (u -> v) and (v -> u), both tagged with the
/// pair index so they share features.
std::vector<DirectedEdge> to_directed(const EncodedGraph& g);

/// Cost model of one propagation step with a master node:
/// |E| d^2 + n d_master^2 multiplies.
double propagation_cost(std::size_t num_edges, std::size_t num_nodes, std::size_t d,
                        std::size_t d_master);

}  // namespace mpnn
