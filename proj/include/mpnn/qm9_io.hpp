#pragma once

// QM9 extended-XYZ parsing, bond perception, the JSON-lines dataset format
// and the synthetic desk-scale generator.
//
// Record layout (one molecule):
//   line 1          n_atoms
//   line 2          tag index A B C mu alpha homo lumo gap r2 zpve U0 U H G Cv
//   n_atoms lines   element x y z partial_charge
//   next line       harmonic frequencies
//   next line       SMILES (GDB and relaxed)
//   next line       InChI  (GDB and relaxed)
// Numbers may use the "1.2*^-6" exponent form. Energies in the property line
// are in Hartree and are converted to eV; rotational constants are dropped.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mpnn/molgraph.hpp"

namespace mpnn {

inline constexpr double kHartreeToEv = 27.211386246;
inline constexpr int kDatasetSchemaVersion = 1;

struct Qm9Record {
  std::string tag;
  std::int64_t index = 0;
  std::vector<Element> elements;
  std::vector<Vec3> positions;
  std::vector<double> charges;
  std::array<double, 15> properties{};  // raw, as written
  std::vector<double> frequencies;
  double omega1 = 0.0;
  std::string smiles;
  std::string inchi;

  /// The 13 regression targets in MolecularGraph order, energies in eV.
  std::array<double, kNumTargets> targets() const;
};

/// Parses a number, accepting the "*^" exponent marker.
double parse_qm9_number(std::string_view token, std::size_t line);

/// Exactly one record. Throws ParseError (with 1-based line) or
/// UnsupportedElementError.
Qm9Record parse_qm9_xyz(std::string_view text);
/// Zero or more consecutive records.
std::vector<Qm9Record> parse_qm9_records(std::string_view text);

struct BondSpec {
  std::size_t a = 0;
  std::size_t b = 0;
  BondType type = BondType::kSingle;
};

/// JSON list of [i, j, order]; order 1, 2, 3 or 1.5 (aromatic).
std::vector<BondSpec> parse_bond_file(std::string_view text);

/// Single-bond covalent radii in Angstrom.
double covalent_radius(Element e);
inline constexpr double kBondTolerance = 0.4;

/// Bonded iff |p_a - p_b| < r(a) + r(b) + tolerance; all single bonds.
std::vector<BondSpec> infer_bonds(const std::vector<Element>& elements,
                                  const std::vector<Vec3>& positions);

/// Builds the graph. With explicit_hydrogens = false the hydrogens are
/// folded into their heavy neighbour's hydrogen count.
MolecularGraph record_to_graph(const Qm9Record& record, bool explicit_hydrogens,
                               const std::optional<std::vector<BondSpec>>& bonds = {});

// ---- dataset (JSON lines, one molecule per line) ---------------------------

nlohmann::json graph_to_json(const MolecularGraph& g);
MolecularGraph graph_from_json(const nlohmann::json& j);
std::string dataset_to_jsonl(const std::vector<MolecularGraph>& graphs);
/// Throws ParseError naming the offending line.
std::vector<MolecularGraph> dataset_from_jsonl(std::string_view text);
void save_dataset(const std::filesystem::path& path, const std::vector<MolecularGraph>& graphs);
std::vector<MolecularGraph> load_dataset(const std::filesystem::path& path);

// ---- synthetic data --------------------------------------------------------

/// Target slots of synthetic molecules. Each is an exact function of the
/// graph (or its geometry).
enum SyntheticTarget : std::size_t {
  kDegreeSum = 0,
  kDoubleBonds = 1,
  kMeanPairDistance = 2,
  kHeavyAtoms = 3,
  kHydrogens = 4,
  kGyration = 5,  // sum of squared distances to the centroid
  kHeteroAtoms = 6,
  kAtomicNumberSum = 7,
  kTripleBonds = 8,
  kMaxPairDistance = 9,
  kCarbons = 10,
  kLeaves = 11,
  kBondOrderSum = 12,
};

std::array<double, kNumTargets> synthetic_targets(const MolecularGraph& g);

/// Random molecules with 3..9 heavy atoms, valence-respecting bonds and
/// jittered 3D positions.
std::vector<MolecularGraph> generate_synthetic(std::size_t count, std::uint64_t seed,
                                               bool explicit_hydrogens = false);

}  // namespace mpnn
