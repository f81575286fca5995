#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "mpnn/errors.hpp"
#include "mpnn/molgraph.hpp"
#include "mpnn/qm9_io.hpp"
#include "mpnn/verify.hpp"
#include "test_util.hpp"

using namespace mpnn;
using mpnn::testing::carbon_chain;
using mpnn::testing::make_atom;

namespace {

TEST(Featurize, Sp3CarbonWithFourHydrogens) {
  Atom a = make_atom(Element::kC, 4);
  a.hybridization = Hybridization::kSp3;
  EXPECT_EQ(featurize_atom(a),
            (std::vector<double>{0, 1, 0, 0, 0, 6, 0, 0, 0, 0, 0, 1, 4}));
}

TEST(Featurize, ExplicitHydrogenNode) {
  const auto f = featurize_atom(make_atom(Element::kH));
  EXPECT_EQ(std::vector<double>(f.begin(), f.begin() + 5), (std::vector<double>{1, 0, 0, 0, 0}));
  EXPECT_EQ(f[12], 0.0);
}

TEST(Featurize, WidthAndChargeFlag) {
  EXPECT_EQ(atom_feature_width(false), 13u);
  EXPECT_EQ(featurize_atom(make_atom(Element::kO)).size(), 13u);
  Atom a = make_atom(Element::kN);
  a.partial_charge = -0.25;
  const auto f = featurize_atom(a, true);
  ASSERT_EQ(f.size(), 14u);
  EXPECT_EQ(f[13], -0.25);
  EXPECT_EQ(f[5], 7.0);
}

TEST(Elements, AtomicNumbersAndUnknownSymbols) {
  EXPECT_EQ(atomic_number(parse_element("H")), 1);
  EXPECT_EQ(atomic_number(parse_element("C")), 6);
  EXPECT_EQ(atomic_number(parse_element("N")), 7);
  EXPECT_EQ(atomic_number(parse_element("O")), 8);
  EXPECT_EQ(atomic_number(parse_element("F")), 9);
  EXPECT_THROW(parse_element("Cl"), UnsupportedElementError);
}

TEST(BinDistance, Examples) {
  EXPECT_EQ(bin_distance(1.5), 0u);
  EXPECT_EQ(bin_distance(2.0), 1u);
  EXPECT_EQ(bin_distance(6.1), 9u);
  EXPECT_EQ(bin_distance(6.0), 9u);
  EXPECT_EQ(bin_distance(5.999), 8u);
  EXPECT_EQ(bin_distance(2.5), 2u);
  EXPECT_EQ(bin_distance(0.0), 0u);
  EXPECT_THROW(bin_distance(-0.1), ContractError);
}

TEST(BinDistance, EveryBinHasWidthHalfAngstrom) {
  for (std::size_t i = 1; i <= 8; ++i) {
    const double lo = 2.0 + 0.5 * double(i - 1);
    EXPECT_EQ(bin_distance(lo), i);
    EXPECT_EQ(bin_distance(lo + 0.49), i);
  }
}

TEST(Validate, Invariants) {
  MolecularGraph g = carbon_chain(3);
  EXPECT_NO_THROW(g.validate());
  g.bonds.push_back(Bond{1, 1, BondType::kSingle, {}});
  EXPECT_THROW(g.validate(), ContractError);
  g = carbon_chain(3);
  g.bonds.push_back(Bond{0, 5, BondType::kSingle, {}});
  EXPECT_THROW(g.validate(), ContractError);
  EXPECT_THROW(carbon_chain(10).validate(), ContractError);
  g = carbon_chain(2);
  g.explicit_hydrogens = true;
  EXPECT_THROW(g.validate(), ContractError);  // hydrogen counts must be 0
}

TEST(Encode, TwoAtomBondedDistanceBins) {
  MolecularGraph g = carbon_chain(2);
  g.bonds[0].type = BondType::kDouble;
  const EncodedGraph e = encode(g, EdgeRepr::kDistanceBins);
  ASSERT_EQ(e.num_pairs(), 1u);
  EXPECT_EQ(e.labels[0], static_cast<std::size_t>(BondType::kDouble));
}

TEST(Encode, ThreeAtomChainDistanceBins) {
  const EncodedGraph e = encode(carbon_chain(3, 1.2), EdgeRepr::kDistanceBins);
  ASSERT_EQ(e.num_pairs(), 3u);
  std::size_t bond_labels = 0;
  for (std::size_t l : e.labels) {
    EXPECT_LT(l, 14u);
    if (l < kNumBondTypes) ++bond_labels;
  }
  EXPECT_EQ(bond_labels, 2u);
  EXPECT_EQ(e.alphabet_size, 14u);
  // Pair (0, 2) is 2.4 A apart.
  EXPECT_EQ(e.labels[1], kNumBondTypes + bin_distance(2.4));
}

TEST(Encode, ThreeAtomChainRawDistance) {
  const EncodedGraph e = encode(carbon_chain(3, 1.2), EdgeRepr::kRawDistance);
  ASSERT_EQ(e.num_pairs(), 3u);
  ASSERT_EQ(e.edge_width, 5u);
  EXPECT_EQ(e.pair_u[1], 0u);
  EXPECT_EQ(e.pair_v[1], 2u);
  const std::vector<double> row(e.edge_vectors.begin() + 5, e.edge_vectors.begin() + 10);
  EXPECT_NEAR(row[0], 2.4, 1e-12);
  EXPECT_EQ(std::vector<double>(row.begin() + 1, row.end()), (std::vector<double>{0, 0, 0, 0}));
  EXPECT_EQ(e.edge_vectors[0], 1.2);
  EXPECT_EQ(e.edge_vectors[1], 1.0);  // single bond one-hot
}

TEST(Encode, ChemicalOnlyBondsAndVirtualLabel) {
  const MolecularGraph g = add_virtual_edges(carbon_chain(3));
  const EncodedGraph e = encode(g, EdgeRepr::kChemical);
  ASSERT_EQ(e.num_pairs(), 3u);
  EXPECT_EQ(std::count(e.labels.begin(), e.labels.end(), kNumBondTypes), 1);
  const EncodedGraph plain = encode(carbon_chain(3), EdgeRepr::kChemical);
  EXPECT_EQ(plain.num_pairs(), 2u);
  EXPECT_EQ(plain.alphabet_size, kChemicalAlphabet);
}

TEST(Encode, DistanceReprNeedsPositions) {
  MolecularGraph g = carbon_chain(2);
  g.atoms[1].position.reset();
  EXPECT_THROW(encode(g, EdgeRepr::kRawDistance), ContractError);
  EXPECT_NO_THROW(encode(g, EdgeRepr::kChemical));
}

TEST(Encode, BondedPairsNeverGetDistanceBins) {
  for (const MolecularGraph& g : generate_synthetic(30, 4)) {
    const EncodedGraph e = encode(g, EdgeRepr::kDistanceBins);
    std::set<std::pair<std::size_t, std::size_t>> bonded;
    for (const Bond& b : g.bonds) bonded.insert({std::min(b.a, b.b), std::max(b.a, b.b)});
    for (std::size_t p = 0; p < e.num_pairs(); ++p) {
      const bool is_bond = bonded.count({e.pair_u[p], e.pair_v[p]}) > 0;
      EXPECT_EQ(is_bond, e.labels[p] < kNumBondTypes);
      EXPECT_LT(e.labels[p], 14u);
    }
  }
}

TEST(Encode, PermutationEquivariance) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const MolecularGraph g = verify::random_molecule(rng, 6);
    std::vector<std::size_t> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<std::size_t>(perm));
    const MolecularGraph pg = permute_atoms(g, perm);
    for (EdgeRepr r : {EdgeRepr::kChemical, EdgeRepr::kDistanceBins, EdgeRepr::kRawDistance}) {
      const EncodedGraph a = encode(g, r);
      const EncodedGraph b = encode(pg, r);
      // Node i of b is node perm[i] of a.
      for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t k = 0; k < a.feature_width; ++k) {
          EXPECT_EQ(b.node_features[i * b.feature_width + k],
                    a.node_features[perm[i] * a.feature_width + k]);
        }
      }
      std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> ea;
      for (std::size_t p = 0; p < a.num_pairs(); ++p) {
        ea[{a.pair_u[p], a.pair_v[p]}] = std::vector<double>(
            a.edge_vectors.begin() + p * a.edge_width,
            a.edge_vectors.begin() + (p + 1) * a.edge_width);
      }
      ASSERT_EQ(a.num_pairs(), b.num_pairs());
      for (std::size_t p = 0; p < b.num_pairs(); ++p) {
        const std::size_t u = perm[b.pair_u[p]], v = perm[b.pair_v[p]];
        const std::vector<double> row(b.edge_vectors.begin() + p * b.edge_width,
                                      b.edge_vectors.begin() + (p + 1) * b.edge_width);
        EXPECT_EQ(ea.at({std::min(u, v), std::max(u, v)}), row);
      }
    }
  }
}

TEST(VirtualEdges, PathGainsOne) {
  const MolecularGraph g = add_virtual_edges(carbon_chain(3));
  EXPECT_EQ(g.bonds.size(), 3u);
  EXPECT_EQ(g.bonds.back().type, BondType::kVirtual);
  EXPECT_EQ(g.bonds[0].type, BondType::kSingle);
}

TEST(VirtualEdges, CompleteGraphIsFixpoint) {
  const MolecularGraph full = add_virtual_edges(carbon_chain(4));
  EXPECT_EQ(add_virtual_edges(full).bonds.size(), full.bonds.size());
}

TEST(VirtualEdges, NineNodeStar) {
  MolecularGraph g;
  for (int i = 0; i < 9; ++i) g.atoms.push_back(make_atom(Element::kC));
  for (std::size_t i = 1; i < 9; ++i) g.bonds.push_back(Bond{0, i, BondType::kSingle, {}});
  const MolecularGraph v = add_virtual_edges(g);
  const auto added = std::count_if(v.bonds.begin(), v.bonds.end(),
                                   [](const Bond& b) { return b.type == BondType::kVirtual; });
  EXPECT_EQ(added, 28);
}

TEST(MasterNode, AddsOneNodeAndNEdges) {
  const EncodedGraph e = encode(carbon_chain(4), EdgeRepr::kChemical);
  const EncodedGraph m = add_master_node(e, 8);
  EXPECT_EQ(m.num_nodes(), 5u);
  EXPECT_EQ(m.num_master_edges(), 4u);
  EXPECT_EQ(m.master_dim, 8u);
  const EncodedGraph off = add_master_node(e, 0);
  EXPECT_EQ(off.num_nodes(), 4u);
  EXPECT_FALSE(off.has_master);
  EXPECT_EQ(off.labels, e.labels);
}

TEST(MasterNode, CostModel) {
  EXPECT_DOUBLE_EQ(propagation_cost(10, 5, 4, 3), 10.0 * 16.0 + 5.0 * 9.0);
}

TEST(Directed, TwoPerUndirectedWithSharedFeatures) {
  const EncodedGraph e = encode(carbon_chain(2), EdgeRepr::kChemical);
  const auto d = to_directed(e);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].src, d[1].dst);
  EXPECT_EQ(d[0].dst, d[1].src);
  EXPECT_EQ(d[0].pair, d[1].pair);
}

TEST(Directed, CountOnRandomGraphs) {
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = static_cast<std::size_t>(rng.uniform_int(1, 9));
    const MolecularGraph g = verify::random_molecule(rng, n);
    for (EdgeRepr r : {EdgeRepr::kChemical, EdgeRepr::kRawDistance}) {
      const EncodedGraph e = encode(g, r);
      const auto d = to_directed(e);
      EXPECT_EQ(d.size(), 2 * e.num_pairs());
      std::set<std::pair<std::size_t, std::size_t>> seen;
      for (const auto& de : d) seen.insert({de.src, de.dst});
      EXPECT_EQ(seen.size(), d.size());
    }
  }
}

TEST(Hybridization, FallbackFromBondOrders) {
  MolecularGraph g;
  for (int i = 0; i < 5; ++i) g.atoms.push_back(make_atom(Element::kC));
  g.atoms.push_back(make_atom(Element::kH));
  g.bonds = {Bond{0, 1, BondType::kSingle, {}}, Bond{1, 2, BondType::kDouble, {}},
             Bond{2, 3, BondType::kDouble, {}}, Bond{3, 4, BondType::kTriple, {}},
             Bond{0, 5, BondType::kSingle, {}}};
  g.atoms[4].hybridization = Hybridization::kSp3;  // given values are kept
  assign_fallback_hybridization(g);
  EXPECT_EQ(g.atoms[0].hybridization, Hybridization::kSp3);
  EXPECT_EQ(g.atoms[1].hybridization, Hybridization::kSp2);
  EXPECT_EQ(g.atoms[2].hybridization, Hybridization::kSp);
  EXPECT_EQ(g.atoms[3].hybridization, Hybridization::kSp);
  EXPECT_EQ(g.atoms[4].hybridization, Hybridization::kSp3);
  EXPECT_EQ(g.atoms[5].hybridization, Hybridization::kNone);
}

TEST(Permute, RejectsNonPermutations) {
  const MolecularGraph g = carbon_chain(3);
  EXPECT_THROW(permute_atoms(g, {0, 0, 1}), ContractError);
  EXPECT_THROW(permute_atoms(g, {0, 1}), ContractError);
}

}  // namespace
