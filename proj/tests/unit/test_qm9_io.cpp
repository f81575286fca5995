#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "mpnn/errors.hpp"
#include "mpnn/qm9_io.hpp"

using namespace mpnn;

namespace {

const char* kH2 =
    "2\n"
    "gdb 7 0.0 0.0 0.0 0.0 2.5 -0.4 0.1 0.5 5.0 0.01 -1.17 -1.16 -1.16 -1.18 3.1\n"
    "H 0.0 0.0 0.0 0.0\n"
    "H 0.74 0.0 0.0 0.0\n"
    "4400.5\n"
    "[H][H]\t[H][H]\n"
    "InChI=1S/H2/h1H\tInChI=1S/H2/h1H\n";

const char* kMethane =
    "5\n"
    "gdb 1 157.7118 157.70997 157.70699 0. 13.21 -0.3877 0.1171 0.5048 35.3641 0.044749 "
    "-40.47893 -40.476062 -40.475117 -40.498597 6.469\n"
    "C -0.0126981359 1.0858041578 0.0080009958 -0.535689\n"
    "H 0.002150416 -0.0060313176 0.0019761204 0.133921\n"
    "H 1.0117308433 1.4637511618 0.0002765748 0.133922\n"
    "H -0.540815069 1.4475266138 -0.8766437152 0.133923\n"
    "H -0.5238136345 1.4379326443 0.9063972942 0.133923\n"
    "1341.307 1341.3284 1341.365 1562.6731 1562.7453 3038.3205 3151.6034 3151.6788 3151.7078\n"
    "C\tC\n"
    "InChI=1S/CH4/h1H4\tInChI=1S/CH4/h1H4\n";

TEST(Qm9Number, AcceptsMathematicaExponent) {
  EXPECT_DOUBLE_EQ(parse_qm9_number("1.5*^-6", 1), 1.5e-6);
  EXPECT_DOUBLE_EQ(parse_qm9_number("-2.25", 1), -2.25);
  EXPECT_DOUBLE_EQ(parse_qm9_number("3e2", 1), 300.0);
  EXPECT_THROW(parse_qm9_number("abc", 4), ParseError);
  try {
    parse_qm9_number("1.0x", 9);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 9u);
  }
}

TEST(Qm9Parse, HydrogenMoleculeHasOneBond) {
  const Qm9Record r = parse_qm9_xyz(kH2);
  EXPECT_EQ(r.elements.size(), 2u);
  EXPECT_EQ(r.index, 7);
  EXPECT_EQ(infer_bonds(r.elements, r.positions).size(), 1u);
  const MolecularGraph g = record_to_graph(r, true);
  EXPECT_EQ(g.atoms.size(), 2u);
  EXPECT_EQ(g.bonds.size(), 1u);
}

TEST(Qm9Parse, MethaneTargetsAndHydrogenFolding) {
  const Qm9Record r = parse_qm9_xyz(kMethane);
  EXPECT_EQ(r.frequencies.size(), 9u);
  EXPECT_DOUBLE_EQ(r.omega1, 3151.7078);
  const auto t = r.targets();
  EXPECT_DOUBLE_EQ(t[1], 13.21);
  EXPECT_NEAR(t[2], -0.3877 * kHartreeToEv, 1e-12);
  EXPECT_DOUBLE_EQ(t[11], 6.469);
  EXPECT_DOUBLE_EQ(t[12], 3151.7078);

  const MolecularGraph implicit = record_to_graph(r, false);
  ASSERT_EQ(implicit.atoms.size(), 1u);
  EXPECT_EQ(implicit.atoms[0].hydrogen_count, 4);
  EXPECT_TRUE(implicit.bonds.empty());
  const MolecularGraph explicit_h = record_to_graph(r, true);
  EXPECT_EQ(explicit_h.atoms.size(), 5u);
  EXPECT_EQ(explicit_h.bonds.size(), 4u);
  EXPECT_NO_THROW(explicit_h.validate());
}

TEST(Qm9Parse, OmegaIsLargestFrequency) {
  std::string text = kH2;
  text.replace(text.find("4400.5"), 6, "1200 3500 2100");
  EXPECT_DOUBLE_EQ(parse_qm9_xyz(text).omega1, 3500.0);
}

TEST(Qm9Parse, AtomCountMismatchNamesLine) {
  std::string text = kH2;
  text.replace(0, 1, "3");
  try {
    parse_qm9_xyz(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 5u);
  }
}

TEST(Qm9Parse, BadPropertyLineAndTrailingContent) {
  std::string text = kH2;
  text.replace(text.find(" 3.1\n"), 4, "");
  EXPECT_THROW(parse_qm9_xyz(text), ParseError);
  EXPECT_THROW(parse_qm9_xyz(std::string(kH2) + "junk\n"), ParseError);
  std::string bad = kH2;
  bad.replace(bad.find("H 0.74"), 1, "Xe");
  EXPECT_THROW(parse_qm9_xyz(bad), Error);
}

TEST(Qm9Parse, ConcatenatedRecords) {
  const auto rs = parse_qm9_records(std::string(kH2) + "\n" + kMethane + kH2);
  ASSERT_EQ(rs.size(), 3u);
  EXPECT_EQ(rs[1].index, 1);
  EXPECT_TRUE(parse_qm9_records("").empty());
}

TEST(BondFile, OrdersAndOverride) {
  const auto bonds = parse_bond_file("[[0, 1, 2], [1, 2, 1.5], [2, 3, 3]]");
  ASSERT_EQ(bonds.size(), 3u);
  EXPECT_EQ(bonds[0].type, BondType::kDouble);
  EXPECT_EQ(bonds[1].type, BondType::kAromatic);
  EXPECT_EQ(bonds[2].type, BondType::kTriple);
  EXPECT_THROW(parse_bond_file("[[0, 1, 4]]"), ParseError);
  EXPECT_THROW(parse_bond_file("{}"), ParseError);
  EXPECT_THROW(parse_bond_file("[[0, 1]]"), ParseError);

  const Qm9Record r = parse_qm9_xyz(kH2);
  const MolecularGraph g = record_to_graph(r, true, parse_bond_file("[[0, 1, 2]]"));
  ASSERT_EQ(g.bonds.size(), 1u);
  EXPECT_EQ(g.bonds[0].type, BondType::kDouble);
  EXPECT_THROW(record_to_graph(r, true, parse_bond_file("[[0, 5, 1]]")), ContractError);
}

TEST(BondPerception, DistanceThreshold) {
  const double cut = 2.0 * covalent_radius(Element::kC) + kBondTolerance;
  const std::vector<Element> e = {Element::kC, Element::kC};
  EXPECT_EQ(infer_bonds(e, {Vec3{0, 0, 0}, Vec3{cut - 1e-6, 0, 0}}).size(), 1u);
  EXPECT_TRUE(infer_bonds(e, {Vec3{0, 0, 0}, Vec3{cut + 1e-6, 0, 0}}).empty());
}

TEST(Dataset, JsonLinesRoundTripIsStable) {
  auto gs = generate_synthetic(12, 3);
  gs.push_back(record_to_graph(parse_qm9_xyz(kMethane), true));
  const std::string text = dataset_to_jsonl(gs);
  const auto back = dataset_from_jsonl(text);
  ASSERT_EQ(back.size(), gs.size());
  EXPECT_EQ(dataset_to_jsonl(back), text);
  for (std::size_t i = 0; i < gs.size(); ++i) {
    EXPECT_EQ(back[i].targets, gs[i].targets);
    EXPECT_EQ(back[i].atoms.size(), gs[i].atoms.size());
    EXPECT_EQ(back[i].explicit_hydrogens, gs[i].explicit_hydrogens);
  }
}

TEST(Dataset, FileRoundTripAndBadLine) {
  const auto gs = generate_synthetic(4, 8);
  const auto path = std::filesystem::temp_directory_path() / "mpnn_dataset_test.jsonl";
  save_dataset(path, gs);
  EXPECT_EQ(dataset_to_jsonl(load_dataset(path)), dataset_to_jsonl(gs));
  std::filesystem::remove(path);

  const std::string text = dataset_to_jsonl(gs);
  const std::string broken = text.substr(0, text.find('\n') + 1) + "{not json\n";
  try {
    dataset_from_jsonl(broken);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Synthetic, DegreeSumMatchesRecount) {
  for (const auto& g : generate_synthetic(50, 21)) {
    std::size_t degree = 0;
    for (std::size_t v = 0; v < g.atoms.size(); ++v) {
      for (const Bond& b : g.bonds) degree += (b.a == v) + (b.b == v);
    }
    EXPECT_EQ(g.targets[kDegreeSum], static_cast<double>(degree));
    EXPECT_EQ(g.targets[kDegreeSum], 2.0 * static_cast<double>(g.bonds.size()));
    EXPECT_EQ(synthetic_targets(g), g.targets);
  }
}

TEST(Synthetic, GraphsAreValidAndSized) {
  for (bool explicit_h : {false, true}) {
    for (const auto& g : generate_synthetic(40, 22, explicit_h)) {
      EXPECT_NO_THROW(g.validate());
      EXPECT_GE(g.heavy_atom_count(), 3u);
      EXPECT_LE(g.heavy_atom_count(), 9u);
      EXPECT_TRUE(g.has_positions());
      EXPECT_EQ(g.explicit_hydrogens, explicit_h);
    }
  }
}

TEST(Synthetic, Deterministic) {
  EXPECT_EQ(dataset_to_jsonl(generate_synthetic(10, 5)), dataset_to_jsonl(generate_synthetic(10, 5)));
  EXPECT_NE(dataset_to_jsonl(generate_synthetic(10, 5)), dataset_to_jsonl(generate_synthetic(10, 6)));
  EXPECT_THROW(generate_synthetic(0, 1), ContractError);
}

}  // namespace
