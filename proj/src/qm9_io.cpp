#include "mpnn/qm9_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "mpnn/checkpoint.hpp"
#include "mpnn/errors.hpp"
#include "mpnn/random.hpp"

namespace mpnn {

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = end + 1;
  }
  return lines;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool is_blank(std::string_view line) { return split_ws(line).empty(); }

// Parses one record starting at lines[start]; returns the index after it.
std::size_t parse_one(const std::vector<std::string_view>& lines, std::size_t start,
                      Qm9Record& rec) {
  auto line_no = [&](std::size_t idx) { return idx + 1; };
  auto need = [&](std::size_t idx, const char* what) {
    if (idx >= lines.size()) {
      throw ParseError(line_no(idx), std::string("unexpected end of input, expected ") + what);
    }
  };

  need(start, "atom count");
  const auto count_tokens = split_ws(lines[start]);
  std::size_t n_atoms = 0;
  if (count_tokens.size() != 1 ||
      std::from_chars(count_tokens[0].data(),
                      count_tokens[0].data() + count_tokens[0].size(), n_atoms)
              .ec != std::errc{} ||
      n_atoms == 0) {
    throw ParseError(line_no(start), "expected a positive atom count");
  }

  need(start + 1, "property line");
  const auto props = split_ws(lines[start + 1]);
  if (props.size() != 17) {
    throw ParseError(line_no(start + 1), "property line needs tag, index and 15 values, got " +
                                             std::to_string(props.size()) + " fields");
  }
  rec.tag = std::string(props[0]);
  rec.index = static_cast<std::int64_t>(parse_qm9_number(props[1], line_no(start + 1)));
  for (std::size_t k = 0; k < 15; ++k) {
    rec.properties[k] = parse_qm9_number(props[k + 2], line_no(start + 1));
  }

  for (std::size_t a = 0; a < n_atoms; ++a) {
    const std::size_t idx = start + 2 + a;
    need(idx, "atom line");
    const auto t = split_ws(lines[idx]);
    if (t.size() != 5) {
      throw ParseError(line_no(idx), "atom line needs 'element x y z charge' (atom count " +
                                         std::to_string(n_atoms) + " declared on line " +
                                         std::to_string(line_no(start)) + ")");
    }
    rec.elements.push_back(parse_element(t[0]));
    rec.positions.push_back({parse_qm9_number(t[1], line_no(idx)),
                             parse_qm9_number(t[2], line_no(idx)),
                             parse_qm9_number(t[3], line_no(idx))});
    rec.charges.push_back(parse_qm9_number(t[4], line_no(idx)));
  }

  const std::size_t freq_idx = start + 2 + n_atoms;
  need(freq_idx, "frequencies line");
  const auto freqs = split_ws(lines[freq_idx]);
  if (freqs.empty()) throw ParseError(line_no(freq_idx), "empty frequencies line");
  for (std::string_view f : freqs) rec.frequencies.push_back(parse_qm9_number(f, line_no(freq_idx)));
  rec.omega1 = *std::max_element(rec.frequencies.begin(), rec.frequencies.end());

  need(freq_idx + 1, "SMILES line");
  rec.smiles = std::string(lines[freq_idx + 1]);
  need(freq_idx + 2, "InChI line");
  rec.inchi = std::string(lines[freq_idx + 2]);
  return freq_idx + 3;
}

}  // namespace

double parse_qm9_number(std::string_view token, std::size_t line) {
  std::string s(token);
  if (auto p = s.find("*^"); p != std::string::npos) s.replace(p, 2, "e");
  double value = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw ParseError(line, "not a number: '" + std::string(token) + "'");
  }
  return value;
}

std::array<double, kNumTargets> Qm9Record::targets() const {
  // properties: A B C mu alpha homo lumo gap r2 zpve U0 U H G Cv
  const auto& p = properties;
  return {p[3],
          p[4],
          p[5] * kHartreeToEv,
          p[6] * kHartreeToEv,
          p[7] * kHartreeToEv,
          p[8],
          p[9] * kHartreeToEv,
          p[10] * kHartreeToEv,
          p[11] * kHartreeToEv,
          p[12] * kHartreeToEv,
          p[13] * kHartreeToEv,
          p[14],
          omega1};
}

Qm9Record parse_qm9_xyz(std::string_view text) {
  const auto lines = split_lines(text);
  Qm9Record rec;
  const std::size_t next = parse_one(lines, 0, rec);
  for (std::size_t i = next; i < lines.size(); ++i) {
    if (!is_blank(lines[i])) throw ParseError(i + 1, "trailing content after the record");
  }
  return rec;
}

std::vector<Qm9Record> parse_qm9_records(std::string_view text) {
  const auto lines = split_lines(text);
  std::vector<Qm9Record> out;
  std::size_t i = 0;
  while (true) {
    while (i < lines.size() && is_blank(lines[i])) ++i;
    if (i >= lines.size()) break;
    Qm9Record rec;
    i = parse_one(lines, i, rec);
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<BondSpec> parse_bond_file(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(1, std::string("bond file: ") + e.what());
  }
  if (!doc.is_array()) throw ParseError(1, "bond file must be a JSON list");
  std::vector<BondSpec> out;
  for (const auto& entry : doc) {
    if (!entry.is_array() || entry.size() != 3 || !entry[0].is_number_unsigned() ||
        !entry[1].is_number_unsigned() || !entry[2].is_number()) {
      throw ParseError(1, "bond entries must be [i, j, order]: " + entry.dump());
    }
    BondSpec b{entry[0].get<std::size_t>(), entry[1].get<std::size_t>(), BondType::kSingle};
    const double order = entry[2].get<double>();
    if (order == 1.0) {
      b.type = BondType::kSingle;
    } else if (order == 2.0) {
      b.type = BondType::kDouble;
    } else if (order == 3.0) {
      b.type = BondType::kTriple;
    } else if (order == 1.5) {
      b.type = BondType::kAromatic;
    } else {
      throw ParseError(1, "unsupported bond order " + entry[2].dump());
    }
    out.push_back(b);
  }
  return out;
}

double covalent_radius(Element e) {
  switch (e) {
    case Element::kH:
      return 0.32;
    case Element::kC:
      return 0.75;
    case Element::kN:
      return 0.71;
    case Element::kO:
      return 0.63;
    case Element::kF:
      return 0.64;
  }
  return 0.0;
}

std::vector<BondSpec> infer_bonds(const std::vector<Element>& elements,
                                  const std::vector<Vec3>& positions) {
  if (elements.size() != positions.size()) throw ContractError("elements/positions mismatch");
  std::vector<BondSpec> out;
  for (std::size_t a = 0; a < elements.size(); ++a) {
    for (std::size_t b = a + 1; b < elements.size(); ++b) {
      const double cutoff =
          covalent_radius(elements[a]) + covalent_radius(elements[b]) + kBondTolerance;
      if (distance(positions[a], positions[b]) < cutoff) {
        out.push_back({a, b, BondType::kSingle});
      }
    }
  }
  return out;
}

MolecularGraph record_to_graph(const Qm9Record& rec, bool explicit_hydrogens,
                               const std::optional<std::vector<BondSpec>>& bond_file) {
  const std::size_t n = rec.elements.size();
  const std::vector<BondSpec> bonds = bond_file ? *bond_file : infer_bonds(rec.elements, rec.positions);
  for (const BondSpec& b : bonds) {
    if (b.a >= n || b.b >= n || b.a == b.b) {
      throw ContractError(rec.tag + " " + std::to_string(rec.index) + ": bad bond " +
                          std::to_string(b.a) + "-" + std::to_string(b.b));
    }
  }

  std::vector<int> hydrogens(n, 0);
  std::vector<bool> aromatic(n, false);
  for (const BondSpec& b : bonds) {
    if (rec.elements[b.a] == Element::kH) ++hydrogens[b.b];
    if (rec.elements[b.b] == Element::kH) ++hydrogens[b.a];
    if (b.type == BondType::kAromatic) aromatic[b.a] = aromatic[b.b] = true;
  }

  MolecularGraph g;
  g.id = rec.tag + "_" + std::to_string(rec.index);
  g.explicit_hydrogens = explicit_hydrogens;
  g.targets = rec.targets();

  std::vector<std::size_t> new_index(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const Element e = rec.elements[i];
    if (!explicit_hydrogens && e == Element::kH) continue;
    Atom atom;
    atom.element = e;
    atom.acceptor = e == Element::kN || e == Element::kO;
    atom.donor = atom.acceptor && hydrogens[i] > 0;
    atom.aromatic = aromatic[i];
    atom.hydrogen_count = explicit_hydrogens ? 0 : hydrogens[i];
    atom.position = rec.positions[i];
    atom.partial_charge = rec.charges[i];
    new_index[i] = g.atoms.size();
    g.atoms.push_back(atom);
  }
  if (g.atoms.empty()) throw ContractError(g.id + ": no heavy atoms");

  for (const BondSpec& b : bonds) {
    if (new_index[b.a] == n || new_index[b.b] == n) continue;
    g.bonds.push_back(Bond{new_index[b.a], new_index[b.b], b.type,
                           distance(rec.positions[b.a], rec.positions[b.b])});
  }
  assign_fallback_hybridization(g);
  g.validate();
  return g;
}

// ---- dataset ---------------------------------------------------------------

nlohmann::json graph_to_json(const MolecularGraph& g) {
  nlohmann::json atoms = nlohmann::json::array();
  nlohmann::json positions = nlohmann::json::array();
  for (const Atom& a : g.atoms) {
    nlohmann::json ja = {{"element", element_symbol(a.element)},
                         {"acceptor", a.acceptor},
                         {"donor", a.donor},
                         {"aromatic", a.aromatic},
                         {"hybridization", hybridization_name(a.hybridization)},
                         {"hydrogens", a.hydrogen_count}};
    if (a.partial_charge) ja["charge"] = *a.partial_charge;
    atoms.push_back(std::move(ja));
    if (a.position) positions.push_back(*a.position);
  }
  nlohmann::json bonds = nlohmann::json::array();
  for (const Bond& b : g.bonds) {
    nlohmann::json jb = {b.a, b.b, bond_type_name(b.type)};
    if (b.distance) jb.push_back(*b.distance);
    bonds.push_back(std::move(jb));
  }
  nlohmann::json j = {{"schema", kDatasetSchemaVersion},
                      {"id", g.id},
                      {"explicit_hydrogens", g.explicit_hydrogens},
                      {"atoms", std::move(atoms)},
                      {"bonds", std::move(bonds)},
                      {"targets", g.targets}};
  if (g.has_positions()) j["positions"] = std::move(positions);
  return j;
}

MolecularGraph graph_from_json(const nlohmann::json& j) {
  if (j.value("schema", 0) != kDatasetSchemaVersion) {
    throw ContractError("unsupported dataset schema");
  }
  MolecularGraph g;
  g.id = j.at("id").get<std::string>();
  g.explicit_hydrogens = j.at("explicit_hydrogens").get<bool>();
  for (const auto& ja : j.at("atoms")) {
    Atom a;
    a.element = parse_element(ja.at("element").get<std::string>());
    a.acceptor = ja.at("acceptor").get<bool>();
    a.donor = ja.at("donor").get<bool>();
    a.aromatic = ja.at("aromatic").get<bool>();
    a.hybridization = parse_hybridization(ja.at("hybridization").get<std::string>());
    a.hydrogen_count = ja.at("hydrogens").get<int>();
    if (ja.contains("charge")) a.partial_charge = ja.at("charge").get<double>();
    g.atoms.push_back(a);
  }
  if (j.contains("positions")) {
    const auto& pos = j.at("positions");
    if (pos.size() != g.atoms.size()) throw ContractError(g.id + ": positions/atoms mismatch");
    for (std::size_t i = 0; i < g.atoms.size(); ++i) g.atoms[i].position = pos[i].get<Vec3>();
  }
  for (const auto& jb : j.at("bonds")) {
    if (!jb.is_array() || jb.size() < 3 || jb.size() > 4) {
      throw ContractError(g.id + ": bond must be [a, b, type(, distance)]");
    }
    Bond b{jb[0].get<std::size_t>(), jb[1].get<std::size_t>(),
           parse_bond_type(jb[2].get<std::string>()), {}};
    if (jb.size() == 4) b.distance = jb[3].get<double>();
    g.bonds.push_back(b);
  }
  g.targets = j.at("targets").get<std::array<double, kNumTargets>>();
  g.validate();
  return g;
}

std::string dataset_to_jsonl(const std::vector<MolecularGraph>& graphs) {
  std::string out;
  for (const MolecularGraph& g : graphs) {
    out += graph_to_json(g).dump();
    out += '\n';
  }
  return out;
}

std::vector<MolecularGraph> dataset_from_jsonl(std::string_view text) {
  std::vector<MolecularGraph> out;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    try {
      out.push_back(graph_from_json(nlohmann::json::parse(lines[i])));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(i + 1, e.what());
    } catch (const ContractError& e) {
      throw ParseError(i + 1, e.what());
    } catch (const UnsupportedElementError& e) {
      throw ParseError(i + 1, e.what());
    }
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const std::vector<MolecularGraph>& graphs) {
  write_file_atomic(path, dataset_to_jsonl(graphs));
}

std::vector<MolecularGraph> load_dataset(const std::filesystem::path& path) {
  try {
    return dataset_from_jsonl(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

// ---- synthetic -------------------------------------------------------------

std::array<double, kNumTargets> synthetic_targets(const MolecularGraph& g) {
  std::array<double, kNumTargets> t{};
  const std::size_t n = g.atoms.size();
  std::vector<int> degree(n, 0);
  for (const Bond& b : g.bonds) {
    if (b.type == BondType::kVirtual || b.type == BondType::kMaster) continue;
    ++degree[b.a];
    ++degree[b.b];
    if (b.type == BondType::kDouble) t[kDoubleBonds] += 1;
    if (b.type == BondType::kTriple) t[kTripleBonds] += 1;
    t[kBondOrderSum] += bond_order(b.type);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Atom& a = g.atoms[i];
    t[kDegreeSum] += degree[i];
    if (a.element != Element::kH) t[kHeavyAtoms] += 1;
    t[kHydrogens] += a.element == Element::kH ? 1 : a.hydrogen_count;
    if (a.element != Element::kH && a.element != Element::kC) t[kHeteroAtoms] += 1;
    if (a.element == Element::kC) t[kCarbons] += 1;
    t[kAtomicNumberSum] += a.atomic_number();
    if (degree[i] == 1) t[kLeaves] += 1;
  }
  if (g.has_positions()) {
    Vec3 c{0, 0, 0};
    for (const Atom& a : g.atoms) {
      for (int k = 0; k < 3; ++k) c[k] += (*a.position)[k] / static_cast<double>(n);
    }
    for (const Atom& a : g.atoms) {
      const double r = distance(*a.position, c);
      t[kGyration] += r * r;
    }
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t u = 0; u < n; ++u) {
      for (std::size_t v = u + 1; v < n; ++v) {
        const double d = distance(*g.atoms[u].position, *g.atoms[v].position);
        sum += d;
        t[kMaxPairDistance] = std::max(t[kMaxPairDistance], d);
        ++pairs;
      }
    }
    t[kMeanPairDistance] = pairs ? sum / static_cast<double>(pairs) : 0.0;
  }
  return t;
}

namespace {

Element draw_element(Rng& rng) {
  const double u = rng.uniform();
  if (u < 0.60) return Element::kC;
  if (u < 0.75) return Element::kN;
  if (u < 0.95) return Element::kO;
  return Element::kF;
}

Vec3 random_direction(Rng& rng) {
  while (true) {
    Vec3 v{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const double r = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (r > 0.1 && r <= 1.0) return {v[0] / r, v[1] / r, v[2] / r};
  }
}

Vec3 place_near(Rng& rng, const Vec3& anchor, double length,
                const std::vector<Vec3>& placed) {
  Vec3 best{};
  double best_clearance = -1.0;
  for (int attempt = 0; attempt < 20; ++attempt) {
    const Vec3 dir = random_direction(rng);
    const double len = length + rng.uniform(-0.05, 0.05);
    const Vec3 p{anchor[0] + len * dir[0], anchor[1] + len * dir[1], anchor[2] + len * dir[2]};
    double clearance = 1e9;
    for (const Vec3& q : placed) clearance = std::min(clearance, distance(p, q));
    if (clearance > best_clearance) {
      best = p;
      best_clearance = clearance;
    }
    if (clearance > 1.1) break;
  }
  return best;
}

MolecularGraph synthetic_molecule(Rng& rng, std::size_t serial, bool explicit_h) {
  const std::size_t n = static_cast<std::size_t>(rng.uniform_int(3, kMaxHeavyAtoms));
  MolecularGraph g;
  g.id = "synthetic_" + std::to_string(serial);
  std::vector<int> spare;
  std::vector<std::size_t> parent(n, 0);

  for (std::size_t i = 0; i < n; ++i) {
    Element e = draw_element(rng);
    if (i > 0) {
      std::vector<std::size_t> candidates;
      for (std::size_t j = 0; j < i; ++j) {
        if (spare[j] > 0) candidates.push_back(j);
      }
      if (candidates.empty()) {
        // Fluorines used up every free valence: turn one into carbon.
        for (std::size_t j = 0; j < i; ++j) {
          if (g.atoms[j].element != Element::kC) {
            spare[j] += 4 - default_valence(g.atoms[j].element);
            g.atoms[j].element = Element::kC;
            candidates.push_back(j);
            break;
          }
        }
      }
      const std::size_t p = candidates[rng.index(candidates.size())];
      parent[i] = p;
      g.bonds.push_back(Bond{p, i, BondType::kSingle, {}});
      --spare[p];
      Atom a;
      a.element = e;
      g.atoms.push_back(a);
      spare.push_back(default_valence(e) - 1);
    } else {
      Atom a;
      a.element = e == Element::kF ? Element::kC : e;
      g.atoms.push_back(a);
      spare.push_back(default_valence(a.element));
    }
  }

  // Bond order upgrades.
  for (Bond& b : g.bonds) {
    if (spare[b.a] >= 1 && spare[b.b] >= 1 && rng.bernoulli(0.25)) {
      b.type = BondType::kDouble;
      --spare[b.a];
      --spare[b.b];
      if (spare[b.a] >= 1 && spare[b.b] >= 1 && rng.bernoulli(0.2)) {
        b.type = BondType::kTriple;
        --spare[b.a];
        --spare[b.b];
      }
    }
  }

  // Occasional ring closure between non-adjacent atoms.
  if (n >= 4 && rng.bernoulli(0.35)) {
    std::set<std::pair<std::size_t, std::size_t>> present;
    for (const Bond& b : g.bonds) present.insert({std::min(b.a, b.b), std::max(b.a, b.b)});
    std::vector<std::pair<std::size_t, std::size_t>> options;
    for (std::size_t u = 0; u < n; ++u) {
      for (std::size_t v = u + 1; v < n; ++v) {
        if (spare[u] >= 1 && spare[v] >= 1 && !present.count({u, v})) options.push_back({u, v});
      }
    }
    if (!options.empty()) {
      const auto [u, v] = options[rng.index(options.size())];
      g.bonds.push_back(Bond{u, v, BondType::kSingle, {}});
      --spare[u];
      --spare[v];
    }
  }

  for (std::size_t i = 0; i < n; ++i) g.atoms[i].hydrogen_count = spare[i];

  // Geometry: each atom placed about one bond length from its tree parent.
  std::vector<Vec3> placed;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p = i == 0 ? Vec3{0.0, 0.0, 0.0} : place_near(rng, placed[parent[i]], 1.45, placed);
    placed.push_back(p);
    g.atoms[i].position = p;
  }

  if (explicit_h) {
    std::vector<std::size_t> owners;
    for (std::size_t i = 0; i < n; ++i) {
      for (int h = 0; h < g.atoms[i].hydrogen_count; ++h) owners.push_back(i);
      g.atoms[i].hydrogen_count = 0;
    }
    for (std::size_t owner : owners) {
      Atom h;
      h.element = Element::kH;
      h.position = place_near(rng, placed[owner], 1.09, placed);
      placed.push_back(*h.position);
      g.bonds.push_back(Bond{owner, g.atoms.size(), BondType::kSingle, {}});
      g.atoms.push_back(h);
    }
    g.explicit_hydrogens = true;
  }

  std::vector<int> h_neighbours(g.atoms.size(), 0);
  for (const Bond& b : g.bonds) {
    if (g.atoms[b.a].element == Element::kH) ++h_neighbours[b.b];
    if (g.atoms[b.b].element == Element::kH) ++h_neighbours[b.a];
  }
  for (std::size_t i = 0; i < g.atoms.size(); ++i) {
    Atom& a = g.atoms[i];
    a.acceptor = a.element == Element::kN || a.element == Element::kO;
    a.donor = a.acceptor && (a.hydrogen_count > 0 || h_neighbours[i] > 0);
  }
  for (Bond& b : g.bonds) b.distance = distance(*g.atoms[b.a].position, *g.atoms[b.b].position);
  assign_fallback_hybridization(g);
  g.targets = synthetic_targets(g);
  g.validate();
  return g;
}

}  // namespace

std::vector<MolecularGraph> generate_synthetic(std::size_t count, std::uint64_t seed,
                                               bool explicit_hydrogens) {
  if (count == 0) throw ContractError("synthetic dataset needs count >= 1");
  std::vector<MolecularGraph> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(Rng::derive(seed, i));
    out.push_back(synthetic_molecule(rng, i, explicit_hydrogens));
  }
  return out;
}

}  // namespace mpnn
