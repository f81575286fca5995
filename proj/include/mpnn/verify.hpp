#pragma once

// Self-checks shared by `mpnn verify` and the acceptance runner: gradient
// checks against central differences, permutation invariance, spectral
// equivalence, edge-encoding contracts and the towers cost measurement.

#include <cstdint>
#include <string>
#include <vector>

#include "mpnn/model.hpp"

namespace mpnn::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;  // the measured quantity
  double limit = 0.0;  // pass iff value < limit (or as described in detail)
  std::string detail;
};

/// Random connected molecule with exactly n heavy atoms and positions.
MolecularGraph random_molecule(Rng& rng, std::size_t n);

struct GradCheckStats {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // parameter name and index
};

/// Compares tape gradients of the model output sum with central
/// differences (step h) for every parameter value. An element counts as
/// exact when |a - n| <= floor; otherwise its relative error is
/// |a - n| / max(|a|, |n|).
GradCheckStats gradient_check(const ModelConfig& config, const MolecularGraph& g,
                              std::uint64_t seed, double h = 1e-3, double floor = 1e-8);

/// The variants exercised by the gradient criterion: every message function,
/// every readout and the residual update.
std::vector<std::pair<std::string, ModelConfig>> gradient_variants();

std::vector<CheckResult> check_gradients(std::uint64_t seed, double tolerance = 1e-4);

/// Largest |f(g) - f(permute(g))| over `graphs` random molecules for one
/// configuration.
double invariance_deviation(const ModelConfig& config, std::size_t graphs, std::uint64_t seed);

/// Every (message, readout, towers in {1, 4}) combination.
std::vector<CheckResult> check_invariance(std::uint64_t seed, std::size_t graphs = 100,
                                          double tolerance = 1e-9);

std::vector<CheckResult> check_spectral(std::uint64_t seed, std::size_t graphs = 100);

std::vector<CheckResult> check_distance_bins(std::uint64_t seed, std::size_t molecules = 200);

struct TowersBench {
  std::uint64_t multiplies_k1 = 0;
  std::uint64_t multiplies_k8 = 0;
  double seconds_k1 = 0.0;
  double seconds_k8 = 0.0;
  double ratio() const {
    return static_cast<double>(multiplies_k8) / static_cast<double>(multiplies_k1);
  }
};

/// Message-phase cost of one forward propagation (matmul messages, bins
/// edges, complete 9-node graph) for k = 1 and k = 8 at d = 200.
TowersBench bench_towers(std::uint64_t seed, std::size_t repeats = 3, std::size_t d = 200,
                         std::size_t n = 9, std::size_t k = 8);

std::vector<CheckResult> check_towers(std::uint64_t seed, double limit = 0.15);

}  // namespace mpnn::verify
