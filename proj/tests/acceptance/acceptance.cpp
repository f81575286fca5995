// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. All tolerances are fixed here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mpnn/model.hpp"
#include "mpnn/qm9_io.hpp"
#include "mpnn/training.hpp"
#include "mpnn/verify.hpp"

namespace {

using mpnn::verify::CheckResult;

constexpr double kGradTolerance = 1e-4;
constexpr double kInvarianceTolerance = 1e-9;
constexpr std::size_t kInvarianceGraphs = 100;
constexpr std::size_t kSpectralGraphs = 100;
constexpr double kTowersRatioLimit = 0.15;
constexpr double kSmokeMseFraction = 0.05;
constexpr double kSmokeMaeLimit = 0.1;
constexpr std::size_t kSmokeMolecules = 50;
constexpr std::size_t kSmokeSteps = 2000;
constexpr double kSmokeLr = 5e-4;
constexpr double kRatioTolerance = 0.005;

struct Outcome {
  bool passed = false;
  std::string summary;
};

// Reduces a list of sub-checks to one line; failing sub-checks are listed.
Outcome reduce(const std::vector<CheckResult>& checks, const std::string& what) {
  Outcome o{true, {}};
  double worst = 0.0;
  std::ostringstream failures;
  for (const CheckResult& c : checks) {
    worst = std::max(worst, c.value);
    if (!c.passed) {
      o.passed = false;
      failures << "\n    failed: " << c.name << " value " << c.value << " limit " << c.limit
               << " (" << c.detail << ")";
    }
  }
  std::ostringstream s;
  s << what << ", " << checks.size() << " checks, worst " << worst << failures.str();
  o.summary = s.str();
  return o;
}

Outcome criterion_gradients() {
  return reduce(mpnn::verify::check_gradients(11, kGradTolerance),
                "finite-difference gradients, rel err < 1e-4");
}

Outcome criterion_invariance() {
  return reduce(mpnn::verify::check_invariance(12, kInvarianceGraphs, kInvarianceTolerance),
                "permutation invariance over 100 graphs, |dev| < 1e-9");
}

Outcome criterion_spectral() {
  const auto checks = mpnn::verify::check_spectral(13, kSpectralGraphs);
  Outcome o = reduce(checks, "spectral < 1e-8 and Kipf-Welling < 1e-10 on 100 graphs");
  o.summary += " (spectral " + std::to_string(checks[0].value) + ", gcn " +
               std::to_string(checks[1].value) + ")";
  return o;
}

Outcome criterion_bins() {
  return reduce(mpnn::verify::check_distance_bins(14, 200),
                "distance-bin alphabet and boundaries");
}

Outcome criterion_towers() {
  const auto b = mpnn::verify::bench_towers(15);
  std::ostringstream s;
  s << "message multiplies k=8/k=1 = " << b.multiplies_k8 << "/" << b.multiplies_k1 << " = "
    << b.ratio() << " (limit " << kTowersRatioLimit << "); wall clock k=8 "
    << b.seconds_k8 * 1e3 << " ms vs k=1 " << b.seconds_k1 * 1e3 << " ms, ratio "
    << b.seconds_k8 / b.seconds_k1 << " (informational)";
  return {b.ratio() <= kTowersRatioLimit, s.str()};
}

Outcome criterion_learning() {
  const auto graphs = mpnn::generate_synthetic(kSmokeMolecules, 16);
  const mpnn::Split split = mpnn::split_dataset(graphs.size(), 16, 0, 0);
  mpnn::TrainConfig tc;
  tc.total_steps = kSmokeSteps;
  tc.init_lr = kSmokeLr;
  tc.decay_start = 0.5;
  tc.decay_factor = 0.1;
  tc.seed = 16;
  tc.targets = {mpnn::kDegreeSum};
  tc.eval_every = 250;
  const mpnn::Model model(mpnn::enn_s2s_config(32, 3));
  const mpnn::TrainResult r = mpnn::train(model, graphs, split, tc);
  const double initial = r.history.front().train_mse;
  const double final_mse = r.history.back().train_mse;
  const double final_mae = r.history.back().train_mae.at(0);
  std::ostringstream s;
  s << "enn-s2s on 50 degree-sum molecules, 2000 steps: train MSE " << initial << " -> "
    << final_mse << " (" << 100.0 * final_mse / initial << "% of initial, limit 5%), train MAE "
    << final_mae << " (limit " << kSmokeMaeLimit << ")";
  return {final_mse < kSmokeMseFraction * initial && final_mae < kSmokeMaeLimit, s.str()};
}

Outcome criterion_error_ratio() {
  const double homo = mpnn::error_ratio(0.04257, 2);
  const double omega = mpnn::error_ratio(1.9, 12);
  std::ostringstream s;
  s << "HOMO 0.04257 eV -> " << homo << " (expect 0.99), Omega 1.9 -> " << omega
    << " (expect 0.19)";
  return {std::abs(homo - 0.99) <= kRatioTolerance && std::abs(omega - 0.19) <= kRatioTolerance,
          s.str()};
}

Outcome criterion_scope() {
  // Full-size runs are out of reach here; check that the long protocol is
  // expressible (3M steps, batch 20, decay schedule) without running it.
  mpnn::TrainConfig tc;
  tc.total_steps = 3000000;
  tc.batch_size = 20;
  tc.init_lr = 1e-4;
  tc.decay_factor = 0.1;
  tc.decay_start = 0.5;
  tc.validate();
  const bool ok = mpnn::lr_at(0, tc) == 1e-4 &&
                  std::abs(mpnn::lr_at(3000000, tc) - 1e-5) < 1e-18 &&
                  mpnn::split_dataset(130462, 0).train.size() == 110462;
  return {ok,
          "full-scale QM9 reproduction not run at desk scale; --steps 3000000 protocol "
          "validated (schedule and 110462/10000/10000 split)"};
}

Outcome criterion_determinism() {
  const auto graphs = mpnn::generate_synthetic(40, 19);
  const mpnn::Split split = mpnn::split_dataset(graphs.size(), 19, 5, 5);
  mpnn::TrainConfig tc;
  tc.total_steps = 60;
  tc.batch_size = 4;
  tc.eval_every = 20;
  tc.seed = 19;
  tc.targets = {mpnn::kDegreeSum, mpnn::kMeanPairDistance};
  mpnn::ModelConfig mc = mpnn::enn_s2s_config(16, 2);
  mc.output_dim = 2;
  const mpnn::Model model(mc);
  std::ostringstream a, b;
  mpnn::train(model, graphs, split, tc, &a);
  mpnn::train(model, graphs, split, tc, &b);
  const bool same = a.str() == b.str() && !a.str().empty();
  return {same, "two seeded runs, run logs " + std::string(same ? "identical" : "differ") +
                    " (" + std::to_string(a.str().size()) + " bytes)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, criterion_gradients},  {2, criterion_invariance}, {3, criterion_spectral},
      {4, criterion_bins},       {5, criterion_towers},     {6, criterion_learning},
      {7, criterion_error_ratio}, {8, criterion_scope},     {9, criterion_determinism},
  };
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %d: %s [%.1fs]\n", o.passed ? "PASS" : "FAIL", id, o.summary.c_str(), secs);
    std::fflush(stdout);
    if (!o.passed) ++failed;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
