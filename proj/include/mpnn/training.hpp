#pragma once

// Target normalization, Adam with a linear LR decay, the training loop with
// validation-based model selection, error ratios and random search.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mpnn/model.hpp"
#include "mpnn/molgraph.hpp"
#include "mpnn/nn.hpp"

namespace mpnn {

inline constexpr std::array<std::string_view, kNumTargets> kTargetNames = {
    "mu", "alpha", "homo", "lumo", "gap", "r2", "zpve", "u0", "u", "h", "g", "cv", "omega"};

/// Chemical accuracy per target (same order as kTargetNames).
inline constexpr std::array<double, kNumTargets> kChemicalAccuracy = {
    0.1, 0.1, 0.043, 0.043, 0.043, 1.2, 0.0012, 0.043, 0.043, 0.043, 0.043, 0.050, 10.0};

/// "all" or a target index / name.
std::vector<std::size_t> parse_target_selection(std::string_view text);

/// mae / chemical accuracy. Throws ContractError for target_id >= 13.
double error_ratio(double mae, std::size_t target_id);

/// Per selected target mean and population standard deviation.
struct TargetStats {
  std::vector<std::size_t> targets;
  std::vector<double> mean;
  std::vector<double> std;

  std::vector<double> normalize(const std::array<double, kNumTargets>& y) const;
  double denormalize(double value, std::size_t slot) const {
    return value * std[slot] + mean[slot];
  }
};

/// Throws DegenerateTargetError when a selected target has zero spread.
TargetStats compute_target_stats(const std::vector<MolecularGraph>& graphs,
                                 const std::vector<std::size_t>& indices,
                                 const std::vector<std::size_t>& targets);
nlohmann::json to_json(const TargetStats& s);
TargetStats target_stats_from_json(const nlohmann::json& j);

struct TrainConfig {
  std::size_t batch_size = 20;
  std::size_t total_steps = 2000;
  double init_lr = 1e-4;
  double decay_start = 0.5;  // fraction of total_steps
  double decay_factor = 0.1;  // F, final lr = init_lr * F
  std::uint64_t seed = 0;
  std::vector<std::size_t> targets = {0};
  std::size_t eval_every = 1000;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);

double lr_at(std::size_t step, const TrainConfig& c);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Applies one update from the accumulated gradients (missing gradients
  /// count as zero). Throws DivergenceError on a non-finite gradient.
  void step(ParamStore& params, double lr);
  std::size_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::size_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

struct LossMetrics {
  double mse = 0.0;  // normalized space, averaged over graphs and targets
  std::vector<double> mae;  // per target, original units
};

/// pred and target rows are normalized, one row per graph.
LossMetrics loss_and_metrics(const std::vector<std::vector<double>>& pred,
                             const std::vector<std::vector<double>>& target,
                             const TargetStats& stats);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
  std::vector<std::size_t> test;

  /// FNV-1a over the three index lists.
  std::uint64_t hash() const;
  std::string hash_hex() const;
};

/// Seeded shuffle then valid | test | train. Throws ContractError when fewer
/// than valid + test + 1 items are available.
Split split_dataset(std::size_t n, std::uint64_t seed, std::size_t valid = 10000,
                    std::size_t test = 10000);
nlohmann::json to_json(const Split& s);
Split split_from_json(const nlohmann::json& j);

struct EvalRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double train_mse = 0.0;
  std::vector<double> train_mae;
  std::vector<double> valid_mae;
  double valid_score = 0.0;  // mean normalized valid MAE (train if no valid)
};

nlohmann::json to_json(const EvalRecord& r);

struct TrainResult {
  ParamStore best_params;
  ParamStore final_params;
  TargetStats stats;
  std::size_t best_step = 0;
  std::vector<EvalRecord> history;
  std::vector<double> test_mae;  // of best_params, empty without a test split
};

/// Graphs already encoded for a model, with the normalized targets.
struct PreparedData {
  std::vector<EncodedGraph> graphs;
  std::vector<std::vector<double>> targets;
};

PreparedData prepare_data(const Model& model, const std::vector<MolecularGraph>& graphs,
                          const std::vector<std::size_t>& indices, const TargetStats& stats);

/// Predictions (normalized) for every graph.
std::vector<std::vector<double>> predict_all(const Model& model, ParamStore& params,
                                             const PreparedData& data);

/// Full training run. `log` receives JSON lines: a meta record, one eval
/// record per evaluation, and a final record. Deterministic for a given seed.
TrainResult train(const Model& model, const std::vector<MolecularGraph>& graphs,
                  const Split& split, const TrainConfig& config, std::ostream* log = nullptr);

/// MAE per selected target in original units.
std::vector<double> evaluate_mae(const Model& model, ParamStore& params,
                                 const TargetStats& stats,
                                 const std::vector<MolecularGraph>& graphs,
                                 const std::vector<std::size_t>& indices);

/// CSV with header target,mae,chemical_accuracy,error_ratio.
std::string error_ratio_csv(const std::vector<std::size_t>& targets,
                            const std::vector<double>& mae);

// ---- checkpoints -----------------------------------------------------------

struct Checkpoint {
  ModelConfig model;
  TargetStats stats;
  ParamStore params;
};

nlohmann::json to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---- random search ---------------------------------------------------------

struct SearchSpace {
  std::size_t steps_min = 3, steps_max = 8;  // T
  std::size_t set2set_min = 1, set2set_max = 12;  // M
  double lr_min = 1e-5, lr_max = 5e-4;
  double decay_start_min = 0.1, decay_start_max = 0.9;
  double decay_factor_min = 0.01, decay_factor_max = 1.0;
  std::vector<MessageFn> messages = {MessageFn::kEdgeNetwork};
  std::size_t trials = 50;
};

struct TrialConfig {
  ModelConfig model;
  TrainConfig train;
};

TrialConfig sample_trial(const SearchSpace& space, const ModelConfig& base_model,
                         const TrainConfig& base_train, Rng& rng);

struct TrialResult {
  std::size_t index = 0;
  TrialConfig config;
  bool failed = false;
  std::string error;
  double valid_score = 0.0;
  std::vector<double> valid_mae;
  std::vector<double> test_mae;
  std::size_t best_step = 0;
};

struct SearchResult {
  std::vector<TrialResult> trials;  // in trial order
  std::vector<std::size_t> ranking;  // successful trials, best first
  const TrialResult& best() const { return trials.at(ranking.at(0)); }
};

/// Trains `space.trials` sampled configurations on `jobs` worker threads.
/// Throws SearchFailedError if every trial fails.
SearchResult random_search(const SearchSpace& space, const ModelConfig& base_model,
                           const TrainConfig& base_train,
                           const std::vector<MolecularGraph>& graphs, const Split& split,
                           std::uint64_t seed, std::size_t jobs = 1);

nlohmann::json to_json(const TrialResult& r);

}  // namespace mpnn
