#include "mpnn/training.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "mpnn/checkpoint.hpp"
#include "mpnn/errors.hpp"

namespace mpnn {

std::vector<std::size_t> parse_target_selection(std::string_view text) {
  if (text == "all") {
    std::vector<std::size_t> all(kNumTargets);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  for (std::size_t i = 0; i < kNumTargets; ++i) {
    if (kTargetNames[i] == text) return {i};
  }
  std::size_t index = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), index);
  if (ec != std::errc{} || ptr != text.data() + text.size() || index >= kNumTargets) {
    throw ConfigError("target must be 'all', a name or an index in [0, 13): '" +
                      std::string(text) + "'");
  }
  return {index};
}

double error_ratio(double mae, std::size_t target_id) {
  if (target_id >= kNumTargets) {
    throw ContractError("unknown target id " + std::to_string(target_id));
  }
  return mae / kChemicalAccuracy[target_id];
}

// ---- target statistics -----------------------------------------------------

std::vector<double> TargetStats::normalize(const std::array<double, kNumTargets>& y) const {
  std::vector<double> out(targets.size());
  for (std::size_t s = 0; s < targets.size(); ++s) out[s] = (y[targets[s]] - mean[s]) / std[s];
  return out;
}

TargetStats compute_target_stats(const std::vector<MolecularGraph>& graphs,
                                 const std::vector<std::size_t>& indices,
                                 const std::vector<std::size_t>& targets) {
  if (indices.empty()) throw ContractError("target statistics need at least one graph");
  TargetStats s;
  s.targets = targets;
  const double n = static_cast<double>(indices.size());
  for (std::size_t t : targets) {
    if (t >= kNumTargets) throw ContractError("unknown target id " + std::to_string(t));
    double mean = 0.0;
    for (std::size_t i : indices) mean += graphs.at(i).targets[t];
    mean /= n;
    double var = 0.0;
    for (std::size_t i : indices) {
      const double d = graphs[i].targets[t] - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / n);
    if (!(sd > 0.0)) {
      throw DegenerateTargetError("target '" + std::string(kTargetNames[t]) +
                                  "' has zero standard deviation on the training split");
    }
    s.mean.push_back(mean);
    s.std.push_back(sd);
  }
  return s;
}

nlohmann::json to_json(const TargetStats& s) {
  return {{"targets", s.targets}, {"mean", s.mean}, {"std", s.std}};
}

TargetStats target_stats_from_json(const nlohmann::json& j) {
  TargetStats s;
  s.targets = j.at("targets").get<std::vector<std::size_t>>();
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  if (s.mean.size() != s.targets.size() || s.std.size() != s.targets.size()) {
    throw ContractError("target stats: length mismatch");
  }
  return s;
}

// ---- config and schedule ---------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (init_lr <= 0.0) throw ConfigError("learning rate must be positive");
  if (decay_start < 0.0 || decay_start > 1.0) {
    throw ConfigError("decay start must be a fraction in [0, 1]");
  }
  if (decay_factor <= 0.0 || decay_factor > 1.0) {
    throw ConfigError("decay factor must be in (0, 1]");
  }
  if (targets.empty()) throw ConfigError("no targets selected");
  for (std::size_t t : targets) {
    if (t >= kNumTargets) throw ConfigError("unknown target id " + std::to_string(t));
  }
  if (eval_every == 0) throw ConfigError("evaluation interval must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},     {"total_steps", c.total_steps},
          {"init_lr", c.init_lr},           {"decay_start", c.decay_start},
          {"decay_factor", c.decay_factor}, {"seed", c.seed},
          {"targets", c.targets},           {"eval_every", c.eval_every}};
}

double lr_at(std::size_t step, const TrainConfig& c) {
  const double total = static_cast<double>(c.total_steps);
  const double start = c.decay_start * total;
  const double s = static_cast<double>(step);
  const double final_lr = c.init_lr * c.decay_factor;
  if (s <= start) return c.init_lr;
  if (s >= total) return final_lr;
  return c.init_lr + (final_lr - c.init_lr) * (s - start) / (total - start);
}

// ---- Adam ------------------------------------------------------------------

void Adam::step(ParamStore& params, double lr) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (auto& [name, tensor] : params) {
    if (tensor.has_grad()) {
      for (double g : tensor.grad()) {
        if (!std::isfinite(g)) throw DivergenceError("non-finite gradient for '" + name + "'");
      }
    }
  }
  for (auto& [name, tensor] : params) {
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(tensor.numel(), 0.0);
      v.assign(tensor.numel(), 0.0);
    }
    const bool has = tensor.has_grad();
    std::span<double> w = tensor.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = has ? tensor.grad()[i] : 0.0;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
    if (has) tensor.zero_grad();
  }
}

// ---- metrics ---------------------------------------------------------------

LossMetrics loss_and_metrics(const std::vector<std::vector<double>>& pred,
                             const std::vector<std::vector<double>>& target,
                             const TargetStats& stats) {
  if (pred.size() != target.size()) throw DimensionError("prediction/target count mismatch");
  const std::size_t k = stats.targets.size();
  LossMetrics out;
  out.mae.assign(k, 0.0);
  if (pred.empty()) return out;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != k || target[i].size() != k) {
      throw DimensionError("prediction width does not match the selected targets");
    }
    for (std::size_t s = 0; s < k; ++s) {
      const double diff = pred[i][s] - target[i][s];
      out.mse += diff * diff;
      out.mae[s] += std::abs(stats.denormalize(pred[i][s], s) -
                             stats.denormalize(target[i][s], s));
    }
  }
  const double n = static_cast<double>(pred.size());
  out.mse /= n * static_cast<double>(k);
  for (double& m : out.mae) m /= n;
  return out;
}

// ---- splits ----------------------------------------------------------------

std::uint64_t Split::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto byte = [&h](unsigned char b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (const auto* part : {&train, &valid, &test}) {
    for (std::size_t idx : *part) {
      auto v = static_cast<std::uint64_t>(idx);
      for (int k = 0; k < 8; ++k) byte(static_cast<unsigned char>(v >> (8 * k)));
    }
    byte(0xff);
  }
  return h;
}

std::string Split::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

Split split_dataset(std::size_t n, std::uint64_t seed, std::size_t valid, std::size_t test) {
  if (n < valid + test + 1) {
    throw ContractError("dataset of " + std::to_string(n) + " molecules is too small for " +
                        std::to_string(valid) + " validation and " + std::to_string(test) +
                        " test molecules plus a training set");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  Split s;
  s.valid.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(valid));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(valid),
                order.begin() + static_cast<std::ptrdiff_t>(valid + test));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(valid + test), order.end());
  for (auto* part : {&s.train, &s.valid, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

nlohmann::json to_json(const Split& s) {
  return {{"train", s.train}, {"valid", s.valid}, {"test", s.test}, {"hash", s.hash_hex()}};
}

Split split_from_json(const nlohmann::json& j) {
  Split s;
  s.train = j.at("train").get<std::vector<std::size_t>>();
  s.valid = j.at("valid").get<std::vector<std::size_t>>();
  s.test = j.at("test").get<std::vector<std::size_t>>();
  if (j.contains("hash") && j.at("hash").get<std::string>() != s.hash_hex()) {
    throw ContractError("split manifest hash does not match its contents");
  }
  return s;
}

nlohmann::json to_json(const EvalRecord& r) {
  return {{"type", "eval"},           {"step", r.step},
          {"lr", r.lr},               {"train_mse", r.train_mse},
          {"train_mae", r.train_mae}, {"valid_mae_per_target", r.valid_mae},
          {"valid_score", r.valid_score}};
}

// ---- training --------------------------------------------------------------

PreparedData prepare_data(const Model& model, const std::vector<MolecularGraph>& graphs,
                          const std::vector<std::size_t>& indices, const TargetStats& stats) {
  PreparedData data;
  data.graphs.reserve(indices.size());
  for (std::size_t i : indices) {
    const MolecularGraph& g = graphs.at(i);
    data.graphs.push_back(model.prepare(g));
    data.targets.push_back(stats.normalize(g.targets));
  }
  return data;
}

std::vector<std::vector<double>> predict_all(const Model& model, ParamStore& params,
                                             const PreparedData& data) {
  std::vector<std::vector<double>> out;
  out.reserve(data.graphs.size());
  for (const EncodedGraph& g : data.graphs) out.push_back(model.predict(params, g));
  return out;
}

namespace {

// Metrics on the training split use at most this many graphs so that
// evaluation stays cheap on full-size datasets.
constexpr std::size_t kTrainEvalLimit = 5000;

double normalized_score(const std::vector<double>& mae, const TargetStats& stats) {
  double s = 0.0;
  for (std::size_t i = 0; i < mae.size(); ++i) s += mae[i] / stats.std[i];
  return s / static_cast<double>(mae.size());
}

}  // namespace

TrainResult train(const Model& model, const std::vector<MolecularGraph>& graphs,
                  const Split& split, const TrainConfig& config, std::ostream* log) {
  config.validate();
  if (model.config().output_dim != config.targets.size()) {
    throw ConfigError("model output width " + std::to_string(model.config().output_dim) +
                      " does not match " + std::to_string(config.targets.size()) +
                      " selected targets");
  }
  if (split.train.empty()) throw ContractError("empty training split");

  TrainResult result;
  result.stats = compute_target_stats(graphs, split.train, config.targets);
  const TargetStats& stats = result.stats;

  const PreparedData train_data = prepare_data(model, graphs, split.train, stats);
  std::vector<std::size_t> train_eval_idx(
      split.train.begin(),
      split.train.begin() +
          static_cast<std::ptrdiff_t>(std::min(split.train.size(), kTrainEvalLimit)));
  const PreparedData train_eval = prepare_data(model, graphs, train_eval_idx, stats);
  const PreparedData valid_data = prepare_data(model, graphs, split.valid, stats);

  ParamStore params = model.init_params(Rng::derive(config.seed, 0));
  Rng order_rng(Rng::derive(config.seed, 1));
  Adam adam;

  if (log) {
    nlohmann::json meta = {
        {"type", "meta"},
        {"model", to_json(model.config())},
        {"train", to_json(config)},
        {"adam",
         {{"beta1", adam.config().beta1},
          {"beta2", adam.config().beta2},
          {"eps", adam.config().eps}}},
        {"split", {{"hash", split.hash_hex()},
                   {"train", split.train.size()},
                   {"valid", split.valid.size()},
                   {"test", split.test.size()}}},
        {"train_eval_size", train_eval_idx.size()},
        {"target_stats", to_json(stats)},
        {"num_params", params.total_values()},
    };
    *log << meta.dump() << '\n';
  }

  double best_score = std::numeric_limits<double>::infinity();
  auto evaluate = [&](std::size_t step) {
    EvalRecord r;
    r.step = step;
    r.lr = lr_at(step, config);
    const LossMetrics tm = loss_and_metrics(predict_all(model, params, train_eval),
                                            train_eval.targets, stats);
    r.train_mse = tm.mse;
    r.train_mae = tm.mae;
    if (!valid_data.graphs.empty()) {
      r.valid_mae =
          loss_and_metrics(predict_all(model, params, valid_data), valid_data.targets, stats)
              .mae;
      r.valid_score = normalized_score(r.valid_mae, stats);
    } else {
      r.valid_score = normalized_score(r.train_mae, stats);
    }
    if (r.valid_score < best_score) {
      best_score = r.valid_score;
      result.best_params = params;
      result.best_step = step;
    }
    if (log) *log << to_json(r).dump() << '\n';
    result.history.push_back(std::move(r));
  };

  std::vector<std::size_t> order(train_data.graphs.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const std::size_t width = config.targets.size();
  const double loss_scale = 1.0 / static_cast<double>(config.batch_size * width);

  evaluate(0);
  for (std::size_t step = 1; step <= config.total_steps; ++step) {
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        order_rng.shuffle(std::span<std::size_t>(order));
        cursor = 0;
      }
      const std::size_t i = order[cursor++];
      Tape tape;
      Var pred = model.forward(tape, params, train_data.graphs[i]);
      Var target = tape.constant(Tensor(Shape{width}, train_data.targets[i]));
      Var diff = pred - target;
      tape.backward(scale(sum(diff * diff), loss_scale));
    }
    adam.step(params, lr_at(step - 1, config));
    if (step % config.eval_every == 0 || step == config.total_steps) evaluate(step);
  }

  result.final_params = params;
  if (!split.test.empty()) {
    result.test_mae = evaluate_mae(model, result.best_params, stats, graphs, split.test);
  }
  if (log) {
    nlohmann::json fin = {{"type", "final"},
                          {"best_step", result.best_step},
                          {"best_valid_score", best_score},
                          {"test_mae_per_target", result.test_mae}};
    *log << fin.dump() << '\n';
  }
  return result;
}

std::vector<double> evaluate_mae(const Model& model, ParamStore& params,
                                 const TargetStats& stats,
                                 const std::vector<MolecularGraph>& graphs,
                                 const std::vector<std::size_t>& indices) {
  const PreparedData data = prepare_data(model, graphs, indices, stats);
  return loss_and_metrics(predict_all(model, params, data), data.targets, stats).mae;
}

std::string error_ratio_csv(const std::vector<std::size_t>& targets,
                            const std::vector<double>& mae) {
  if (targets.size() != mae.size()) throw DimensionError("targets/mae length mismatch");
  std::string out = "target,mae,chemical_accuracy,error_ratio\n";
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const std::size_t t = targets[i];
    out += std::string(kTargetNames.at(t)) + ',' + nlohmann::json(mae[i]).dump() + ',' +
           nlohmann::json(kChemicalAccuracy[t]).dump() + ',' +
           nlohmann::json(error_ratio(mae[i], t)).dump() + '\n';
  }
  return out;
}

// ---- checkpoints -----------------------------------------------------------

nlohmann::json to_json(const Checkpoint& c) {
  return {{"format", "mpnn-checkpoint"},
          {"version", 1},
          {"model", to_json(c.model)},
          {"target_stats", to_json(c.stats)},
          {"params", params_to_json(c.params)}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "mpnn-checkpoint") {
    throw ContractError("not an mpnn-checkpoint document");
  }
  try {
    Checkpoint c{model_config_from_json(j.at("model")),
                 target_stats_from_json(j.at("target_stats")),
                 params_from_json(j.at("params"))};
    if (c.stats.targets.size() != c.model.output_dim) {
      throw ContractError("checkpoint target count does not match the model output");
    }
    // Every parameter the model expects must be present with the right shape.
    const ParamStore expected = Model(c.model).init_params(0);
    for (const auto& [name, t] : expected) {
      if (!c.params.contains(name)) throw ContractError("checkpoint lacks '" + name + "'");
      if (c.params.at(name).shape() != t.shape()) {
        throw ContractError("checkpoint tensor '" + name + "' has shape " +
                            shape_str(c.params.at(name).shape()) + ", expected " +
                            shape_str(t.shape()));
      }
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_file_atomic(path, to_json(c).dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return checkpoint_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ContractError(path.string() + ": " + e.what());
  }
}

// ---- random search ---------------------------------------------------------

TrialConfig sample_trial(const SearchSpace& space, const ModelConfig& base_model,
                         const TrainConfig& base_train, Rng& rng) {
  TrialConfig t{base_model, base_train};
  t.model.steps = static_cast<std::size_t>(rng.uniform_int(
      static_cast<std::int64_t>(space.steps_min), static_cast<std::int64_t>(space.steps_max)));
  t.model.set2set_steps = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(space.set2set_min),
                      static_cast<std::int64_t>(space.set2set_max)));
  t.train.init_lr = rng.uniform(space.lr_min, space.lr_max);
  t.train.decay_start = rng.uniform(space.decay_start_min, space.decay_start_max);
  t.train.decay_factor = rng.uniform(space.decay_factor_min, space.decay_factor_max);
  if (space.messages.empty()) throw ConfigError("search space has no message functions");
  t.model.message = space.messages[rng.index(space.messages.size())];
  // matmul messages need a discrete edge alphabet.
  if (t.model.message == MessageFn::kMatmul && t.model.edge_repr == EdgeRepr::kRawDistance) {
    t.model.edge_repr = EdgeRepr::kDistanceBins;
  }
  return t;
}

nlohmann::json to_json(const TrialResult& r) {
  nlohmann::json j = {{"trial", r.index},
                      {"model", to_json(r.config.model)},
                      {"train", to_json(r.config.train)},
                      {"failed", r.failed}};
  if (r.failed) {
    j["error"] = r.error;
  } else {
    j["valid_score"] = r.valid_score;
    j["valid_mae_per_target"] = r.valid_mae;
    j["test_mae_per_target"] = r.test_mae;
    j["best_step"] = r.best_step;
  }
  return j;
}

SearchResult random_search(const SearchSpace& space, const ModelConfig& base_model,
                           const TrainConfig& base_train,
                           const std::vector<MolecularGraph>& graphs, const Split& split,
                           std::uint64_t seed, std::size_t jobs) {
  if (space.trials == 0) throw ConfigError("search budget must be at least one trial");
  SearchResult result;
  result.trials.resize(space.trials);
  for (std::size_t i = 0; i < space.trials; ++i) {
    Rng rng(Rng::derive(seed, i));
    TrialResult& r = result.trials[i];
    r.index = i;
    r.config = sample_trial(space, base_model, base_train, rng);
    r.config.train.seed = Rng::derive(seed, space.trials + i);
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < space.trials; i = next++) {
      TrialResult& r = result.trials[i];
      try {
        const Model model(r.config.model);
        TrainResult tr = train(model, graphs, split, r.config.train);
        const EvalRecord* best = nullptr;
        for (const EvalRecord& e : tr.history) {
          if (e.step == tr.best_step) best = &e;
        }
        r.valid_score = best->valid_score;
        r.valid_mae = best->valid_mae.empty() ? best->train_mae : best->valid_mae;
        r.test_mae = tr.test_mae;
        r.best_step = tr.best_step;
      } catch (const Error& e) {
        r.failed = true;
        r.error = e.what();
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(jobs, space.trials));
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < n_workers; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  for (const TrialResult& r : result.trials) {
    if (!r.failed) result.ranking.push_back(r.index);
  }
  if (result.ranking.empty()) {
    throw SearchFailedError("all " + std::to_string(space.trials) + " trials failed; first: " +
                            result.trials.front().error);
  }
  std::stable_sort(result.ranking.begin(), result.ranking.end(),
                   [&](std::size_t a, std::size_t b) {
                     return result.trials[a].valid_score < result.trials[b].valid_score;
                   });
  return result;
}

}  // namespace mpnn
