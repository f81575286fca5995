// mpnn: dataset preparation, training, evaluation, random search and the
// self-checks. Usage errors exit with 2, runtime failures with 1.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mpnn/checkpoint.hpp"
#include "mpnn/errors.hpp"
#include "mpnn/model.hpp"
#include "mpnn/qm9_io.hpp"
#include "mpnn/training.hpp"
#include "mpnn/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Raised for flag combinations CLI11 cannot express; maps to exit 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelFlags {
  std::string edge_repr = "raw";
  std::string message = "edgenet";
  std::string readout = "set2set";
  std::string update = "gru";
  std::string activation = "softplus";
  std::size_t towers = 1;
  std::size_t dim = 32;
  std::size_t mp_steps = 3;
  std::size_t set2set_steps = 6;
  std::size_t master_dim = 0;
  bool master_in_readout = true;
  bool virtual_edges = false;
  bool explicit_h = false;
  bool charge = false;
};

struct TrainFlags {
  std::size_t steps = 2000;
  std::size_t batch = 20;
  double lr = 1e-4;
  double decay_start = 0.5;
  double decay_factor = 0.1;
  std::size_t eval_every = 1000;
  std::string targets = "0";
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--edge-repr", f.edge_repr, "Edge representation")
      ->check(CLI::IsMember({"chemical", "bins", "raw"}))
      ->capture_default_str();
  cmd->add_option("--message", f.message, "Message function")
      ->check(CLI::IsMember({"matmul", "edgenet", "pair", "dtnn"}))
      ->capture_default_str();
  cmd->add_option("--readout", f.readout, "Readout function")
      ->check(CLI::IsMember({"ggnn", "set2set", "dtnnsum"}))
      ->capture_default_str();
  cmd->add_option("--update", f.update, "Update function")
      ->check(CLI::IsMember({"gru", "residual"}))
      ->capture_default_str();
  cmd->add_option("--activation", f.activation, "Hidden MLP activation")
      ->check(CLI::IsMember({"softplus", "relu"}))
      ->capture_default_str();
  cmd->add_option("--towers", f.towers, "Number of towers k")->capture_default_str();
  cmd->add_option("--dim", f.dim, "Node state width d")->capture_default_str();
  cmd->add_option("--mp-steps", f.mp_steps, "Message passing steps T")->capture_default_str();
  cmd->add_option("--set2set-steps", f.set2set_steps, "set2set steps M")
      ->capture_default_str();
  cmd->add_option("--master-node", f.master_dim, "Master node width (0 disables)")
      ->capture_default_str();
  cmd->add_flag("--master-in-readout,!--no-master-in-readout", f.master_in_readout,
                "Include the master node in the readout");
  cmd->add_flag("--virtual-edges", f.virtual_edges, "Connect every pair of atoms");
  cmd->add_flag("--explicit-h", f.explicit_h, "Hydrogens as nodes");
  cmd->add_flag("--charge", f.charge, "Partial charge as an atom feature");
}

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--steps", f.steps, "Training steps")->capture_default_str();
  cmd->add_option("--batch", f.batch, "Batch size")->capture_default_str();
  cmd->add_option("--lr", f.lr, "Initial learning rate")->capture_default_str();
  cmd->add_option("--decay-start", f.decay_start, "Decay start as a fraction of the steps")
      ->capture_default_str();
  cmd->add_option("--decay-factor", f.decay_factor, "Final lr / initial lr")
      ->capture_default_str();
  cmd->add_option("--eval-every", f.eval_every, "Evaluation interval")->capture_default_str();
  cmd->add_option("--targets", f.targets, "all, a target index or a target name")
      ->capture_default_str();
}

mpnn::ModelConfig to_model_config(const ModelFlags& f, std::size_t outputs) {
  mpnn::ModelConfig c;
  c.edge_repr = mpnn::parse_edge_repr(f.edge_repr);
  c.message = mpnn::parse_message_fn(f.message);
  c.readout = mpnn::parse_readout_fn(f.readout);
  c.update = mpnn::parse_update_fn(f.update);
  c.activation = mpnn::parse_activation(f.activation);
  c.towers = f.towers;
  c.node_dim = f.dim;
  c.steps = f.mp_steps;
  c.set2set_steps = f.set2set_steps;
  c.master_dim = f.master_dim;
  c.master_in_readout = f.master_in_readout;
  c.virtual_edges = f.virtual_edges;
  c.explicit_hydrogens = f.explicit_h;
  c.include_charge = f.charge;
  c.output_dim = outputs;
  c.validate();
  return c;
}

mpnn::TrainConfig to_train_config(const TrainFlags& f, std::uint64_t seed) {
  mpnn::TrainConfig c;
  c.total_steps = f.steps;
  c.batch_size = f.batch;
  c.init_lr = f.lr;
  c.decay_start = f.decay_start;
  c.decay_factor = f.decay_factor;
  c.eval_every = f.eval_every;
  c.seed = seed;
  c.targets = mpnn::parse_target_selection(f.targets);
  c.validate();
  return c;
}

// ---- prepare ----------------------------------------------------------------

std::vector<fs::path> collect_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const std::string& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::directory_iterator(p)) {
        if (entry.is_regular_file() && entry.path().extension() == ".xyz") {
          found.push_back(entry.path());
        }
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(p)) {
      files.push_back(p);
    } else {
      throw mpnn::Error("no such file or directory: " + in);
    }
  }
  return files;
}

// Companion bond file: foo.xyz -> foo.bonds.json.
fs::path bond_file_for(const fs::path& xyz) {
  fs::path p = xyz;
  p.replace_extension(".bonds.json");
  return p;
}

std::vector<mpnn::MolecularGraph> read_xyz_file(const fs::path& path, bool explicit_h) {
  const std::string text = mpnn::read_file(path);
  std::vector<mpnn::Qm9Record> records;
  try {
    records = mpnn::parse_qm9_records(text);
  } catch (const mpnn::ParseError& e) {
    throw mpnn::Error(path.string() + ": " + e.what());
  }
  std::optional<std::vector<mpnn::BondSpec>> bonds;
  const fs::path bond_path = bond_file_for(path);
  if (fs::exists(bond_path)) {
    if (records.size() != 1) {
      throw mpnn::Error(bond_path.string() + ": bond file requires a single-record input");
    }
    bonds = mpnn::parse_bond_file(mpnn::read_file(bond_path));
  }
  std::vector<mpnn::MolecularGraph> graphs;
  graphs.reserve(records.size());
  for (const mpnn::Qm9Record& r : records) {
    graphs.push_back(mpnn::record_to_graph(r, explicit_h, bonds));
  }
  return graphs;
}

// Files are parsed on `jobs` threads; output keeps the input order.
std::vector<mpnn::MolecularGraph> read_xyz_files(const std::vector<fs::path>& files,
                                                 bool explicit_h, std::size_t jobs) {
  std::vector<std::vector<mpnn::MolecularGraph>> parts(files.size());
  std::vector<std::string> errors(files.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < files.size(); i = next++) {
      try {
        parts[i] = read_xyz_file(files[i], explicit_h);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(jobs, files.size()); ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const std::string& e : errors) {
    if (!e.empty()) throw mpnn::Error(e);
  }
  std::vector<mpnn::MolecularGraph> graphs;
  for (auto& part : parts) {
    for (auto& g : part) graphs.push_back(std::move(g));
  }
  return graphs;
}

struct PrepareFlags {
  std::vector<std::string> inputs;
  std::string output;
  std::string split_path;
  std::size_t synthetic = 0;
  bool explicit_h = false;
  long valid = -1;
  long test = -1;
  std::size_t jobs = 1;
};

int run_prepare(const PrepareFlags& f, std::uint64_t seed) {
  if (f.inputs.empty() == (f.synthetic == 0)) {
    throw UsageError("prepare needs either input files or --synthetic N");
  }
  std::vector<mpnn::MolecularGraph> graphs =
      f.synthetic > 0 ? mpnn::generate_synthetic(f.synthetic, seed, f.explicit_h)
                      : read_xyz_files(collect_inputs(f.inputs), f.explicit_h, f.jobs);
  if (graphs.empty()) throw mpnn::Error("no molecules found");
  // Default hold-out: 10000 each, reduced to a tenth of the data when small.
  const std::size_t n = graphs.size();
  const std::size_t fallback = std::min<std::size_t>(10000, n / 10);
  const std::size_t valid = f.valid >= 0 ? static_cast<std::size_t>(f.valid) : fallback;
  const std::size_t test = f.test >= 0 ? static_cast<std::size_t>(f.test) : fallback;
  const mpnn::Split split = mpnn::split_dataset(n, seed, valid, test);

  const fs::path out(f.output);
  const fs::path split_path = f.split_path.empty() ? fs::path(f.output + ".split.json")
                                                   : fs::path(f.split_path);
  mpnn::save_dataset(out, graphs);
  json manifest = mpnn::to_json(split);
  manifest["seed"] = seed;
  manifest["dataset"] = out.filename().string();
  mpnn::write_file_atomic(split_path, manifest.dump() + "\n");
  std::cout << "wrote " << n << " molecules to " << out.string() << "\n"
            << "split " << split.train.size() << "/" << split.valid.size() << "/"
            << split.test.size() << " (train/valid/test), hash " << split.hash_hex()
            << ", manifest " << split_path.string() << "\n";
  return 0;
}

// ---- train / evaluate / search ---------------------------------------------

struct DataFlags {
  std::string data;
  std::string split;
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
  cmd->add_option("--data", f.data, "Dataset (JSON lines)")->required();
  cmd->add_option("--split", f.split, "Split manifest (default: <data>.split.json)");
}

struct LoadedData {
  std::vector<mpnn::MolecularGraph> graphs;
  mpnn::Split split;
};

LoadedData load_data(const DataFlags& f) {
  LoadedData d;
  d.graphs = mpnn::load_dataset(f.data);
  const std::string split_path = f.split.empty() ? f.data + ".split.json" : f.split;
  d.split = mpnn::split_from_json(json::parse(mpnn::read_file(split_path)));
  const std::size_t total = d.split.train.size() + d.split.valid.size() + d.split.test.size();
  if (total != d.graphs.size()) {
    throw mpnn::Error("split manifest covers " + std::to_string(total) + " molecules, dataset has " +
                      std::to_string(d.graphs.size()));
  }
  return d;
}

void check_hydrogen_mode(const mpnn::ModelConfig& mc,
                         const std::vector<mpnn::MolecularGraph>& graphs) {
  for (const auto& g : graphs) {
    if (g.explicit_hydrogens != mc.explicit_hydrogens) {
      throw mpnn::Error(std::string("dataset was prepared ") +
                        (g.explicit_hydrogens ? "with" : "without") +
                        " explicit hydrogens; pass the matching --explicit-h setting");
    }
  }
}

struct TrainOutputs {
  std::string checkpoint = "checkpoint.json";
  std::string log = "run.jsonl";
};

int run_train(const DataFlags& df, const ModelFlags& mf, const TrainFlags& tf,
              const TrainOutputs& out, std::uint64_t seed) {
  const mpnn::TrainConfig tc = to_train_config(tf, seed);
  const mpnn::ModelConfig mc = to_model_config(mf, tc.targets.size());
  const LoadedData d = load_data(df);
  check_hydrogen_mode(mc, d.graphs);
  const mpnn::Model model(mc);
  std::ostringstream log;
  mpnn::TrainResult r = mpnn::train(model, d.graphs, d.split, tc, &log);
  mpnn::write_file_atomic(out.log, log.str());
  mpnn::save_checkpoint(out.checkpoint, mpnn::Checkpoint{mc, r.stats, r.best_params});
  std::cout << "best step " << r.best_step << ", checkpoint " << out.checkpoint << ", log "
            << out.log << "\n";
  if (!r.test_mae.empty()) std::cout << mpnn::error_ratio_csv(tc.targets, r.test_mae);
  return 0;
}

struct EvaluateFlags {
  std::string checkpoint;
  std::string subset = "test";
  std::string report;
  std::string predictions;
};

int run_evaluate(const DataFlags& df, const EvaluateFlags& ef) {
  mpnn::Checkpoint ck = mpnn::load_checkpoint(ef.checkpoint);
  const LoadedData d = load_data(df);
  check_hydrogen_mode(ck.model, d.graphs);
  std::vector<std::size_t> indices;
  if (ef.subset == "test") {
    indices = d.split.test;
  } else if (ef.subset == "valid") {
    indices = d.split.valid;
  } else if (ef.subset == "train") {
    indices = d.split.train;
  } else {
    indices.resize(d.graphs.size());
    std::iota(indices.begin(), indices.end(), 0);
  }
  if (indices.empty()) throw mpnn::Error("the " + ef.subset + " split is empty");
  const mpnn::Model model(ck.model);
  const std::vector<double> mae =
      mpnn::evaluate_mae(model, ck.params, ck.stats, d.graphs, indices);
  const std::string csv = mpnn::error_ratio_csv(ck.stats.targets, mae);
  if (ef.report.empty()) {
    std::cout << csv;
  } else {
    mpnn::write_file_atomic(ef.report, csv);
  }
  if (!ef.predictions.empty()) {
    std::ostringstream p;
    p << "index";
    for (std::size_t t : ck.stats.targets) p << "," << mpnn::kTargetNames[t];
    p << "\n";
    p.precision(17);
    for (std::size_t i : indices) {
      const auto y = model.predict(ck.params, model.prepare(d.graphs[i]));
      p << i;
      for (std::size_t s = 0; s < y.size(); ++s) p << "," << ck.stats.denormalize(y[s], s);
      p << "\n";
    }
    mpnn::write_file_atomic(ef.predictions, p.str());
  }
  return 0;
}

struct SearchFlags {
  std::size_t trials = 50;
  std::size_t jobs = 1;
  std::string output = "search.jsonl";
};

int run_search(const DataFlags& df, const ModelFlags& mf, const TrainFlags& tf,
               const SearchFlags& sf, std::uint64_t seed) {
  const mpnn::TrainConfig tc = to_train_config(tf, seed);
  const mpnn::ModelConfig mc = to_model_config(mf, tc.targets.size());
  if (sf.trials == 0) throw UsageError("--trials must be at least 1");
  if (sf.jobs == 0) throw UsageError("--jobs must be at least 1");
  const LoadedData d = load_data(df);
  check_hydrogen_mode(mc, d.graphs);
  mpnn::SearchSpace space;
  space.trials = sf.trials;
  space.messages = {mc.message};
  const mpnn::SearchResult r =
      mpnn::random_search(space, mc, tc, d.graphs, d.split, seed, sf.jobs);
  std::ostringstream out;
  for (const auto& t : r.trials) out << mpnn::to_json(t).dump() << "\n";
  mpnn::write_file_atomic(sf.output, out.str());
  std::cout << r.ranking.size() << "/" << r.trials.size() << " trials succeeded\n";
  for (std::size_t rank = 0; rank < r.ranking.size(); ++rank) {
    const auto& t = r.trials[r.ranking[rank]];
    std::printf("%3zu. trial %zu  valid score %.6g  T=%zu M=%zu lr=%.3g\n", rank + 1, t.index,
                t.valid_score, t.config.model.steps, t.config.model.set2set_steps,
                t.config.train.init_lr);
  }
  return 0;
}

// ---- bench-towers / verify ---------------------------------------------------

int run_bench(std::uint64_t seed, std::size_t repeats, std::size_t dim) {
  const auto b = mpnn::verify::bench_towers(seed, repeats, dim);
  std::printf("towers  message multiplies  wall clock (ms)\n");
  std::printf("k=1     %17llu  %15.3f\n", static_cast<unsigned long long>(b.multiplies_k1),
              b.seconds_k1 * 1e3);
  std::printf("k=8     %17llu  %15.3f\n", static_cast<unsigned long long>(b.multiplies_k8),
              b.seconds_k8 * 1e3);
  std::printf("ratio   %17.4f  %15.4f\n", b.ratio(), b.seconds_k8 / b.seconds_k1);
  return 0;
}

int run_verify(const std::string& which, std::uint64_t seed, std::size_t graphs) {
  using mpnn::verify::CheckResult;
  std::vector<CheckResult> checks;
  auto add = [&](std::vector<CheckResult> more) {
    for (auto& c : more) {
      std::printf("%s %s: %.3g (limit %.3g)%s%s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                  c.value, c.limit, c.detail.empty() ? "" : ", ", c.detail.c_str());
      std::fflush(stdout);
      checks.push_back(std::move(c));
    }
  };
  const bool all = which == "all";
  if (all || which == "gradients") add(mpnn::verify::check_gradients(seed));
  if (all || which == "invariance") add(mpnn::verify::check_invariance(seed + 1, graphs));
  if (all || which == "spectral") add(mpnn::verify::check_spectral(seed + 2, graphs));
  if (all || which == "bins") add(mpnn::verify::check_distance_bins(seed + 3));
  if (all || which == "towers") add(mpnn::verify::check_towers(seed + 4));
  const auto failed = std::count_if(checks.begin(), checks.end(),
                                    [](const CheckResult& c) { return !c.passed; });
  std::printf("%zu checks, %ld failed\n", checks.size(), static_cast<long>(failed));
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Message passing neural networks for molecular property prediction"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Random seed")->capture_default_str();

  PrepareFlags pf;
  auto* prepare = app.add_subcommand("prepare", "XYZ files or synthetic molecules -> dataset");
  prepare->add_option("inputs", pf.inputs, "XYZ files or directories of .xyz files");
  prepare->add_option("-o,--output", pf.output, "Dataset path")->required();
  prepare->add_option("--split-out", pf.split_path, "Split manifest (default: <output>.split.json)");
  prepare->add_option("--synthetic", pf.synthetic, "Generate N synthetic molecules instead");
  prepare->add_flag("--explicit-h", pf.explicit_h, "Hydrogens as nodes");
  prepare->add_option("--valid", pf.valid, "Validation size");
  prepare->add_option("--test", pf.test, "Test size");
  prepare->add_option("--jobs", pf.jobs, "Parser threads")->capture_default_str();
  prepare->add_option("--seed", seed, "Random seed");

  DataFlags df;
  ModelFlags mf;
  TrainFlags tf;
  TrainOutputs to;
  auto* train = app.add_subcommand("train", "Train one configuration");
  add_data_flags(train, df);
  add_model_flags(train, mf);
  add_train_flags(train, tf);
  train->add_option("-o,--checkpoint", to.checkpoint, "Checkpoint path")->capture_default_str();
  train->add_option("--log", to.log, "Run log (JSON lines)")->capture_default_str();
  train->add_option("--seed", seed, "Random seed");

  EvaluateFlags ef;
  auto* evaluate = app.add_subcommand("evaluate", "Per-target MAE and error ratio");
  add_data_flags(evaluate, df);
  evaluate->add_option("--checkpoint", ef.checkpoint, "Checkpoint path")->required();
  evaluate->add_option("--subset", ef.subset, "Which molecules to score")
      ->check(CLI::IsMember({"test", "valid", "train", "all"}))
      ->capture_default_str();
  evaluate->add_option("-o,--report", ef.report, "CSV report (default: stdout)");
  evaluate->add_option("--predictions", ef.predictions, "Per-molecule predictions CSV");

  SearchFlags sf;
  auto* search = app.add_subcommand("search", "Random hyperparameter search");
  add_data_flags(search, df);
  add_model_flags(search, mf);
  add_train_flags(search, tf);
  search->add_option("--trials", sf.trials, "Number of trials")->capture_default_str();
  search->add_option("--jobs", sf.jobs, "Worker threads")->capture_default_str();
  search->add_option("-o,--output", sf.output, "Trial results (JSON lines)")
      ->capture_default_str();
  search->add_option("--seed", seed, "Random seed");

  std::size_t repeats = 3;
  std::size_t bench_dim = 200;
  auto* bench = app.add_subcommand("bench-towers", "Message cost for k = 1 and k = 8");
  bench->add_option("--repeats", repeats, "Timing repeats")->capture_default_str();
  bench->add_option("--dim", bench_dim, "Node state width d")->capture_default_str();
  bench->add_option("--seed", seed, "Random seed");

  std::string which = "all";
  std::size_t verify_graphs = 100;
  auto* verify = app.add_subcommand("verify", "Run the self-checks");
  verify->add_option("suite", which, "Which checks to run")
      ->check(CLI::IsMember({"all", "gradients", "invariance", "spectral", "bins", "towers"}))
      ->capture_default_str();
  verify->add_option("--graphs", verify_graphs, "Random graphs per suite")
      ->capture_default_str();
  verify->add_option("--seed", seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*prepare) return run_prepare(pf, seed);
    if (*train) return run_train(df, mf, tf, to, seed);
    if (*evaluate) return run_evaluate(df, ef);
    if (*search) return run_search(df, mf, tf, sf, seed);
    if (*bench) return run_bench(seed, repeats, bench_dim);
    if (*verify) return run_verify(which, seed, verify_graphs);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mpnn::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
