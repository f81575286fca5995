#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "mpnn/checkpoint.hpp"
#include "mpnn/qm9_io.hpp"
#include "mpnn/training.hpp"

namespace fs = std::filesystem;
using namespace mpnn;

namespace {

const char* kRecord =
    "3\n"
    "gdb %d 0 0 0 1.8 6.3 -0.26 0.07 0.33 19.0 0.021 -76.40 -76.40 -76.40 -76.42 6.0\n"
    "O 0.0 0.0 0.0 -0.4\n"
    "H 0.96 0.0 0.0 0.2\n"
    "H -0.24 0.93 0.0 0.2\n"
    "1600 3700 %d\n"
    "O\tO\n"
    "InChI=1S/H2O/h1H2\tInChI=1S/H2O/h1H2\n";

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mpnn_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) {
    const std::string cmd = std::string(MPNN_CLI_PATH) + " " + args + " > " +
                            (dir_ / "stdout.txt").string() + " 2> " +
                            (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string read(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST_F(CliTest, VerifyExitsZero) {
  EXPECT_EQ(run("verify --graphs 100"), 0) << read(dir_ / "stdout.txt");
}

TEST_F(CliTest, PrepareThreeRecords) {
  fs::create_directories(dir_ / "xyz");
  for (int i = 1; i <= 3; ++i) {
    char buf[512];
    std::snprintf(buf, sizeof buf, kRecord, i, 3750 + i);
    std::ofstream(dir_ / "xyz" / ("dsgdb9nsd_00000" + std::to_string(i) + ".xyz")) << buf;
  }
  ASSERT_EQ(run("prepare " + path("xyz") + " -o " + path("data.jsonl") + " --valid 1 --test 1"), 0)
      << read(dir_ / "stderr.txt");
  const auto graphs = load_dataset(path("data.jsonl"));
  ASSERT_EQ(graphs.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(graphs[i].atoms.size(), 1u);
    EXPECT_EQ(graphs[i].atoms[0].hydrogen_count, 2);
    EXPECT_DOUBLE_EQ(graphs[i].targets[12], 3751.0 + static_cast<double>(i));
  }
  const Split s = split_from_json(nlohmann::json::parse(read(path("data.jsonl.split.json"))));
  EXPECT_EQ(s.train.size() + s.valid.size() + s.test.size(), 3u);
}

TEST_F(CliTest, ZeroCheckpointPredictsTrainingMean) {
  ASSERT_EQ(run("prepare --synthetic 30 -o " + path("d.jsonl") + " --valid 3 --test 3 --seed 4"),
            0)
      << read(dir_ / "stderr.txt");
  const auto graphs = load_dataset(path("d.jsonl"));
  const Split split = split_from_json(nlohmann::json::parse(read(path("d.jsonl.split.json"))));

  ModelConfig mc = enn_s2s_config(16, 1);
  mc.output_dim = 2;
  ParamStore params = Model(mc).init_params(0);
  for (auto& [name, t] : params) {
    for (double& v : t.data()) v = 0.0;
  }
  const TargetStats stats = compute_target_stats(graphs, split.train, {kDegreeSum, kCarbons});
  save_checkpoint(path("zero.json"), Checkpoint{mc, stats, params});

  ASSERT_EQ(run("evaluate --data " + path("d.jsonl") + " --checkpoint " + path("zero.json") +
                " --subset test --predictions " + path("pred.csv")),
            0)
      << read(dir_ / "stderr.txt");
  std::istringstream csv(read(path("pred.csv")));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "index,mu,g");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    std::istringstream row(line);
    std::string idx, a, b;
    std::getline(row, idx, ',');
    std::getline(row, a, ',');
    std::getline(row, b, ',');
    EXPECT_NEAR(std::stod(a), stats.mean[0], 1e-12);
    EXPECT_NEAR(std::stod(b), stats.mean[1], 1e-12);
  }
  EXPECT_EQ(rows, 3u);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run("no-such-command"), 2);
  EXPECT_EQ(run("train --data x.jsonl --message bogus"), 2);
  EXPECT_EQ(run("prepare"), 2);
}

TEST_F(CliTest, MissingFileExitsOne) {
  EXPECT_EQ(run("evaluate --data " + path("absent.jsonl") + " --checkpoint " + path("absent.json")),
            1);
}

}  // namespace
