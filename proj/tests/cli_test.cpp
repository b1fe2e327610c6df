#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "metaid/cli.hpp"
#include "support.hpp"

namespace metaid {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_command(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / fmt::format("metaid_cli_{}_{}", info->name(), ::getpid());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Small population shared by the experiment commands.
  std::string population(std::size_t users = 12, std::size_t tweets = 20) {
    const auto p = path("pop.jsonl");
    const auto r = run({"generate", "--users", std::to_string(users), "--tweets", std::to_string(tweets), "--seed", "3",
                        "-o", p, "--out-dir", path("gen")});
    EXPECT_EQ(r.code, 0) << r.err;
    return p;
  }

  fs::path dir_;
};

TEST_F(Cli, GenerateWritesUsersTimesTweetsLines) {
  const auto r = run({"generate", "--users", "100", "--tweets", "200", "--sep", "5.0", "--seed", "7", "-o",
                      path("pop.jsonl"), "--out-dir", path("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(slurp(path("pop.jsonl"))), 20000u);
  const auto manifest = nlohmann::json::parse(slurp(path("o/generate.manifest.json")));
  EXPECT_EQ(manifest["toolkit_version"], std::string(kToolkitVersion));
  EXPECT_EQ(manifest["master_seed"], 7);
  EXPECT_EQ(manifest["resolved"]["population"]["users"], 100);
  EXPECT_FALSE(manifest.contains("workers"));
}

TEST_F(Cli, IdentifyReportHasOneRowPerMetric) {
  const auto r0 = run({"generate", "--users", "100", "--tweets", "200", "--seed", "7", "-o", path("pop.jsonl"),
                       "--out-dir", path("g")});
  ASSERT_EQ(r0.code, 0) << r0.err;
  const std::vector<std::string> cmd{"identify", "--data", path("pop.jsonl"), "--algo", "knn", "--features",
                                     "friend_count,follower_count", "--users", "100", "--reps", "10", "--seed", "7",
                                     "--out-dir", path("a")};
  const auto r = run(cmd);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = slurp(path("a/report.csv"));
  EXPECT_EQ(count_lines(report), 8u);
  EXPECT_NE(report.find("identify,knn,100,2,friend_count+follower_count,200,10,top_5,"), std::string::npos);
  auto again = cmd;
  again.back() = path("b");
  again.insert(again.end(), {"--workers", "3"});
  ASSERT_EQ(run(again).code, 0);
  EXPECT_EQ(report, slurp(path("b/report.csv")));
}

TEST_F(Cli, EveryCommandIsByteStableAcrossWorkers) {
  const auto pop = population();
  const std::vector<std::pair<std::vector<std::string>, std::string>> commands{
      {{"generate", "--users", "5", "--tweets", "4"}, "population.jsonl"},
      {{"ingest", "--data", pop, "--min-tweets", "10"}, "ingested.jsonl"},
      {{"entropy", "--data", pop}, "entropy.csv"},
      {{"identify", "--data", pop, "--users", "5", "--per-user", "10", "--reps", "4", "--algo", "rf"}, "report.csv"},
      {{"sweep-features", "--data", pop, "--users", "4", "--per-user", "10", "--reps", "2", "--levels", "1",
        "--candidates", "friend_count,follower_count,verified"},
       "ranking.csv"},
      {{"sweep-users", "--data", pop, "--u-values", "2,6", "--reps", "3"}, "report.csv"},
      {{"obfuscate", "--data", pop, "--users", "5", "--per-user", "10", "--reps", "2", "--fractions", "0,0.5,1"},
       "sweep.csv"},
      {{"obfuscate", "--data", pop, "--users", "5", "--per-user", "10", "--reps", "2", "--mechanism", "anonymization_binning",
        "--bins", "3"},
       "sweep.csv"},
      {{"partition-bench", "--data", pop, "--users", "9", "--subset-sizes", "3,9", "--algo", "mlr"},
       "partition_bench.csv"},
      {{"benchmark", "--data", pop, "--u-values", "3,6", "--n-values", "2", "--algos", "knn,mlr"}, "timing.csv"},
  };
  for (std::size_t i = 0; i < commands.size(); ++i) {
    const auto& [args, output] = commands[i];
    std::string first;
    for (const char* workers : {"1", "2", "4"}) {
      auto a = args;
      const auto out = path(fmt::format("c{}_w{}", i, workers));
      a.insert(a.end(), {"--seed", "11", "--workers", workers, "--out-dir", out});
      const auto r = run(a);
      ASSERT_EQ(r.code, 0) << args[0] << ": " << r.err;
      const auto text = testing::without_timing_columns(slurp(fs::path(out) / output));
      ASSERT_FALSE(text.empty()) << args[0];
      if (first.empty())
        first = text;
      else
        EXPECT_EQ(text, first) << args[0] << " workers=" << workers;
      EXPECT_TRUE(fs::exists(fs::path(out) / (args[0] + ".manifest.json"))) << args[0];
    }
  }
}

TEST_F(Cli, BenchmarkWritesTimingGrid) {
  const auto pop = population();
  const auto r = run({"benchmark", "--data", pop, "--u-values", "4,8", "--n-values", "1,2", "--algos", "knn,rf",
                      "--out-dir", path("t")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto text = slurp(path("t/timing.csv"));
  EXPECT_EQ(count_lines(text), 1u + 2u * 2u * 2u);
  EXPECT_EQ(text.rfind("u,n,algorithm,", 0), 0u) << text.substr(0, 80);
  EXPECT_EQ(run({"benchmark", "--data", pop, "--runs", "2", "--out-dir", path("t")}).code, 2);
}

TEST_F(Cli, SweepFeaturesReportsCombinationCount) {
  const auto pop = population(6, 12);
  const auto r = run({"sweep-features", "--data", pop, "--users", "2", "--per-user", "4", "--reps", "1", "--levels",
                      "2", "--out-dir", path("s")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("evaluated 91 combinations"), std::string::npos);
  EXPECT_EQ(count_lines(slurp(path("s/ranking.csv"))), 92u);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"identify"}).code, 2);
  EXPECT_EQ(run({"identify", "--data", "x", "--bogus"}).code, 2);
  EXPECT_EQ(run({"identify", "--data", "x", "--algo", "svm"}).code, 2);
  EXPECT_EQ(run({"identify", "--data", "x", "--split", "1.5"}).code, 2);
}

TEST_F(Cli, ModuleErrorsExitOneWithKind) {
  const auto pop = population(3, 10);
  auto r = run({"identify", "--data", pop, "--users", "5", "--per-user", "10", "--out-dir", path("e")});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: capacity: ", 0), 0u) << r.err;
  EXPECT_EQ(count_lines(r.err), 1u);
  r = run({"identify", "--data", path("missing.jsonl"), "--out-dir", path("e")});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: io: ", 0), 0u) << r.err;
  r = run({"identify", "--data", pop, "--features", "friend_count,nope", "--out-dir", path("e")});
  EXPECT_EQ(r.code, 1);
  r = run({"obfuscate", "--data", pop, "--users", "2", "--per-user", "4", "--fractions", "0.5,0.1", "--out-dir",
           path("e")});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: schedule: ", 0), 0u) << r.err;
}

TEST_F(Cli, HelpShowsFlagsAndDefaults) {
  for (const char* cmd : {"generate", "ingest", "entropy", "identify", "sweep-features", "sweep-users", "obfuscate",
                          "partition-bench", "benchmark"}) {
    const auto r = run({cmd, "--help"});
    EXPECT_EQ(r.code, 0) << cmd;
    EXPECT_NE(r.out.find(cmd), std::string::npos) << cmd;
  }
  EXPECT_NE(run({"--help"}).out.find("--workers"), std::string::npos);
  const auto r = run({"identify", "--help"});
  for (const char* s : {"--reps", "200", "--split", "0.7", "--algo", "knn", "--trees", "10", "--l2", "--tol", "0.0001"})
    EXPECT_NE(r.out.find(s), std::string::npos) << s;
  EXPECT_EQ(run({"--version"}).out, std::string(kToolkitVersion) + "\n");
}

TEST_F(Cli, ConfigFileBelowFlags) {
  const auto pop = population(6, 12);
  const auto cfg = path("cfg.json");
  std::ofstream(cfg) << R"({"seed": 5, "identify": {"reps": 3, "users": 4, "per-user": 6, "algo": "rf"}})";
  auto r = run({"identify", "--data", pop, "--config", cfg, "--users", "2", "--out-dir", path("c")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto m = nlohmann::json::parse(slurp(path("c/identify.manifest.json")));
  EXPECT_EQ(m["master_seed"], 5);
  EXPECT_EQ(m["config_file"], cfg);
  EXPECT_EQ(m["resolved"]["experiment"]["repetitions"], 3);
  EXPECT_EQ(m["resolved"]["experiment"]["u"], 2);
  EXPECT_EQ(m["resolved"]["experiment"]["params"]["algorithm"], "rf");

  std::ofstream(cfg) << R"({"identify": {"no-such-flag": 1}})";
  EXPECT_EQ(run({"identify", "--data", pop, "--config", cfg, "--out-dir", path("c")}).code, 2);
  std::ofstream(cfg) << "{not json";
  EXPECT_EQ(run({"identify", "--data", pop, "--config", cfg, "--out-dir", path("c")}).code, 2);
}

TEST_F(Cli, IngestFiltersAndReportsRejections) {
  const auto pop = population(4, 10);
  {
    std::ofstream f(pop, std::ios::app);
    f << "{broken\n";
  }
  const auto r = run({"ingest", "--data", pop, "--min-tweets", "10", "--max-malformed", "0.05", "--out-dir", path("i")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(slurp(path("i/ingested.jsonl"))), 40u);
  const auto rej = slurp(path("i/rejections.csv"));
  EXPECT_EQ(count_lines(rej), 2u);
  EXPECT_NE(rej.find("\n41,"), std::string::npos);
}

TEST_F(Cli, WorkerCountRestored) {
  set_worker_count(1);
  const auto pop = population(4, 10);
  ASSERT_EQ(run({"entropy", "--data", pop, "--workers", "3", "--out-dir", path("w")}).code, 0);
  EXPECT_EQ(worker_count(), 1u);
}

TEST(CliBinary, RunsAsProcess) {
  const std::string cmd = std::string(METAID_CLI_PATH) + " --version > /dev/null";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  const std::string bad = std::string(METAID_CLI_PATH) + " frobnicate > /dev/null 2>&1";
  const int status = std::system(bad.c_str());
  EXPECT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 2);
}

}  // namespace
}  // namespace metaid
