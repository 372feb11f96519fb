// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The convoeval Authors

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "convoeval/metrics.hpp"
#include "convoeval/unify.hpp"

namespace {

namespace fs = std::filesystem;

struct Run {
  int status = -1;
  std::string out;  // stdout and stderr interleaved
};

Run run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" + CONVOEVAL_CLI + "' " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("convoeval_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& content) const {
    std::ofstream(dir_ / name, std::ios::binary) << content;
  }

  fs::path dir_;
};

const std::string kData = CONVOEVAL_DATA_DIR;

TEST_F(Cli, HelpExitsZero) {
  const auto r = run("--help");
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("synth"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").status, 2);
  EXPECT_EQ(run("frobnicate").status, 2);
  const auto r = run("rank --matrix " + kData + "/worked_example_matrix.json --no-such-flag");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.out.find("--no-such-flag"), std::string::npos);
  EXPECT_NE(r.out.find("Usage"), std::string::npos);
}

TEST_F(Cli, MissingInputNamesThePath) {
  const auto r = run("stats --corpus " + path("absent.jsonl"));
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.out.find(path("absent.jsonl")), std::string::npos);
}

TEST_F(Cli, ValidateStrictExitsOneOnFindings) {
  write("bad.jsonl",
        R"({"conversation_id":"c1","bot_id":"b","user_id":"u","turns":[{"speaker":"bot","text":"hi","ts":0}]})"
        "\n");
  write("good.jsonl",
        R"({"conversation_id":"c1","bot_id":"b","user_id":"u","turns":[{"speaker":"user","text":"hi","ts":0}]})"
        "\n");
  EXPECT_EQ(run("validate --corpus " + path("bad.jsonl")).status, 0);
  EXPECT_EQ(run("validate --strict --corpus " + path("bad.jsonl") + " --report " + path("r.json")).status, 1);
  EXPECT_NE(slurp(path("r.json")).find("starts_with_bot"), std::string::npos);
  EXPECT_EQ(run("validate --strict --corpus " + path("good.jsonl")).status, 0);
  write("broken.jsonl", "{not json\n");
  EXPECT_EQ(run("validate --strict --corpus " + path("broken.jsonl")).status, 1);
}

TEST_F(Cli, SynthIsByteIdenticalAndPrintsSeed) {
  const auto a = run("synth --default-bots 3 --n 20 --seed 7 --out " + path("a.jsonl"));
  ASSERT_EQ(a.status, 0) << a.out;
  EXPECT_NE(a.out.find("seed: 7"), std::string::npos);
  ASSERT_EQ(run("synth --default-bots 3 --n 20 --seed 7 --out " + path("b.jsonl")).status, 0);
  EXPECT_FALSE(slurp(path("a.jsonl")).empty());
  EXPECT_EQ(slurp(path("a.jsonl")), slurp(path("b.jsonl")));
  ASSERT_EQ(run("synth --default-bots 3 --n 20 --seed 8 --out " + path("c.jsonl")).status, 0);
  EXPECT_NE(slurp(path("a.jsonl")), slurp(path("c.jsonl")));
}

TEST_F(Cli, SeedFromEnvironment) {
  const auto r = run("synth --default-bots 2 --n 5 --out " + path("a.jsonl"), "CONVOEVAL_SEED=7");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("seed: 7"), std::string::npos);
  ASSERT_EQ(run("synth --default-bots 2 --n 5 --seed 7 --out " + path("b.jsonl")).status, 0);
  EXPECT_EQ(slurp(path("a.jsonl")), slurp(path("b.jsonl")));
  EXPECT_NE(run("synth --default-bots 2 --n 5 --out " + path("c.jsonl")).out.find("seed: 42"), std::string::npos);
  EXPECT_EQ(run("synth --default-bots 2 --n 5 --out " + path("d.jsonl"), "CONVOEVAL_SEED=abc").status, 2);
}

TEST_F(Cli, PipelineFromSynthToReport) {
  ASSERT_EQ(run("synth --profiles " + kData + "/profiles_example.json --n 40 --seed 3 --out " + path("c.jsonl") +
                " --annotations-out " + path("a.jsonl") + " --truth-out " + path("t.json"))
                .status,
            0);
  const std::string metrics_args = "metrics --corpus " + path("c.jsonl") + " --annotations " + path("a.jsonl") +
                                   " --lexicon " + kData + "/default_lexicon.json --resamples 200 --seed 1 --out ";
  auto r = run(metrics_args + path("m1.json") + " --csv " + path("m.csv"));
  ASSERT_EQ(r.status, 0) << r.out;
  ASSERT_EQ(run(metrics_args + path("m2.json")).status, 0);
  EXPECT_EQ(slurp(path("m1.json")), slurp(path("m2.json")));
  const auto m = convoeval::metrics::matrix_from_json(nlohmann::json::parse(slurp(path("m1.json"))));
  EXPECT_EQ(m.bots.size(), 3u);
  EXPECT_EQ(slurp(path("m.csv")).rfind("bot,metric,point,ci_lo,ci_hi\n", 0), 0u);

  r = run("rank --matrix " + path("m1.json") + " --method stack-rank --out " + path("sr.json"));
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("Rank Sum"), std::string::npos);
  ASSERT_EQ(run("rank --matrix " + path("m1.json") + " --out " + path("wc.json")).status, 0);
  r = run("correlate --matrix " + path("m1.json") + " --out " + path("corr.json"));
  ASSERT_EQ(r.status, 0) << r.out;
  r = run("report --matrix " + path("m1.json") + " --score-table " + path("wc.json") + " --correlation " +
          path("corr.json") + " --methods stack-rank --out " + path("report.md"));
  ASSERT_EQ(r.status, 0) << r.out;
  const auto md = slurp(path("report.md"));
  EXPECT_NE(md.find("## Metric matrix"), std::string::npos);
  EXPECT_NE(md.find("winners-circle"), std::string::npos);
  EXPECT_NE(md.find("stack-rank"), std::string::npos);

  // A stack-rank document is not a score table.
  EXPECT_EQ(run("report --score-table " + path("sr.json")).status, 2);
}

TEST_F(Cli, RankReproducesWorkedExampleTotals) {
  const auto r = run("rank --matrix " + kData + "/worked_example_matrix.json --method winners-circle --out " + path("t.json"));
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("| **Total Score** | 10 | 10 | 5 | 4 | 4 | 3 | 2 |"), std::string::npos) << r.out;
  const auto t = convoeval::unify::score_table_from_json(nlohmann::json::parse(slurp(path("t.json"))));
  EXPECT_EQ(t.totals, (std::vector<int>{10, 10, 5, 4, 4, 3, 2}));
  EXPECT_EQ(run("rank --matrix " + kData + "/worked_example_matrix.json --method weighted-stack-rank").status, 2);
}

TEST_F(Cli, ReportWithNoInputsIsEmptyButValid) {
  const auto r = run("report");
  EXPECT_EQ(r.status, 0) << r.out;
}

TEST_F(Cli, MetricsStrictDropsFlaggedConversations) {
  write("c.jsonl",
        R"({"conversation_id":"c1","bot_id":"a","user_id":"u","turns":[{"speaker":"user","text":"i love soccer","ts":0},{"speaker":"bot","text":"soccer is fun","ts":1000}],"rating":{"score":4,"source":"user"}})"
        "\n"
        R"({"conversation_id":"c2","bot_id":"a","user_id":"u","turns":[{"speaker":"bot","text":"music","ts":0}],"rating":{"score":9,"source":"user"}})"
        "\n");
  write("c.jsonl", slurp(path("c.jsonl")) + "{broken\n");
  auto r = run("metrics --strict --resamples 50 --corpus " + path("c.jsonl") + " --report " + path("parse.json") +
               " --out " + path("m.json"));
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("excluded 1"), std::string::npos);
  const auto report = nlohmann::json::parse(slurp(path("parse.json")));
  EXPECT_EQ(report.at("records_accepted"), 2);
  EXPECT_EQ(report.at("issues").size(), 1u);
  const auto m = convoeval::metrics::matrix_from_json(nlohmann::json::parse(slurp(path("m.json"))));
  EXPECT_EQ(m.bots, std::vector<std::string>{"a"});
}

TEST_F(Cli, ClassifierAndPredictorRoundTrip) {
  ASSERT_EQ(run("synth --default-bots 3 --n 80 --seed 2 --out " + path("c.jsonl")).status, 0);
  auto r = run("train-classifier --corpus " + path("c.jsonl") + " --epochs 5 --out " + path("dan.json"));
  ASSERT_EQ(r.status, 0) << r.out;
  r = run("annotate --corpus " + path("c.jsonl") + " --classifier " + path("dan.json") + " --out " + path("d.jsonl"));
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(slurp(path("d.jsonl")).find("\"conversation_domain\""), std::string::npos);

  r = run("train-predictor --corpus " + path("c.jsonl") + " --trees 20 --test-fraction 0.2 --out " + path("g.json"));
  ASSERT_EQ(r.status, 0) << r.out;
  r = run("eval-predictor --model " + path("g.json") + " --corpus " + path("c.jsonl") +
          " --test-fraction 0.2 --out " + path("e.json"));
  ASSERT_EQ(r.status, 0) << r.out;
  const auto e = nlohmann::json::parse(slurp(path("e.json")));
  EXPECT_GT(e.at("n").get<int>(), 0);
  EXPECT_TRUE(e.contains("random_baseline_rmse"));
}

}  // namespace
