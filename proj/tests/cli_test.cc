// Copyright 2026 The DialEdit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.h"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dialedit/dialogue.h"
#include "dialedit/metrics.h"
#include "dialedit/simulator.h"

namespace dialedit {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun Cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dialedit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = RunCli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string Slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dialedit_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string Path(const std::string& name) const { return (dir_ / name).string(); }

  std::string Simulate(const std::string& name, int jobs = 1) {
    const CliRun r = Cli({"--seed", "11", "--jobs", std::to_string(jobs), "--out", Path(name), "simulate",
                       "--n", "120"});
    EXPECT_EQ(r.code, 0) << r.err;
    return Path(name);
  }

  fs::path dir_;
};

TEST_F(CliTest, HelpExitsZero) {
  const CliRun r = Cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("simulate"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(Cli({"frobnicate"}).code, 1);
  EXPECT_EQ(Cli({}).code, 1);
  EXPECT_EQ(Cli({"stats"}).code, 1);
  const CliRun r = Cli({"--jobs", "0", "stats", "--data", "x"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST_F(CliTest, RuntimeErrorsExitTwo) {
  const CliRun r = Cli({"stats", "--data", Path("missing.json")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error"), std::string::npos);
  EXPECT_EQ(Cli({"--backend", "stylegan", "edit", "--data", Path("missing.json")}).code, 2);
}

TEST_F(CliTest, SimulateIsByteIdenticalAcrossRunsAndJobs) {
  const std::string a = Simulate("a", 1);
  const std::string b = Simulate("b", 1);
  const std::string c = Simulate("c", 4);
  for (const char* split : {"train.json", "valid.json", "test.json"}) {
    const std::string first = Slurp(fs::path(a) / split);
    ASSERT_FALSE(first.empty());
    EXPECT_EQ(first, Slurp(fs::path(b) / split)) << split;
    EXPECT_EQ(first, Slurp(fs::path(c) / split)) << split;
  }
  EXPECT_EQ(ReadSplit((fs::path(a) / "train.json").string()).size(), 100u);
  EXPECT_EQ(ReadSplit((fs::path(a) / "valid.json").string()).size(), 10u);
  EXPECT_EQ(ReadSplit((fs::path(a) / "test.json").string()).size(), 10u);
}

TEST_F(CliTest, ExplicitSplit) {
  const CliRun r = Cli({"--out", Path("s"), "simulate", "--n", "30", "--split", "20,5,5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(ReadSplit(Path("s/valid.json")).size(), 5u);
  EXPECT_EQ(Cli({"--out", Path("t"), "simulate", "--n", "30", "--split", "20,5"}).code, 2);
}

TEST_F(CliTest, TrackEvalRuleTrackerIsPerfect) {
  const std::string data = Simulate("d");
  const CliRun r = Cli({"track-eval", "--data", data});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("joint accuracy 1.000\n", 0), 0u) << r.out;
}

TEST_F(CliTest, TrackEvalMatchesLibrary) {
  const std::string data = Simulate("d");
  const CliRun r = Cli({"--json", "track-eval", "--data", data + "/test.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  RuleBasedTracker tracker;
  const auto expected = EvaluateTracker(tracker, ReadSplit(data + "/test.json"));
  EXPECT_EQ(json::parse(r.out), expected.ToJson());
}

TEST_F(CliTest, LmTrackerWithoutProcessIsUnavailable) {
  const std::string data = Simulate("d");
  const CliRun r = Cli({"track-eval", "--data", data, "--tracker", "lm"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("BackendUnavailable"), std::string::npos);
}

TEST_F(CliTest, StatsMatchesLibrary) {
  const std::string data = Simulate("d");
  const CliRun r = Cli({"--json", "stats", "--data", data + "/train.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out), ComputeStats(ReadSplit(data + "/train.json")).ToJson());
}

TEST_F(CliTest, EditMatchesLibrary) {
  const std::string data = Simulate("d");
  const CliRun r = Cli({"--seed", "3", "--json", "--out", Path("edit"), "--config", Path("cfg.json"), "edit",
                     "--data", data + "/test.json", "--index", "2", "--mode", "cascade"});
  EXPECT_EQ(r.code, 2);  // config file absent

  std::ofstream(Path("cfg.json")) << R"({"steps": 40, "backend.kind": "toy"})";
  const CliRun ok = Cli({"--seed", "3", "--json", "--out", Path("edit"), "--config", Path("cfg.json"), "edit",
                      "--data", data + "/test.json", "--index", "2", "--mode", "cascade"});
  ASSERT_EQ(ok.code, 0) << ok.err;
  const json doc = json::parse(ok.out);
  EXPECT_EQ(doc["mode"], "cascade");

  const Backends backends = MakeToyBackends({});
  EditHyperparams hyper;
  hyper.steps = 40;
  const Dialogue d = ReadSplit(data + "/test.json")[2];
  EditState state{SourceImage(backends, d.record), {}, {}, 3};
  std::size_t k = 0;
  for (const auto& t : d.turns) {
    if (t.gold_belief.empty()) continue;
    const EditResult expected = EditTurn(state, t.gold_belief, EditMode::kCascade, backends, hyper);
    ASSERT_LT(k, doc["turns"].size());
    json got = doc["turns"][k++];
    got.erase("turn");
    EXPECT_EQ(got, expected.ToJson());
  }
  EXPECT_EQ(k, doc["turns"].size());
  EXPECT_EQ(json::parse(Slurp(Path("edit/edit_results.json"))), doc["turns"]);
}

TEST_F(CliTest, RespondEvalMatchesLibrary) {
  const std::string data = Simulate("d");
  const CliRun r = Cli({"--json", "respond-eval", "--data", data + "/test.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json doc = json::parse(r.out);
  EXPECT_GT(doc["bleu"].get<double>(), 0.0);
  EXPECT_LE(doc["bleu"].get<double>(), 1.0);
  EXPECT_GT(doc["responses"].get<int>(), 0);
}

TEST_F(CliTest, CompareProducesFourRows) {
  const std::string data = Simulate("d");
  const CliRun r = Cli({"--json", "compare", "--data", data + "/test.json", "--limit", "4", "--repeats", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json doc = json::parse(r.out);
  ASSERT_EQ(doc["rows"].size(), 4u);
  EXPECT_EQ(doc["repeats"], 2);
}

TEST_F(CliTest, MetricBleuAndDistinct) {
  std::ofstream(Path("h.txt")) << "the cat sat on the mat\n";
  std::ofstream(Path("r.txt")) << "the cat sat on the mat\n";
  CliRun r = Cli({"metric", "bleu", "--hyp", Path("h.txt"), "--ref", Path("r.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "bleu 1.000000\n");

  std::ofstream(Path("c.txt")) << "a b a b\n";
  r = Cli({"metric", "distinct", "--corpus", Path("c.txt"), "--n", "1"});
  EXPECT_EQ(r.out, "distinct_1 0.500000\n");
  r = Cli({"metric", "distinct", "--corpus", Path("c.txt"), "--n", "2"});
  EXPECT_EQ(r.out, "distinct_2 0.666667\n");
  EXPECT_EQ(Cli({"metric", "distinct", "--corpus", Path("c.txt"), "--n", "3"}).code, 1);
}

TEST_F(CliTest, MetricFidFromSamplesAndStats) {
  std::ofstream(Path("a.json")) << "[[0,0],[1,0],[0,1],[1,1]]";
  std::ofstream(Path("b.json")) << "[[2,0],[3,0],[2,1],[3,1]]";
  CliRun r = Cli({"--json", "metric", "fid", "--a", Path("a.json"), "--b", Path("b.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(json::parse(r.out)["fid"].get<double>(), 4.0, 1e-9);

  std::ofstream(Path("sa.json")) << DistributionStats::FromSamples(std::vector<std::vector<double>>{{0, 0}, {1, 0}, {0, 1}, {1, 1}}).ToJson();
  r = Cli({"--json", "metric", "fid", "--a", Path("sa.json"), "--b", Path("a.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(json::parse(r.out)["fid"].get<double>(), 0.0, 1e-9);
}

}  // namespace
}  // namespace dialedit
