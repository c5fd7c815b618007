// Copyright 2026 The qdsvpg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "qdsvpg/experiment/config.hpp"
#include "qdsvpg/experiment/metrics.hpp"
#include "qdsvpg/experiment/runner.hpp"

namespace qdsvpg {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("qdsvpg_test_" + name);
  fs::remove_all(d);
  return d;
}

Json minimal_config() {
  return Json{{"environment", {{"type", "gridmaze"}}},
              {"n", 1},
              {"estimator", "none"},
              {"iterations", 5},
              {"transitions", 256},
              {"initial_states", 16},
              {"seeds", {3}},
              {"policy", {{"kind", "tabular-softmax"}}},
              {"value", {{"hidden_layers", 0}, {"lr", 0.05}}},
              {"ppo", {{"lr", 0.01}, {"minibatch", 128}}}};
}

Json coupled_config() {
  Json j = minimal_config();
  j["environment"] = {{"type", "random_mdp"}, {"states", 4}, {"actions", 2}, {"mdp_seed", 7}, {"gamma", 0.9}};
  j["n"] = 2;
  j["estimator"] = "DualDICE";
  j["iterations"] = 4;
  j["estimator_net"] = {{"hidden_layers", 1}, {"width", 16}, {"steps", 5}, {"minibatch", 64}};
  return j;
}

std::string config_error(const Json& j) {
  try {
    parse_run_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(RunConfig, DefaultsMatchTheStandardHyperparameters) {
  const RunConfig c = parse_run_config(Json::object());
  EXPECT_EQ(c.ppo.clip, 0.2);
  EXPECT_EQ(c.ppo.lr, 1e-4);
  EXPECT_EQ(c.environment.gamma, 0.99);
  EXPECT_EQ(c.ppo.gae_lambda, 0.95);
  EXPECT_EQ(c.policy_hidden_layers, 2u);
  EXPECT_EQ(c.policy_width, 64u);
  EXPECT_EQ(c.estimator_net.hidden_layers, 2u);
  EXPECT_EQ(c.estimator_net.width, 100u);
  EXPECT_EQ(c.estimator_net.gendice_lambda, 10.0);
  EXPECT_EQ(c.effective_temperature(), 0.5);
  Json kls{{"divergence", "KLS"}};
  EXPECT_EQ(parse_run_config(kls).effective_temperature(), 1.0);
}

TEST(RunConfig, LabelFollowsEstimatorAndDivergence) {
  Json j{{"estimator", "DualDICE"}, {"divergence", "KLS"}};
  EXPECT_EQ(parse_run_config(j).label(), "QD-DualDICE-KLS");
  j["estimator"] = "none";
  j["n"] = 3;
  EXPECT_EQ(parse_run_config(j).label(), "PPO-x3");
}

TEST(RunConfig, UnknownKeysAreRejectedWithTheirPath) {
  Json j = minimal_config();
  j["ppo"]["learning_rate"] = 1.0;
  j["extra"] = true;
  const std::string msg = config_error(j);
  EXPECT_NE(msg.find("ppo.learning_rate: unknown key"), std::string::npos) << msg;
  EXPECT_NE(msg.find("extra: unknown key"), std::string::npos) << msg;
}

TEST(RunConfig, KeysOfAnotherEnvironmentTypeAreRejected) {
  Json j = minimal_config();
  j["environment"]["length"] = 12;
  EXPECT_NE(config_error(j).find("environment.length: unknown key"), std::string::npos);
}

TEST(RunConfig, ReportsEveryBadFieldAtOnce) {
  Json j = minimal_config();
  j["n"] = -1;
  j["ppo"]["lr"] = 0.0;
  j["estimator"] = "MINE";
  j["divergence"] = "TV";
  const std::string msg = config_error(j);
  for (const char* field : {"n:", "ppo.lr:", "estimator:", "divergence:"}) EXPECT_NE(msg.find(field), std::string::npos) << field;
}

TEST(RunConfig, JsonRoundTripIsLossless) {
  Json j = coupled_config();
  j["temperature"] = 0.7;
  j["svpg"] = {{"self_quality_only", true}, {"normalization", "kernel-sum"}};
  const RunConfig c = parse_run_config(j);
  EXPECT_EQ(to_json(parse_run_config(to_json(c))), to_json(c));
}

TEST(RunConfig, BuildsEveryEnvironmentType) {
  for (const char* type : {"corridor", "gridmaze", "maze", "random_mdp"}) {
    EnvSpec e;
    e.type = type;
    const auto env = make_environment(e);
    EXPECT_EQ(env->tabular() != nullptr, std::string(type) != "maze") << type;
  }
  EnvSpec z;
  z.type = "corridor";
  z.zero_reward = true;
  const auto env = make_environment(z);
  for (double r : env->tabular()->reward) EXPECT_EQ(r, 0.0);
}

TEST(DiversityMetric, IdenticalValuesHaveZeroVariance) {
  std::vector<TrajectoryStep> steps(10);
  for (auto& s : steps) s.displacement = 0.3;
  EXPECT_EQ(diversity_metric(steps, 20), 0.0);
}

TEST(DiversityMetric, TwoPointDistributionGivesVSquared) {
  const double v = 0.7;
  std::vector<TrajectoryStep> steps(10);
  for (std::size_t k = 0; k < steps.size(); ++k) steps[k].displacement = k % 2 ? v : -v;
  EXPECT_NEAR(diversity_metric(steps, 2), v * v, 1e-15);
  EXPECT_NEAR(diversity_metric(steps, 20), v * v, 1e-15);
}

TEST(DiversityMetric, FixedRangeMatchesDirectVarianceOnGridValues) {
  const std::vector<double> values{-1, 0, 0, 1, 1, 1};
  double mean = 0.0, var = 0.0;
  for (double x : values) mean += x / 6.0;
  for (double x : values) var += (x - mean) * (x - mean) / 6.0;
  EXPECT_NEAR(histogram_variance(values, 3, HistogramRange{-1.0, 1.0}), var, 1e-15);
}

TEST(DiversityMetric, RejectsEmptyInputAndZeroBins) {
  std::vector<TrajectoryStep> none;
  EXPECT_THROW(diversity_metric(none, 20), ContractError);
  std::vector<TrajectoryStep> one(1);
  EXPECT_THROW(diversity_metric(one, 0), ContractError);
}

TEST(CoverageMetric, StationaryTrajectoryCoversOneCell) {
  std::vector<TrajectoryStep> steps(5);
  for (auto& s : steps) s.position = s.next_position = {2.5, 3.5};
  EXPECT_EQ(coverage_metric(steps, 1.0), 1u);
}

TEST(CoverageMetric, CountsDistinctCellsOnce) {
  std::vector<TrajectoryStep> steps;
  for (int k = 0; k < 7; ++k) {
    TrajectoryStep s;
    s.position = {k + 0.5, 0.5};
    s.next_position = {k + 1.5, 0.5};
    steps.push_back(s);
  }
  EXPECT_EQ(coverage_metric(steps, 1.0), 8u);
  EXPECT_EQ(coverage_metric(steps, 2.0), 4u);
}

TEST(DeceptiveEval, IdenticalInputsTie) {
  const RunSummary a{"QD-Oracle-JS", Json{{"type", "corridor"}}, {0.0, 0.6}, true};
  const DeceptiveReport r = deceptive_eval(a, a);
  EXPECT_TRUE(r.tie);
  EXPECT_EQ(r.winner, "tie");
}

TEST(DeceptiveEval, ReportsBestMemberAndReach) {
  const RunSummary qd{"QD-DualDICE-JS", Json{{"type", "corridor"}}, {0.0, 0.8, 0.01}, true};
  const RunSummary base{"PPO-x3", Json{{"type", "corridor"}}, {0.0, 0.0, 0.01}, true};
  const DeceptiveReport r = deceptive_eval(qd, base);
  EXPECT_DOUBLE_EQ(r.best_a, 0.8);
  EXPECT_TRUE(r.reached_a);
  EXPECT_FALSE(r.reached_b);
  EXPECT_EQ(r.winner, "QD-DualDICE-JS");
}

TEST(DeceptiveEval, MismatchedEnvironmentsThrow) {
  const RunSummary a{"a", Json{{"type", "corridor"}}, {0.0}, true};
  const RunSummary b{"b", Json{{"type", "gridmaze"}}, {0.0}, true};
  EXPECT_THROW(deceptive_eval(a, b), ConfigError);
}

TEST(PdReport, SingleDistributionGivesUnitEigenvalue) {
  Rng rng(1);
  for (const PdRow& r : pd_report(kAllDivergenceKinds, 1, 0.5, rng, 1, 6)) EXPECT_NEAR(r.min_eigenvalue, 1.0, 1e-12);
}

TEST(PdReport, JsRowIsPositiveDefinite) {
  Rng rng(2);
  const std::vector<FDivergenceKind> kinds{FDivergenceKind::JS};
  const PdRow r = pd_report(kinds, 50, 0.5, rng).front();
  EXPECT_GE(r.min_eigenvalue, -1e-8);
  EXPECT_EQ(r.verdict, "pd");
}

TEST(OracleSuite, RandomMdpsPass) {
  Rng rng(3);
  const OracleSuiteResult r = random_mdp_oracle_suite(10, 10, 2, rng);
  EXPECT_EQ(r.cases, 20u);
  EXPECT_TRUE(r.pass());
}

TEST(RunTrain, MinimalConfigWritesOneRecordPerIteration) {
  const fs::path dir = scratch_dir("minimal");
  run_train(parse_run_config(minimal_config()), dir);
  const fs::path run = seed_dir(dir, 3);
  for (const char* f : {"config.json", "metrics.csv", "timing.csv", "trajectories.jsonl", "checkpoint.json", "summary.json"})
    EXPECT_TRUE(fs::exists(run / f)) << f;
  std::ifstream in(run / "metrics.csv");
  std::string line;
  std::size_t rows = 0;
  std::getline(in, line);
  EXPECT_EQ(line, metrics_header(1));
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 5u);
  EXPECT_FALSE(read_trajectories(run / "trajectories.jsonl").empty());
  fs::remove_all(dir);
}

TEST(RunTrain, SameConfigTwiceIsBitIdentical) {
  const fs::path a = scratch_dir("det_a"), b = scratch_dir("det_b");
  const RunConfig c = parse_run_config(coupled_config());
  run_train(c, a);
  run_train(c, b);
  for (const char* f : {"metrics.csv", "trajectories.jsonl", "checkpoint.json"})
    EXPECT_EQ(slurp(seed_dir(a, 3) / f), slurp(seed_dir(b, 3) / f)) << f;
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(RunTrain, MetricsSchemaIsTheSameForEveryEstimator) {
  std::string header;
  for (const char* kind : {"none", "Oracle", "NCE", "DualDICE"}) {
    const fs::path dir = scratch_dir(std::string("schema_") + kind);
    Json j = coupled_config();
    j["estimator"] = kind;
    j["iterations"] = 1;
    run_train(parse_run_config(j), dir);
    std::ifstream in(seed_dir(dir, 3) / "metrics.csv");
    std::string h;
    std::getline(in, h);
    if (header.empty()) header = h;
    EXPECT_EQ(h, header) << kind;
    fs::remove_all(dir);
  }
}

TEST(RunTrain, ResumeFromCheckpointIsBitExact) {
  const fs::path full = scratch_dir("resume_full"), part = scratch_dir("resume_part");
  Json j = coupled_config();
  j["output"] = {{"checkpoint_every", 2}};
  const RunConfig c = parse_run_config(j);
  run_train(c, full);
  j["iterations"] = 2;
  run_train(parse_run_config(j), part);
  resume_train(c, seed_dir(part, 3) / "checkpoint.json", part);
  for (const char* f : {"metrics.csv", "trajectories.jsonl", "checkpoint.json"})
    EXPECT_EQ(slurp(seed_dir(full, 3) / f), slurp(seed_dir(part, 3) / f)) << f;

  const fs::path mid = scratch_dir("resume_mid");
  resume_train(c, seed_dir(full, 3) / "checkpoint-2.json", mid);
  EXPECT_EQ(slurp(seed_dir(full, 3) / "checkpoint.json"), slurp(seed_dir(mid, 3) / "checkpoint.json"));
  for (const fs::path& d : {full, part, mid}) fs::remove_all(d);
}

TEST(RunTrain, ResumeRejectsAChangedConfig) {
  const fs::path dir = scratch_dir("resume_changed");
  Json j = coupled_config();
  j["iterations"] = 1;
  run_train(parse_run_config(j), dir);
  j["iterations"] = 2;
  j["ppo"]["lr"] = 0.5;
  EXPECT_THROW(resume_train(parse_run_config(j), seed_dir(dir, 3) / "checkpoint.json", dir), ConfigError);
  fs::remove_all(dir);
}

TEST(RunTrain, NonFiniteUpdateWritesCheckpointAndAborts) {
  const fs::path dir = scratch_dir("nan");
  Json j = minimal_config();
  j["environment"] = {{"type", "corridor"}, {"length", 4}, {"threshold", 1}, {"movement_reward", 1e306}, {"horizon", 20}};
  j["ppo"]["advantage_norm"] = "none";
  try {
    run_train(parse_run_config(j), dir);
    ADD_FAILURE() << "expected the run to abort";
  } catch (const RunAborted& e) {
    EXPECT_TRUE(fs::exists(e.checkpoint()));
    EXPECT_NO_THROW(load_checkpoint(e.checkpoint()));
  }
  fs::remove_all(dir);
}

}  // namespace
}  // namespace qdsvpg
