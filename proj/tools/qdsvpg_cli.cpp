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

// Command-line front end: train, eval, diversity, coverage, deceptive-compare,
// pd-check, oracle-check. Exit codes: 0 ok, 2 config error, 3 numeric failure,
// 4 oracle validation failure, 1 anything else.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qdsvpg/experiment/config.hpp"
#include "qdsvpg/experiment/metrics.hpp"
#include "qdsvpg/experiment/runner.hpp"

namespace fs = std::filesystem;
using namespace qdsvpg;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitOracle = 4;

int cmd_train(const std::string& config_path, const std::string& out_arg, const std::string& resume, bool quiet) {
  const RunConfig c = load_run_config(config_path);
  const fs::path out = out_arg.empty() ? fs::path("runs") / c.label() : fs::path(out_arg);
  std::ostream* log = quiet ? nullptr : &std::cerr;
  std::vector<RunSummary> all;
  if (resume.empty())
    all = run_train(c, out, log);
  else
    all.push_back(resume_train(c, resume, out, log));
  for (const RunSummary& s : all) std::cout << s.label << " best final return " << s.best() << '\n';
  std::cout << "artifacts in " << out.string() << '\n';
  return 0;
}

int cmd_eval(const std::string& checkpoint, std::size_t episodes, double resolution, std::size_t bins) {
  const LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const auto env = make_environment(ck.config.environment);
  const Ensemble e = restore_ensemble(ck, env);
  const std::vector<TrajectoryStep> steps = evaluation_trajectories(e, ck.seed, episodes, 2);
  Json members = Json::array();
  for (std::size_t k = 0; k < e.size(); ++k) {
    double total = 0.0, discounted = 0.0;
    std::size_t eps = 0;
    for (const TrajectoryStep& s : steps) {
      if (s.member != k) continue;
      total += s.reward;
      discounted += std::pow(env->gamma(), static_cast<double>(s.t)) * s.reward;
      if (s.t == 0) ++eps;
    }
    Json m{{"member", k}, {"episode_return", total / static_cast<double>(std::max<std::size_t>(eps, 1))},
           {"normalized_discounted_return", (1.0 - env->gamma()) * discounted / static_cast<double>(std::max<std::size_t>(eps, 1))}};
    if (const TabularMDP* mdp = env->tabular()) m["exact_return"] = exact_return(*mdp, policy_table(e.member(k).policy, *env));
    members.push_back(m);
  }
  const Json report{{"label", ck.config.label()},
                    {"seed", ck.seed},
                    {"iteration", e.iteration()},
                    {"episodes", episodes},
                    {"members", members},
                    {"coverage", coverage_metric(steps, resolution)},
                    {"histogram_variance", diversity_metric(steps, bins)}};
  std::cout << report.dump(2) << '\n';
  return 0;
}

std::optional<HistogramRange> range_from(const std::vector<double>& r) {
  if (r.empty()) return std::nullopt;
  if (r.size() != 2) throw ConfigError("--range takes two values: LO HI");
  return HistogramRange{r[0], r[1]};
}

int cmd_diversity(const std::string& run, std::size_t bins, const std::vector<double>& range) {
  for (const fs::path& d : run_dirs(run, "trajectories.jsonl")) {
    const std::vector<TrajectoryStep> steps = read_trajectories(d / "trajectories.jsonl");
    std::printf("%s histogram_variance %.10g (bins %zu, steps %zu)\n", d.string().c_str(),
                diversity_metric(steps, bins, step_displacement, range_from(range)), bins, steps.size());
  }
  return 0;
}

int cmd_coverage(const std::string& run, double resolution) {
  for (const fs::path& d : run_dirs(run, "trajectories.jsonl")) {
    const std::vector<TrajectoryStep> steps = read_trajectories(d / "trajectories.jsonl");
    std::printf("%s coverage %zu (resolution %g)\n", d.string().c_str(), coverage_metric(steps, resolution), resolution);
  }
  return 0;
}

int cmd_deceptive(const std::string& a, const std::string& b, double threshold) {
  const std::vector<fs::path> da = run_dirs(a, "summary.json"), db = run_dirs(b, "summary.json");
  if (da.size() != db.size()) throw ConfigError("deceptive-compare: the two runs have different seed counts");
  for (std::size_t k = 0; k < da.size(); ++k) {
    const RunSummary sa = run_summary_from_json(detail::read_json(da[k] / "summary.json"));
    const RunSummary sb = run_summary_from_json(detail::read_json(db[k] / "summary.json"));
    const DeceptiveReport r = deceptive_eval(sa, sb, threshold);
    std::printf("%s | %s best %.6g reached %s | %s best %.6g reached %s | winner %s\n", da[k].filename().string().c_str(),
                r.label_a.c_str(), r.best_a, r.reached_a ? "yes" : "no", r.label_b.c_str(), r.best_b,
                r.reached_b ? "yes" : "no", r.winner.c_str());
  }
  return 0;
}

int cmd_pd(const std::string& kinds_csv, std::size_t trials, double temperature, std::size_t per_trial, std::size_t atoms,
           std::uint64_t seed) {
  std::vector<FDivergenceKind> kinds;
  std::stringstream ss(kinds_csv);
  for (std::string k; std::getline(ss, k, ',');)
    if (!k.empty()) kinds.push_back(divergence_kind_from_string(k));
  if (trials == 0) throw ConfigError("--trials must be at least 1");
  Rng rng(seed);
  std::printf("%-10s %-8s %-16s %s\n", "kind", "claim", "min_eigenvalue", "verdict");
  for (const PdRow& r : pd_report(kinds, trials, temperature, rng, per_trial, atoms))
    std::printf("%-10s %-8s %-16.6e %s\n", to_string(r.kind).c_str(), r.claimed_pd ? "PD" : "not PD", r.min_eigenvalue,
                r.verdict.c_str());
  return 0;
}

int cmd_oracle(const std::string& config_path, std::size_t mdps, std::uint64_t seed) {
  const RunConfig c = load_run_config(config_path);
  const auto env = make_environment(c.environment);
  Rng rng(seed);
  OracleSuiteResult suite = random_mdp_oracle_suite(mdps, 10, 3, rng);
  OracleSuiteResult own;
  if (const TabularMDP* mdp = env->tabular()) {
    merge_worst(own, validate_occupancy(*mdp, uniform_policy(*mdp)));
    for (int k = 0; k < 5; ++k) merge_worst(own, validate_occupancy(*mdp, random_policy_table(*mdp, rng)));
  }
  auto print = [](const char* title, const OracleSuiteResult& r) {
    std::printf("%s (%zu cases)\n", title, r.cases);
    for (const OracleCheck& ch : r.worst)
      std::printf("  %-22s worst %.3e tol %.0e %s\n", ch.name.c_str(), ch.value, ch.tolerance, ch.pass() ? "PASS" : "FAIL");
  };
  print("random MDPs", suite);
  if (own.cases)
    print(("config environment " + env->name()).c_str(), own);
  else
    std::printf("config environment %s is not tabular; only the random suite ran\n", env->name().c_str());
  return suite.pass() && own.pass() ? 0 : kExitOracle;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qdsvpg: quality-diversity ensembles of policies"};
  app.require_subcommand(1);

  std::string config, out, resume, checkpoint, run, run_b, kinds = "JS,TD,Hellinger,TV,KL,RKL";
  std::size_t episodes = 10, bins = 20, trials = 200, per_trial = 8, atoms = 6, mdps = 20;
  double resolution = 1.0, threshold = 0.05, temperature = 0.5;
  std::vector<double> range;
  std::uint64_t seed = 0;
  bool quiet = false;

  auto* train = app.add_subcommand("train", "train every seed of a config");
  train->add_option("config", config, "run config (JSON)")->required();
  train->add_option("--out", out, "artifact directory (default runs/<label>)");
  train->add_option("--resume", resume, "continue from this checkpoint");
  train->add_flag("--quiet", quiet, "no per-iteration progress on stderr");

  auto* eval = app.add_subcommand("eval", "roll out a checkpoint's members");
  eval->add_option("checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--episodes", episodes, "episodes per member")->capture_default_str();
  eval->add_option("--resolution", resolution, "coverage cell size")->capture_default_str();
  eval->add_option("--bins", bins, "histogram bins")->capture_default_str();

  auto* div = app.add_subcommand("diversity", "histogram variance of dumped trajectories");
  div->add_option("run-dir", run, "seed directory or run root")->required();
  div->add_option("--bins", bins, "histogram bins")->capture_default_str();
  div->add_option("--range", range, "fixed histogram range LO HI")->expected(2);

  auto* cov = app.add_subcommand("coverage", "distinct cells visited by dumped trajectories");
  cov->add_option("run-dir", run, "seed directory or run root")->required();
  cov->add_option("--resolution", resolution, "cell size")->capture_default_str();

  auto* dec = app.add_subcommand("deceptive-compare", "compare best-member final returns of two runs");
  dec->add_option("run-dir-a", run, "first run")->required();
  dec->add_option("run-dir-b", run_b, "second run")->required();
  dec->add_option("--threshold", threshold, "return above which the distal region counts as reached")->capture_default_str();

  auto* pd = app.add_subcommand("pd-check", "random search for non-PD kernel Gram matrices");
  pd->add_option("--kinds", kinds, "comma-separated divergence kinds")->capture_default_str();
  pd->add_option("--trials", trials, "number of trials")->capture_default_str();
  pd->add_option("--temperature", temperature, "kernel temperature")->capture_default_str();
  pd->add_option("--per-trial", per_trial, "distributions per Gram matrix")->capture_default_str();
  pd->add_option("--atoms", atoms, "atoms per distribution")->capture_default_str();
  pd->add_option("--seed", seed, "search seed")->capture_default_str();

  auto* oracle = app.add_subcommand("oracle-check", "validate the exact occupancy oracle");
  oracle->add_option("config", config, "run config (JSON)")->required();
  oracle->add_option("--mdps", mdps, "random MDPs to check")->capture_default_str();
  oracle->add_option("--seed", seed, "seed for the random MDPs")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) return cmd_train(config, out, resume, quiet);
    if (*eval) return cmd_eval(checkpoint, episodes, resolution, bins);
    if (*div) return cmd_diversity(run, bins, range);
    if (*cov) return cmd_coverage(run, resolution);
    if (*dec) return cmd_deceptive(run, run_b, threshold);
    if (*pd) return cmd_pd(kinds, trials, temperature, per_trial, atoms, seed);
    if (*oracle) return cmd_oracle(config, mdps, seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const RunAborted& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
