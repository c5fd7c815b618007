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

#ifndef QDSVPG_EXPERIMENT_METRICS_HPP
#define QDSVPG_EXPERIMENT_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qdsvpg/core/errors.hpp"
#include "qdsvpg/core/serialize.hpp"
#include "qdsvpg/divergence/kernel.hpp"
#include "qdsvpg/oracle/occupancy.hpp"
#include "qdsvpg/policies/rollout.hpp"

namespace qdsvpg {

/// One environment step of one member, as dumped to trajectories.jsonl.
struct TrajectoryStep {
  std::size_t member = 0;
  std::size_t episode = 0;
  std::size_t t = 0;
  std::vector<double> position;       // before the step
  std::vector<double> next_position;  // after the step
  std::vector<double> action;         // index for discrete spaces, else the raw vector
  double reward = 0.0;
  double displacement = 0.0;
};

inline Json to_json(const TrajectoryStep& s) {
  return Json{{"member", s.member},     {"episode", s.episode},           {"t", s.t},
              {"position", s.position}, {"next_position", s.next_position}, {"action", s.action},
              {"reward", s.reward},     {"displacement", s.displacement}};
}

inline TrajectoryStep trajectory_step_from_json(const Json& j) {
  TrajectoryStep s;
  s.member = j.at("member").get<std::size_t>();
  s.episode = j.at("episode").get<std::size_t>();
  s.t = j.at("t").get<std::size_t>();
  s.position = j.at("position").get<std::vector<double>>();
  s.next_position = j.at("next_position").get<std::vector<double>>();
  s.action = j.at("action").get<std::vector<double>>();
  s.reward = j.at("reward").get<double>();
  s.displacement = j.at("displacement").get<double>();
  return s;
}

/// Runs `episodes` full-horizon episodes of one policy and flattens them into steps.
inline std::vector<TrajectoryStep> record_trajectories(const Environment& env, const PolicyParams& policy,
                                                       std::size_t member, std::size_t episodes, Rng& rng) {
  if (episodes == 0) return {};
  const RolloutBatch b = collect_rollouts(env, policy, episodes * env.horizon(), rng, {}, 1);
  std::vector<TrajectoryStep> out;
  out.reserve(b.size());
  std::size_t episode = 0;
  for (std::size_t k = 0; k < b.size(); ++k) {
    const Transition& tr = b.transitions[k];
    if (k > 0 && tr.t == 0) ++episode;
    TrajectoryStep s;
    s.member = member;
    s.episode = episode;
    s.t = tr.t;
    s.position = env.position(tr.state);
    s.next_position = b.positions[k];
    s.action = tr.action.value.empty() ? std::vector<double>{static_cast<double>(tr.action.index)} : tr.action.value;
    s.reward = tr.reward;
    s.displacement = b.displacement[k];
    out.push_back(std::move(s));
  }
  return out;
}

using ValueExtractor = std::function<double(const TrajectoryStep&)>;

/// Signed per-step displacement: position change on the corridor, signed step length in the maze.
inline double step_displacement(const TrajectoryStep& s) { return s.displacement; }

struct HistogramRange {
  double lo = 0.0;
  double hi = 0.0;
};

// Equal-width bins whose outermost centres sit on lo and hi, so a value set
// {lo, hi} falls exactly on two bin centres.
inline double histogram_variance(std::span<const double> values, std::size_t n_bins, std::optional<HistogramRange> range = {}) {
  if (values.empty()) throw ContractError("diversity_metric: no steps");
  if (n_bins == 0) throw ContractError("diversity_metric: n_bins must be positive");
  for (double v : values)
    if (!std::isfinite(v)) throw NumericError("diversity_metric: non-finite value");
  HistogramRange r = range.value_or(HistogramRange{*std::min_element(values.begin(), values.end()),
                                                   *std::max_element(values.begin(), values.end())});
  if (!(r.hi >= r.lo)) throw ContractError("diversity_metric: histogram range is empty");
  if (n_bins == 1 || r.hi == r.lo) return 0.0;
  const double width = (r.hi - r.lo) / static_cast<double>(n_bins - 1);
  std::vector<double> counts(n_bins, 0.0);
  for (double v : values) {
    const double pos = std::floor((std::clamp(v, r.lo, r.hi) - r.lo) / width + 0.5);
    counts[std::min(n_bins - 1, static_cast<std::size_t>(std::max(0.0, pos)))] += 1.0;
  }
  const double n = static_cast<double>(values.size());
  double mean = 0.0, sq = 0.0;
  for (std::size_t b = 0; b < n_bins; ++b) mean += counts[b] * (r.lo + width * static_cast<double>(b)) / n;
  for (std::size_t b = 0; b < n_bins; ++b) {
    const double d = r.lo + width * static_cast<double>(b) - mean;
    sq += counts[b] * d * d / n;
  }
  return sq;
}

/// Variance of the binned per-step behaviour descriptor pooled over all members.
inline double diversity_metric(std::span<const TrajectoryStep> steps, std::size_t n_bins,
                               const ValueExtractor& extract = step_displacement, std::optional<HistogramRange> range = {}) {
  if (steps.empty()) throw ContractError("diversity_metric: no steps");
  std::vector<double> values;
  values.reserve(steps.size());
  for (const TrajectoryStep& s : steps) values.push_back(extract(s));
  return histogram_variance(values, n_bins, range);
}

/// Distinct cells of side `resolution` touched by any member, counting both ends of every step.
inline std::size_t coverage_metric(std::span<const TrajectoryStep> steps, double resolution = 1.0) {
  if (!(resolution > 0.0)) throw ContractError("coverage_metric: resolution must be positive");
  std::set<std::vector<long long>> cells;
  auto add = [&](const std::vector<double>& p) {
    std::vector<long long> c;
    c.reserve(p.size());
    for (double x : p) c.push_back(static_cast<long long>(std::floor(x / resolution)));
    cells.insert(std::move(c));
  };
  for (const TrajectoryStep& s : steps) {
    add(s.position);
    add(s.next_position);
  }
  return cells.size();
}

/// Final state of a finished run, enough to compare two runs.
struct RunSummary {
  std::string label;
  Json environment;
  std::vector<double> final_return;  // exact when the environment is tabular, else Monte-Carlo
  bool exact = false;

  double best() const {
    if (final_return.empty()) throw ContractError("run summary: no members");
    return *std::max_element(final_return.begin(), final_return.end());
  }
};

inline Json to_json(const RunSummary& s) {
  return Json{{"label", s.label}, {"environment", s.environment}, {"final_return", s.final_return}, {"exact", s.exact}};
}

inline RunSummary run_summary_from_json(const Json& j) {
  return RunSummary{j.at("label").get<std::string>(), j.at("environment"),
                    j.at("final_return").get<std::vector<double>>(), j.at("exact").get<bool>()};
}

struct DeceptiveReport {
  std::string label_a, label_b;
  double best_a = 0.0, best_b = 0.0;
  bool reached_a = false, reached_b = false;
  bool tie = false;
  std::string winner;  // label of the better run, or "tie"
  double threshold = 0.0;
};

/// Compares best-member final returns; a run "reached" the distal region when its best return exceeds `threshold`.
inline DeceptiveReport deceptive_eval(const RunSummary& a, const RunSummary& b, double threshold = 0.05,
                                      double tie_tolerance = 1e-12) {
  if (a.environment != b.environment) throw ConfigError("deceptive-compare: runs use different environments");
  DeceptiveReport r;
  r.label_a = a.label;
  r.label_b = b.label;
  r.best_a = a.best();
  r.best_b = b.best();
  r.threshold = threshold;
  r.reached_a = r.best_a > threshold;
  r.reached_b = r.best_b > threshold;
  r.tie = std::abs(r.best_a - r.best_b) <= tie_tolerance;
  r.winner = r.tie ? "tie" : (r.best_a > r.best_b ? a.label : b.label);
  return r;
}

struct PdRow {
  FDivergenceKind kind = FDivergenceKind::JS;
  bool claimed_pd = true;
  double min_eigenvalue = 1.0;
  std::string verdict;  // pd | violated | witness | not found
};

/// Random Gram-matrix search per kind. PD kinds pass at >= -1e-8; non-PD kinds report a witness below -1e-6.
inline std::vector<PdRow> pd_report(std::span<const FDivergenceKind> kinds, std::size_t trials, double temperature, Rng& rng,
                                    std::size_t per_trial = 8, std::size_t atoms = 6) {
  std::vector<PdRow> rows;
  for (FDivergenceKind k : kinds) {
    PdRow row;
    row.kind = k;
    row.claimed_pd = kernel_is_pd(k);
    row.min_eigenvalue = trials == 0 ? 1.0 : gram_pd_check(k, trials, per_trial, atoms, temperature, rng).min_eigenvalue;
    if (row.claimed_pd)
      row.verdict = row.min_eigenvalue >= -1e-8 ? "pd" : "violated";
    else
      row.verdict = row.min_eigenvalue < -1e-6 ? "witness" : "not found";
    rows.push_back(row);
  }
  return rows;
}

struct OracleCheck {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass() const { return value <= tolerance; }
};

/// Random softmax table with logits of scale `spread`.
inline DenseArray random_policy_table(const TabularMDP& mdp, Rng& rng, double spread = 2.0) {
  DenseArray pi = DenseArray::matrix(mdp.n_states, mdp.n_actions);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    double total = 0.0;
    for (std::size_t a = 0; a < mdp.n_actions; ++a) total += pi(s, a) = std::exp(spread * rng.normal());
    for (std::size_t a = 0; a < mdp.n_actions; ++a) pi(s, a) /= total;
  }
  return pi;
}

// Bellman flow residual, agreement with the truncated series, total mass and
// agreement of eta with the value-function route, for one (MDP, policy).
inline std::vector<OracleCheck> validate_occupancy(const TabularMDP& mdp, const DenseArray& pi) {
  const OccupancyMeasure m = exact_occupancy(mdp, pi);
  const auto steps = static_cast<std::size_t>(std::ceil(std::log(1e-13) / std::log(std::max(mdp.gamma, 1e-3)))) + 1;
  const OccupancyMeasure p = power_iteration_occupancy(mdp, pi, steps);
  double series = 0.0;
  for (std::size_t k = 0; k < m.rho.size(); ++k) series = std::max(series, std::abs(m.rho[k] - p.rho[k]));
  const std::vector<double> v = exact_values(mdp, pi);
  double via_values = 0.0;
  for (std::size_t s = 0; s < mdp.n_states; ++s) via_values += (1.0 - mdp.gamma) * mdp.mu0[s] * v[s];
  return {
      {"flow residual", flow_residual(mdp, pi, m), 1e-8},
      {"power iteration gap", series, 1e-6},
      {"total mass gap", std::abs(m.total() - 1.0), 1e-10},
      {"return vs values gap", std::abs(exact_return(mdp, pi) - via_values), 1e-8},
  };
}

struct OracleSuiteResult {
  std::size_t cases = 0;
  std::vector<OracleCheck> worst;  // per check name, the largest value seen
  bool pass() const {
    return std::all_of(worst.begin(), worst.end(), [](const OracleCheck& c) { return c.pass(); });
  }
};

inline void merge_worst(OracleSuiteResult& r, const std::vector<OracleCheck>& checks) {
  for (const OracleCheck& c : checks) {
    auto it = std::find_if(r.worst.begin(), r.worst.end(), [&](const OracleCheck& w) { return w.name == c.name; });
    if (it == r.worst.end())
      r.worst.push_back(c);
    else if (c.value > it->value || std::isnan(c.value))
      it->value = c.value;
  }
  ++r.cases;
}

/// Occupancy checks on `mdps` random MDPs with up to `max_states` states and `policies` random policies each.
inline OracleSuiteResult random_mdp_oracle_suite(std::size_t mdps, std::size_t max_states, std::size_t policies, Rng& rng) {
  OracleSuiteResult r;
  for (std::size_t k = 0; k < mdps; ++k) {
    const std::size_t s = 2 + rng.index(max_states - 1), a = 2 + rng.index(3);
    const double gamma = rng.uniform(0.5, 0.99);
    const TabularMDP mdp = make_random_mdp(s, a, gamma, rng);
    for (std::size_t p = 0; p < policies; ++p) merge_worst(r, validate_occupancy(mdp, random_policy_table(mdp, rng)));
  }
  return r;
}

}  // namespace qdsvpg

#endif  // QDSVPG_EXPERIMENT_METRICS_HPP
