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

#ifndef QDSVPG_EXPERIMENT_RUNNER_HPP
#define QDSVPG_EXPERIMENT_RUNNER_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "qdsvpg/experiment/config.hpp"
#include "qdsvpg/experiment/metrics.hpp"
#include "qdsvpg/svpg/ensemble.hpp"

namespace qdsvpg {

inline constexpr const char* kCheckpointFormat = "qdsvpg-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Thrown when training stops on a numeric failure; the checkpoint has been written.
class RunAborted : public NumericError {
 public:
  RunAborted(const std::string& msg, std::filesystem::path checkpoint)
      : NumericError(msg), checkpoint_(std::move(checkpoint)) {}
  const std::filesystem::path& checkpoint() const { return checkpoint_; }

 private:
  std::filesystem::path checkpoint_;
};

namespace detail {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << s;
}

inline Json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open " + p.string());
  try {
    Json j;
    in >> j;
    return j;
  } catch (const Json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

// Config fields that may change between a checkpoint and its resume.
inline Json resumable_view(const RunConfig& c) {
  Json j = to_json(c);
  j.erase("iterations");
  j.erase("seeds");
  j.erase("output");
  return j;
}

}  // namespace detail

/// CSV header for an n-member run; identical for every estimator kind.
inline std::string metrics_header(std::size_t n) {
  std::string h = "iteration,label,seed";
  for (std::size_t k = 0; k < n; ++k) h += ",mc_return_" + std::to_string(k);
  for (std::size_t k = 0; k < n; ++k) h += ",exact_return_" + std::to_string(k);
  for (const char* m : {"divergence", "kernel", "exact_divergence"})
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) h += std::string(",") + m + "_" + std::to_string(i) + "_" + std::to_string(j);
  h += ",estimator_error,max_delta_norm,policy_loss,value_loss,clip_fraction,rolled_back";
  return h;
}

inline std::string metrics_row(const IterationMetrics& m, const std::string& label, std::uint64_t seed, std::size_t n) {
  std::ostringstream o;
  o << m.iteration << ',' << label << ',' << seed;
  for (std::size_t k = 0; k < n; ++k) o << ',' << detail::fmt(m.mc_return.at(k));
  for (std::size_t k = 0; k < n; ++k)
    o << ',' << detail::fmt(k < m.exact_return.size() ? m.exact_return[k] : std::numeric_limits<double>::quiet_NaN());
  for (const DenseArray* a : {&m.divergence, &m.kernel, &m.exact_divergence})
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) o << ',' << detail::fmt(a->size() == n * n ? (*a)(i, j) : std::numeric_limits<double>::quiet_NaN());
  o << ',' << detail::fmt(m.estimator_error) << ',' << detail::fmt(m.max_delta_norm) << ','
    << detail::fmt(m.policy_loss) << ',' << detail::fmt(m.value_loss) << ',' << detail::fmt(m.clip_fraction) << ','
    << (m.rolled_back ? 1 : 0);
  return o.str();
}

inline Json make_checkpoint(const RunConfig& c, std::uint64_t seed, const Ensemble& e) {
  return Json{{"format", kCheckpointFormat}, {"version", kCheckpointVersion}, {"seed", seed},
              {"config", to_json(c)},         {"ensemble", e.to_json()}};
}

struct LoadedCheckpoint {
  RunConfig config;
  std::uint64_t seed = 0;
  Json ensemble;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& p) {
  const Json j = detail::read_json(p);
  if (!j.is_object() || j.value("format", std::string()) != kCheckpointFormat)
    throw ConfigError(p.string() + ": not a checkpoint");
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw ConfigError(p.string() + ": unsupported checkpoint version " + j.at("version").dump());
  return LoadedCheckpoint{parse_run_config(j.at("config")), j.at("seed").get<std::uint64_t>(), j.at("ensemble")};
}

/// Ensemble rebuilt from a checkpoint, ready to continue or to evaluate.
inline Ensemble restore_ensemble(const LoadedCheckpoint& ck, std::shared_ptr<const Environment> env) {
  Ensemble e(ensemble_config(ck.config, *env), env, ck.seed);
  e.load(ck.ensemble);
  return e;
}

inline RunSummary summarize(const RunConfig& c, const IterationMetrics& last) {
  RunSummary s;
  s.label = c.label();
  s.environment = to_json(c.environment);
  s.exact = !last.exact_return.empty();
  s.final_return = s.exact ? last.exact_return : last.mc_return;
  return s;
}

/// Evaluation rollouts of every member from a stream derived from the seed, so
/// dumping trajectories never touches the training stream.
inline std::vector<TrajectoryStep> evaluation_trajectories(const Ensemble& e, std::uint64_t seed, std::size_t episodes,
                                                           std::uint64_t stream = 1) {
  std::vector<TrajectoryStep> out;
  for (std::size_t k = 0; k < e.size(); ++k) {
    Rng rng = Rng::derive(seed, stream, k);
    std::vector<TrajectoryStep> steps = record_trajectories(e.env(), e.member(k).policy, k, episodes, rng);
    out.insert(out.end(), steps.begin(), steps.end());
  }
  return out;
}

inline void write_trajectories(const std::filesystem::path& p, std::span<const TrajectoryStep> steps) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + p.string());
  for (const TrajectoryStep& s : steps) out << to_json(s).dump() << '\n';
}

inline std::vector<TrajectoryStep> read_trajectories(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open " + p.string());
  std::vector<TrajectoryStep> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(trajectory_step_from_json(Json::parse(line)));
    } catch (const Json::exception& e) {
      throw ConfigError(p.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

struct SeedRunOptions {
  std::filesystem::path dir;
  const Json* resume = nullptr;  // ensemble state to continue from
  std::ostream* log = nullptr;
};

/// Trains one seed into `opt.dir`. Resuming keeps the metrics rows up to the
/// checkpoint's iteration and appends the rest.
inline RunSummary run_seed(const RunConfig& c, std::uint64_t seed, const SeedRunOptions& opt) {
  namespace fs = std::filesystem;
  fs::create_directories(opt.dir);
  const std::shared_ptr<const Environment> env = make_environment(c.environment);
  Ensemble e(ensemble_config(c, *env), env, seed);
  if (opt.resume) e.load(*opt.resume);
  if (e.iteration() >= c.iterations)
    throw ConfigError("iterations: checkpoint is already at iteration " + std::to_string(e.iteration()));

  detail::write_text(opt.dir / "config.json", to_json(c).dump(2) + "\n");
  const std::string header = metrics_header(c.n);
  std::string kept = header + "\n", kept_timing = "iteration,rollout_seconds,estimator_seconds,update_seconds\n";
  if (opt.resume) {
    auto keep = [&](const fs::path& p, std::string& dst) {
      std::ifstream in(p);
      std::string line;
      if (!std::getline(in, line)) return;
      while (std::getline(in, line)) {
        const std::size_t it = std::stoul(line.substr(0, line.find(',')));
        if (it <= e.iteration()) dst += line + "\n";
      }
    };
    keep(opt.dir / "metrics.csv", kept);
    keep(opt.dir / "timing.csv", kept_timing);
  }
  std::ofstream metrics(opt.dir / "metrics.csv", std::ios::binary | std::ios::trunc);
  std::ofstream timing(opt.dir / "timing.csv", std::ios::binary | std::ios::trunc);
  if (!metrics || !timing) throw ConfigError("cannot write into " + opt.dir.string());
  metrics << kept;
  timing << kept_timing;

  IterationMetrics last;
  auto fail_run = [&](const std::string& why) {
    const fs::path ck = opt.dir / "checkpoint.json";
    detail::write_text(ck, make_checkpoint(c, seed, e).dump() + "\n");
    throw RunAborted(why + "; checkpoint written to " + ck.string(), ck);
  };
  while (e.iteration() < c.iterations) {
    try {
      last = e.train_iteration();
    } catch (const NumericError& ex) {
      fail_run(ex.what());
    }
    metrics << metrics_row(last, c.label(), seed, c.n) << '\n' << std::flush;
    timing << last.iteration << ',' << detail::fmt(last.seconds_rollout) << ',' << detail::fmt(last.seconds_estimator)
           << ',' << detail::fmt(last.seconds_update) << '\n';
    if (opt.log) {
      double best = -std::numeric_limits<double>::infinity();
      for (double r : last.exact_return.empty() ? last.mc_return : last.exact_return) best = std::max(best, r);
      *opt.log << c.label() << " seed " << seed << " iteration " << last.iteration << " best return " << best << '\n';
    }
    if (last.rolled_back) fail_run(last.error);
    if (c.checkpoint_every && e.iteration() % c.checkpoint_every == 0)
      detail::write_text(opt.dir / ("checkpoint-" + std::to_string(e.iteration()) + ".json"),
                         make_checkpoint(c, seed, e).dump() + "\n");
  }
  detail::write_text(opt.dir / "checkpoint.json", make_checkpoint(c, seed, e).dump() + "\n");
  write_trajectories(opt.dir / "trajectories.jsonl", evaluation_trajectories(e, seed, c.eval_episodes));
  RunSummary s = summarize(c, last);
  detail::write_text(opt.dir / "summary.json", to_json(s).dump(2) + "\n");
  return s;
}

inline std::filesystem::path seed_dir(const std::filesystem::path& root, std::uint64_t seed) {
  return root / ("seed-" + std::to_string(seed));
}

/// Trains every configured seed into <out>/seed-<s>.
inline std::vector<RunSummary> run_train(const RunConfig& c, const std::filesystem::path& out, std::ostream* log = nullptr) {
  std::vector<RunSummary> all;
  for (std::uint64_t seed : c.seeds) all.push_back(run_seed(c, seed, SeedRunOptions{seed_dir(out, seed), nullptr, log}));
  return all;
}

/// Continues the checkpointed seed up to c.iterations; the rest of the config must match.
inline RunSummary resume_train(const RunConfig& c, const std::filesystem::path& checkpoint, const std::filesystem::path& out,
                               std::ostream* log = nullptr) {
  const LoadedCheckpoint ck = load_checkpoint(checkpoint);
  if (detail::resumable_view(ck.config) != detail::resumable_view(c))
    throw ConfigError("resume: config differs from the checkpoint's beyond iterations, seeds and output");
  return run_seed(c, ck.seed, SeedRunOptions{seed_dir(out, ck.seed), &ck.ensemble, log});
}

/// Run directories below `path`: the path itself when it holds `file`, else its seed-* children.
inline std::vector<std::filesystem::path> run_dirs(const std::filesystem::path& path, const std::string& file) {
  namespace fs = std::filesystem;
  if (fs::exists(path / file)) return {path};
  std::vector<fs::path> out;
  if (fs::is_directory(path))
    for (const auto& entry : fs::directory_iterator(path))
      if (entry.is_directory() && fs::exists(entry.path() / file)) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw ConfigError(path.string() + ": no " + file + " found");
  return out;
}

}  // namespace qdsvpg

#endif  // QDSVPG_EXPERIMENT_RUNNER_HPP
