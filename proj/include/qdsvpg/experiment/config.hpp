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

#ifndef QDSVPG_EXPERIMENT_CONFIG_HPP
#define QDSVPG_EXPERIMENT_CONFIG_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "qdsvpg/core/errors.hpp"
#include "qdsvpg/core/serialize.hpp"
#include "qdsvpg/envs/corridor.hpp"
#include "qdsvpg/envs/gridmaze.hpp"
#include "qdsvpg/envs/tabular_mdp.hpp"
#include "qdsvpg/envs/zero_reward.hpp"
#include "qdsvpg/svpg/ensemble.hpp"

namespace qdsvpg {

/// Environment description. Keys that do not apply to `type` are rejected.
struct EnvSpec {
  std::string type = "maze";  // corridor | gridmaze | maze | random_mdp
  bool zero_reward = false;
  double gamma = 0.99;
  std::size_t horizon = 0;  // 0: the type's default

  // corridor
  std::size_t length = 12;
  std::size_t threshold = 6;
  double penalty = 0.1;
  double movement_reward = 1.0;

  // gridmaze, maze
  std::vector<std::string> grid;  // empty: the built-in two-route maze
  std::string grid_file;
  double step_scale = 0.25;

  // random_mdp
  std::size_t states = 4;
  std::size_t actions = 2;
  std::uint64_t mdp_seed = 0;
  bool deterministic = true;

  std::size_t default_horizon() const {
    if (type == "corridor") return 200;
    if (type == "random_mdp") return 50;
    return 100;
  }
  std::size_t effective_horizon() const { return horizon ? horizon : default_horizon(); }
};

struct RunConfig {
  EnvSpec environment;
  std::size_t n = 4;
  EstimatorKind estimator = EstimatorKind::DualDICE;
  FDivergenceKind divergence = FDivergenceKind::JS;
  double temperature = std::numeric_limits<double>::quiet_NaN();  // NaN: 0.5 for JS, 1 for KLS
  std::size_t iterations = 100;
  std::size_t transitions = 2048;
  std::size_t initial_states = 256;
  std::vector<std::uint64_t> seeds{0};

  std::string policy_kind = "auto";  // auto picks mlp-categorical or mlp-gaussian from the action space
  std::size_t policy_hidden_layers = 2;
  std::size_t policy_width = 64;
  double init_log_std = 0.0;

  std::size_t value_hidden_layers = 2;
  std::size_t value_width = 64;
  double value_lr = 1e-3;

  PpoConfig ppo;
  EstimatorConfig estimator_net;

  bool self_quality_only = false;
  KernelNormalization normalization = KernelNormalization::Count;
  AdvantageNorm divergence_advantage_norm = AdvantageNorm::Standardize;

  std::size_t eval_episodes = 4;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only

  double effective_temperature() const { return std::isnan(temperature) ? default_temperature(divergence) : temperature; }

  /// QD-{estimator}-{divergence}; independent members are labelled PPO-x{n}.
  std::string label() const {
    if (estimator == EstimatorKind::None) return "PPO-x" + std::to_string(n);
    return "QD-" + to_string(estimator) + "-" + to_string(divergence);
  }
};

namespace detail {

inline bool is_count(const Json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

// Walks one JSON object, recording every problem under its dotted path
// instead of stopping at the first.
class FieldReader {
 public:
  FieldReader(const Json& j, std::string path, std::vector<std::string>& errors)
      : j_(j), path_(std::move(path)), errors_(errors) {
    if (!j_.is_object()) {
      fail("", "expected an object");
      ok_ = false;
    }
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void fail(const std::string& key, const std::string& msg) {
    errors_.push_back((key.empty() ? (path_.empty() ? std::string("<root>") : path_) : at(key)) + ": " + msg);
  }

  const Json* find(const std::string& key) {
    if (!ok_) return nullptr;
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const Json* v = find(key)) {
      if (v->is_number())
        out = v->get<double>();
      else
        fail(key, "expected a number");
    }
  }

  void count(const std::string& key, std::size_t& out) {
    if (const Json* v = find(key)) {
      if (is_count(*v))
        out = v->get<std::size_t>();
      else
        fail(key, "expected a non-negative integer");
    }
  }

  void seed(const std::string& key, std::uint64_t& out) {
    if (const Json* v = find(key)) {
      if (is_count(*v))
        out = v->get<std::uint64_t>();
      else
        fail(key, "expected a non-negative integer");
    }
  }

  void flag(const std::string& key, bool& out) {
    if (const Json* v = find(key)) {
      if (v->is_boolean())
        out = v->get<bool>();
      else
        fail(key, "expected true or false");
    }
  }

  void text(const std::string& key, std::string& out) {
    if (const Json* v = find(key)) {
      if (v->is_string())
        out = v->get<std::string>();
      else
        fail(key, "expected a string");
    }
  }

  template <class Enum, class Parse>
  void choice(const std::string& key, Enum& out, Parse parse) {
    std::string s;
    const std::size_t before = errors_.size();
    text(key, s);
    if (s.empty() || errors_.size() != before) return;
    try {
      out = parse(s);
    } catch (const ConfigError& e) {
      fail(key, e.what());
    }
  }

  void finish() {
    if (!ok_) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(it.key(), "unknown key");
  }

 private:
  const Json& j_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
  bool ok_ = true;
};

inline void read_environment(const Json& j, EnvSpec& e, std::vector<std::string>& errors) {
  FieldReader r(j, "environment", errors);
  r.text("type", e.type);
  r.flag("zero_reward", e.zero_reward);
  r.number("gamma", e.gamma);
  r.count("horizon", e.horizon);
  if (e.type == "corridor") {
    r.count("length", e.length);
    r.count("threshold", e.threshold);
    r.number("penalty", e.penalty);
    r.number("movement_reward", e.movement_reward);
  } else if (e.type == "gridmaze" || e.type == "maze") {
    if (const Json* g = r.find("grid")) {
      if (g->is_array() && std::all_of(g->begin(), g->end(), [](const Json& x) { return x.is_string(); }))
        e.grid = g->get<std::vector<std::string>>();
      else
        r.fail("grid", "expected an array of strings");
    }
    r.text("grid_file", e.grid_file);
    if (e.type == "maze") r.number("step_scale", e.step_scale);
    if (!e.grid.empty() && !e.grid_file.empty()) r.fail("grid_file", "give either grid or grid_file, not both");
  } else if (e.type == "random_mdp") {
    r.count("states", e.states);
    r.count("actions", e.actions);
    r.seed("mdp_seed", e.mdp_seed);
    r.flag("deterministic", e.deterministic);
  } else {
    r.fail("type", "unknown environment type '" + e.type + "' (expected corridor, gridmaze, maze or random_mdp)");
    return;
  }
  r.finish();
  if (!(e.gamma >= 0.0 && e.gamma < 1.0)) r.fail("gamma", "must lie in [0, 1)");
  if (e.type == "corridor") {
    if (e.length < 2) r.fail("length", "must be at least 2");
    if (e.threshold == 0 || e.threshold >= e.length) r.fail("threshold", "must satisfy 0 < threshold < length");
    if (!(e.penalty >= 0.0)) r.fail("penalty", "must be non-negative");
  }
  if (e.type == "maze" && !(e.step_scale > 0.0)) r.fail("step_scale", "must be positive");
  if (e.type == "random_mdp") {
    if (e.states == 0) r.fail("states", "must be positive");
    if (e.actions == 0) r.fail("actions", "must be positive");
  }
}

}  // namespace detail

/// Parses and validates a run configuration; all problems are reported together.
inline RunConfig parse_run_config(const Json& j) {
  RunConfig c;
  std::vector<std::string> errors;
  detail::FieldReader r(j, "", errors);
  if (const Json* e = r.find("environment")) detail::read_environment(*e, c.environment, errors);
  r.count("n", c.n);
  r.choice("estimator", c.estimator, estimator_kind_from_string);
  r.choice("divergence", c.divergence, divergence_kind_from_string);
  if (const Json* t = r.find("temperature")) {
    if (t->is_number())
      c.temperature = t->get<double>();
    else if (!t->is_null())
      r.fail("temperature", "expected a number or null");
  }
  r.count("iterations", c.iterations);
  r.count("transitions", c.transitions);
  r.count("initial_states", c.initial_states);
  if (const Json* s = r.find("seeds")) {
    if (s->is_array() && !s->empty() && std::all_of(s->begin(), s->end(), [](const Json& x) { return detail::is_count(x); }))
      c.seeds = s->get<std::vector<std::uint64_t>>();
    else
      r.fail("seeds", "expected a non-empty array of non-negative integers");
  }

  if (const Json* p = r.find("policy")) {
    detail::FieldReader pr(*p, "policy", errors);
    pr.text("kind", c.policy_kind);
    pr.count("hidden_layers", c.policy_hidden_layers);
    pr.count("width", c.policy_width);
    pr.number("init_log_std", c.init_log_std);
    pr.finish();
    if (c.policy_kind != "auto") {
      try {
        policy_kind_from_string(c.policy_kind);
      } catch (const ConfigError& e) {
        pr.fail("kind", e.what());
      }
    }
  }
  if (const Json* v = r.find("value")) {
    detail::FieldReader vr(*v, "value", errors);
    vr.count("hidden_layers", c.value_hidden_layers);
    vr.count("width", c.value_width);
    vr.number("lr", c.value_lr);
    vr.finish();
  }
  if (const Json* p = r.find("ppo")) {
    detail::FieldReader pr(*p, "ppo", errors);
    pr.number("lr", c.ppo.lr);
    pr.number("clip", c.ppo.clip);
    pr.count("epochs", c.ppo.epochs);
    pr.count("minibatch", c.ppo.minibatch);
    pr.number("gae_lambda", c.ppo.gae_lambda);
    pr.choice("advantage_norm", c.ppo.advantage_norm, advantage_norm_from_string);
    pr.flag("discount_weighting", c.ppo.discount_weighting);
    pr.finish();
  }
  if (const Json* e = r.find("estimator_net")) {
    detail::FieldReader er(*e, "estimator_net", errors);
    er.count("hidden_layers", c.estimator_net.hidden_layers);
    er.count("width", c.estimator_net.width);
    er.number("lr", c.estimator_net.lr);
    er.count("steps", c.estimator_net.steps);
    er.count("minibatch", c.estimator_net.minibatch);
    er.number("gendice_lambda", c.estimator_net.gendice_lambda);
    er.number("ascent_lr_ratio", c.estimator_net.ascent_lr_ratio);
    er.finish();
  }
  if (const Json* s = r.find("svpg")) {
    detail::FieldReader sr(*s, "svpg", errors);
    sr.flag("self_quality_only", c.self_quality_only);
    sr.choice("normalization", c.normalization, kernel_normalization_from_string);
    sr.choice("divergence_advantage_norm", c.divergence_advantage_norm, advantage_norm_from_string);
    sr.finish();
  }
  if (const Json* o = r.find("output")) {
    detail::FieldReader orr(*o, "output", errors);
    orr.count("eval_episodes", c.eval_episodes);
    orr.count("checkpoint_every", c.checkpoint_every);
    orr.finish();
  }
  r.finish();

  auto bad = [&](const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); };
  if (c.n == 0) bad("n", "must be positive");
  if (c.iterations == 0) bad("iterations", "must be positive");
  if (c.transitions == 0) bad("transitions", "must be positive");
  if (c.initial_states == 0) bad("initial_states", "must be positive");
  if (!has_surrogate(c.divergence)) bad("divergence", "must be JS or KLS");
  if (!(c.effective_temperature() > 0.0)) bad("temperature", "must be positive");
  if (c.estimator == EstimatorKind::NCE && c.n < 2) bad("estimator", "NCE needs at least two members");
  if (c.policy_hidden_layers > 0 && c.policy_width == 0) bad("policy.width", "must be positive");
  if (c.value_hidden_layers > 0 && c.value_width == 0) bad("value.width", "must be positive");
  if (!(c.value_lr > 0.0)) bad("value.lr", "must be positive");
  if (!(c.ppo.lr > 0.0)) bad("ppo.lr", "must be positive");
  if (!(c.ppo.clip > 0.0)) bad("ppo.clip", "must be positive");
  if (c.ppo.epochs == 0) bad("ppo.epochs", "must be positive");
  if (c.ppo.minibatch == 0) bad("ppo.minibatch", "must be positive");
  if (!(c.ppo.gae_lambda >= 0.0 && c.ppo.gae_lambda <= 1.0)) bad("ppo.gae_lambda", "must lie in [0, 1]");
  if (c.estimator_net.hidden_layers > 0 && c.estimator_net.width == 0) bad("estimator_net.width", "must be positive");
  if (!(c.estimator_net.lr > 0.0)) bad("estimator_net.lr", "must be positive");
  if (c.estimator_net.minibatch == 0) bad("estimator_net.minibatch", "must be positive");
  if (!(c.estimator_net.gendice_lambda >= 0.0)) bad("estimator_net.gendice_lambda", "must be non-negative");
  if (!(c.estimator_net.ascent_lr_ratio > 0.0)) bad("estimator_net.ascent_lr_ratio", "must be positive");

  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const std::string& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_run_config(j);
}

inline Json to_json(const EnvSpec& e) {
  Json j{{"type", e.type}, {"zero_reward", e.zero_reward}, {"gamma", e.gamma}, {"horizon", e.horizon}};
  if (e.type == "corridor") {
    j["length"] = e.length;
    j["threshold"] = e.threshold;
    j["penalty"] = e.penalty;
    j["movement_reward"] = e.movement_reward;
  } else if (e.type == "gridmaze" || e.type == "maze") {
    if (!e.grid.empty()) j["grid"] = e.grid;
    if (!e.grid_file.empty()) j["grid_file"] = e.grid_file;
    if (e.type == "maze") j["step_scale"] = e.step_scale;
  } else if (e.type == "random_mdp") {
    j["states"] = e.states;
    j["actions"] = e.actions;
    j["mdp_seed"] = e.mdp_seed;
    j["deterministic"] = e.deterministic;
  }
  return j;
}

/// Complete form of a config; parse_run_config(to_json(c)) reproduces c.
inline Json to_json(const RunConfig& c) {
  return Json{
      {"environment", to_json(c.environment)},
      {"n", c.n},
      {"estimator", to_string(c.estimator)},
      {"divergence", to_string(c.divergence)},
      {"temperature", c.effective_temperature()},
      {"iterations", c.iterations},
      {"transitions", c.transitions},
      {"initial_states", c.initial_states},
      {"seeds", c.seeds},
      {"policy", {{"kind", c.policy_kind}, {"hidden_layers", c.policy_hidden_layers}, {"width", c.policy_width},
                  {"init_log_std", c.init_log_std}}},
      {"value", {{"hidden_layers", c.value_hidden_layers}, {"width", c.value_width}, {"lr", c.value_lr}}},
      {"ppo", {{"lr", c.ppo.lr}, {"clip", c.ppo.clip}, {"epochs", c.ppo.epochs}, {"minibatch", c.ppo.minibatch},
               {"gae_lambda", c.ppo.gae_lambda}, {"advantage_norm", to_string(c.ppo.advantage_norm)},
               {"discount_weighting", c.ppo.discount_weighting}}},
      {"estimator_net", {{"hidden_layers", c.estimator_net.hidden_layers}, {"width", c.estimator_net.width},
                         {"lr", c.estimator_net.lr}, {"steps", c.estimator_net.steps},
                         {"minibatch", c.estimator_net.minibatch}, {"gendice_lambda", c.estimator_net.gendice_lambda},
                         {"ascent_lr_ratio", c.estimator_net.ascent_lr_ratio}}},
      {"svpg", {{"self_quality_only", c.self_quality_only}, {"normalization", to_string(c.normalization)},
                {"divergence_advantage_norm", to_string(c.divergence_advantage_norm)}}},
      {"output", {{"eval_episodes", c.eval_episodes}, {"checkpoint_every", c.checkpoint_every}}},
  };
}

inline GridSpec grid_spec_for(const EnvSpec& e) {
  GridSpec spec = default_maze_spec();
  if (!e.grid_file.empty()) spec = load_grid_spec(e.grid_file);
  if (!e.grid.empty()) spec.grid = e.grid;
  spec.gamma = e.gamma;
  spec.horizon = e.effective_horizon();
  spec.step_scale = e.step_scale;
  spec.validate();
  return spec;
}

inline std::shared_ptr<const Environment> make_environment(const EnvSpec& e) {
  std::shared_ptr<const Environment> env;
  if (e.type == "corridor") {
    env = std::make_shared<TabularEnv>(
        make_deceptive_corridor(e.length, e.threshold, e.penalty, e.gamma, e.movement_reward, e.effective_horizon()));
  } else if (e.type == "gridmaze") {
    env = std::make_shared<TabularEnv>(make_gridmaze(grid_spec_for(e)));
  } else if (e.type == "maze") {
    env = std::make_shared<ContinuousMaze>(grid_spec_for(e));
  } else if (e.type == "random_mdp") {
    Rng rng(e.mdp_seed);
    TabularMDP m = e.deterministic ? make_random_deterministic_mdp(e.states, e.actions, e.gamma, rng)
                                   : make_random_mdp(e.states, e.actions, e.gamma, rng);
    m.horizon = e.effective_horizon();
    env = std::make_shared<TabularEnv>(std::move(m));
  } else {
    throw ConfigError("environment.type: unknown environment type '" + e.type + "'");
  }
  return e.zero_reward ? zero_reward(env) : env;
}

inline EnsembleConfig ensemble_config(const RunConfig& c, const Environment& env) {
  EnsembleConfig cfg;
  cfg.n = c.n;
  if (c.policy_kind == "auto")
    cfg.policy_kind = env.action_space().discrete ? PolicyKind::MlpCategorical : PolicyKind::MlpGaussian;
  else
    cfg.policy_kind = policy_kind_from_string(c.policy_kind);
  cfg.policy_hidden_layers = c.policy_hidden_layers;
  cfg.policy_width = c.policy_width;
  cfg.init_log_std = c.init_log_std;
  cfg.value_hidden_layers = c.value_hidden_layers;
  cfg.value_width = c.value_width;
  cfg.ppo = c.ppo;
  cfg.ppo.gamma = env.gamma();
  cfg.ppo.value_lr = c.value_lr;
  cfg.estimator = c.estimator_net;
  cfg.estimator.kind = c.estimator;
  cfg.kernel = KernelSpec{c.divergence, c.effective_temperature()};
  cfg.transitions = c.transitions;
  cfg.n_initial = c.initial_states;
  cfg.self_quality_only = c.self_quality_only;
  cfg.normalization = c.normalization;
  cfg.divergence_advantage_norm = c.divergence_advantage_norm;
  return cfg;
}

}  // namespace qdsvpg

#endif  // QDSVPG_EXPERIMENT_CONFIG_HPP
