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

#ifndef QDSVPG_POLICIES_ROLLOUT_HPP
#define QDSVPG_POLICIES_ROLLOUT_HPP

#include <cmath>
#include <span>
#include <vector>

#include "qdsvpg/core/dense_array.hpp"
#include "qdsvpg/core/errors.hpp"
#include "qdsvpg/core/random.hpp"
#include "qdsvpg/envs/environment.hpp"
#include "qdsvpg/policies/policy.hpp"

namespace qdsvpg {

struct Transition {
  State state;
  Action action;
  double reward = 0.0;
  State next;
  bool done = false;
  std::size_t t = 0;
};

/// A target policy's action at each of n states as K weighted branches: every
/// discrete action with its probability, or the one sampled continuous action.
struct ActionBranches {
  std::vector<DenseArray> sa;  // K matrices [n, d + e]
  DenseArray prob;             // [n, K]

  std::size_t count() const { return sa.size(); }
};

/// Fresh actions from one target policy, for the DICE objectives.
struct TargetAnnotation {
  std::vector<Action> next_actions;     // a' ~ pi_target(s'), one per transition
  DenseArray next_sa;                   // [n, d + e]
  std::vector<Action> initial_actions;  // a0 ~ pi_target(s0), one per initial state
  DenseArray initial_sa;                // [n0, d + e]
  ActionBranches next_branches;
  ActionBranches initial_branches;
};

struct RolloutBatch {
  std::vector<Transition> transitions;
  std::vector<std::size_t> episode_starts;
  double gamma = 0.99;
  std::vector<double> weights;        // gamma^t
  std::vector<double> displacement;   // behaviour descriptor per step
  std::vector<std::vector<double>> positions;  // position of each next state
  DenseArray features;                // [n, d]
  DenseArray next_features;           // [n, d]
  DenseArray sa;                      // [n, d + e] state features then action encoding
  std::vector<State> initial_states;
  DenseArray initial_features;        // [n0, d]
  std::vector<TargetAnnotation> targets;

  std::size_t size() const { return transitions.size(); }
  std::vector<Action> actions() const {
    std::vector<Action> out;
    out.reserve(size());
    for (const Transition& tr : transitions) out.push_back(tr.action);
    return out;
  }
  std::vector<double> rewards() const {
    std::vector<double> out;
    out.reserve(size());
    for (const Transition& tr : transitions) out.push_back(tr.reward);
    return out;
  }
  /// True at the final transition of every episode (terminal or truncated).
  bool episode_end(std::size_t k) const {
    return transitions[k].done || k + 1 == size() || transitions[k + 1].t == 0;
  }
};

/// Action encoding for (s, a) networks: one-hot for discrete, raw vector otherwise.
inline void encode_action(const ActionSpace& space, const Action& a, std::span<double> out) {
  if (space.discrete) {
    std::fill(out.begin(), out.end(), 0.0);
    out[a.index] = 1.0;
  } else {
    for (std::size_t k = 0; k < space.dim; ++k) out[k] = a.value[k];
  }
}

inline DenseArray state_action_matrix(const Environment& env, const DenseArray& features, std::span<const Action> actions) {
  const ActionSpace space = env.action_space();
  const std::size_t d = env.feature_dim(), e = space.encoding_dim();
  DenseArray out = DenseArray::matrix(actions.size(), d + e);
  for (std::size_t k = 0; k < actions.size(); ++k) {
    std::copy_n(features.values().begin() + static_cast<std::ptrdiff_t>(k * d), d,
                out.values().begin() + static_cast<std::ptrdiff_t>(k * (d + e)));
    encode_action(space, actions[k], out.values().subspan(k * (d + e) + d, e));
  }
  return out;
}

namespace detail {

// Samples actions, using a precomputed probability table on tabular environments.
class ActionSampler {
 public:
  ActionSampler(const Environment& env, const PolicyParams& policy) : env_(env), policy_(policy) {
    if (env.tabular() != nullptr && policy.discrete()) table_ = policy_table(policy, env);
    features_.resize(env.feature_dim());
  }

  Action sample(const State& s, Rng& rng) {
    if (!table_.empty()) {
      Action a;
      a.index = rng.categorical(table_.values().subspan(s.index * table_.cols(), table_.cols()));
      return a;
    }
    env_.features(s, features_);
    return sample_action(action_distribution(policy_, features_), rng);
  }

 private:
  const Environment& env_;
  const PolicyParams& policy_;
  DenseArray table_;
  std::vector<double> features_;
};

inline DenseArray feature_matrix(const Environment& env, std::span<const State> states) {
  const std::size_t d = env.feature_dim();
  DenseArray f = DenseArray::matrix(states.size(), d);
  for (std::size_t k = 0; k < states.size(); ++k) env.features(states[k], f.values().subspan(k * d, d));
  return f;
}

}  // namespace detail

inline ActionBranches action_branches(const Environment& env, const PolicyParams& target, const DenseArray& features,
                                      const DenseArray& sampled_sa) {
  ActionBranches b;
  const std::size_t n = features.rows();
  if (!target.discrete()) {
    b.sa.push_back(sampled_sa);
    b.prob = DenseArray::matrix(n, 1, 1.0);
    return b;
  }
  b.prob = policy_output(target, features);
  for (std::size_t a = 0; a < b.prob.cols(); ++a) {
    Action act;
    act.index = a;
    b.sa.push_back(state_action_matrix(env, features, std::vector<Action>(n, act)));
  }
  return b;
}

/// Draws a' ~ pi(s') for every transition and a0 ~ pi(s0) for every initial state.
inline TargetAnnotation annotate_target(const Environment& env, const RolloutBatch& batch, const PolicyParams& target, Rng& rng) {
  detail::ActionSampler sampler(env, target);
  TargetAnnotation ann;
  std::vector<State> next_states;
  next_states.reserve(batch.size());
  for (const Transition& tr : batch.transitions) {
    ann.next_actions.push_back(sampler.sample(tr.next, rng));
    next_states.push_back(tr.next);
  }
  for (const State& s0 : batch.initial_states) ann.initial_actions.push_back(sampler.sample(s0, rng));
  ann.next_sa = state_action_matrix(env, batch.next_features, ann.next_actions);
  ann.initial_sa = state_action_matrix(env, batch.initial_features, ann.initial_actions);
  ann.next_branches = action_branches(env, target, batch.next_features, ann.next_sa);
  ann.initial_branches = action_branches(env, target, batch.initial_features, ann.initial_sa);
  return ann;
}

// Runs `policy` for exactly n_transitions steps, restarting episodes at the
// horizon. All trajectory draws come first, then initial-state draws, then one
// annotation per target, so the trajectories do not depend on the target list.
inline RolloutBatch collect_rollouts(const Environment& env, const PolicyParams& policy, std::size_t n_transitions,
                                     Rng& rng, std::span<const PolicyParams* const> targets = {},
                                     std::size_t n_initial = 256) {
  if (n_transitions == 0) throw ContractError("collect_rollouts: n_transitions must be positive");
  if (n_initial == 0) throw ContractError("collect_rollouts: need at least one initial state");
  RolloutBatch b;
  b.gamma = env.gamma();
  b.transitions.reserve(n_transitions);
  detail::ActionSampler sampler(env, policy);
  const std::size_t horizon = env.horizon();
  State s = env.reset(rng);
  std::size_t t = 0;
  double w = 1.0;
  b.episode_starts.push_back(0);
  for (std::size_t k = 0; k < n_transitions; ++k) {
    Action a = sampler.sample(s, rng);
    StepResult r = env.step(s, a, rng);
    if (!std::isfinite(r.reward)) throw NumericError("collect_rollouts: non-finite environment reward");
    b.displacement.push_back(env.displacement(s, a, r.next));
    b.positions.push_back(env.position(r.next));
    b.weights.push_back(w);
    b.transitions.push_back(Transition{s, std::move(a), r.reward, r.next, r.done, t});
    ++t;
    w *= b.gamma;
    if (r.done || t == horizon) {
      if (k + 1 < n_transitions) {
        s = env.reset(rng);
        b.episode_starts.push_back(k + 1);
      }
      t = 0;
      w = 1.0;
    } else {
      s = std::move(r.next);
    }
  }
  std::vector<State> states, nexts;
  for (const Transition& tr : b.transitions) {
    states.push_back(tr.state);
    nexts.push_back(tr.next);
  }
  b.features = detail::feature_matrix(env, states);
  b.next_features = detail::feature_matrix(env, nexts);
  b.sa = state_action_matrix(env, b.features, b.actions());
  for (std::size_t k = 0; k < n_initial; ++k) b.initial_states.push_back(env.reset(rng));
  b.initial_features = detail::feature_matrix(env, b.initial_states);
  for (const PolicyParams* target : targets) b.targets.push_back(annotate_target(env, b, *target, rng));
  return b;
}

}  // namespace qdsvpg

#endif  // QDSVPG_POLICIES_ROLLOUT_HPP
