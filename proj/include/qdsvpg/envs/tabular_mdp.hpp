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

#ifndef QDSVPG_ENVS_TABULAR_MDP_HPP
#define QDSVPG_ENVS_TABULAR_MDP_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qdsvpg/core/errors.hpp"
#include "qdsvpg/core/random.hpp"
#include "qdsvpg/envs/environment.hpp"

namespace qdsvpg {

/// Finite MDP with dense transition tensor P[s][a][s'] and reward table r[s][a].
struct TabularMDP {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> transition;  // n_states * n_actions * n_states
  std::vector<double> reward;      // n_states * n_actions
  std::vector<double> mu0;         // n_states
  double gamma = 0.99;
  std::size_t horizon = 200;

  std::string name = "tabular";
  /// Planar coordinates per state for behaviour metrics.
  std::vector<std::array<double, 2>> coords;
  /// First state index of a reward region, when the construction has one.
  std::optional<std::size_t> region_start;
  /// Optional signed displacement per (s,a); empty means "use coordinates".
  std::vector<double> velocity;
  std::vector<std::string> warnings;

  TabularMDP() = default;
  TabularMDP(std::size_t states, std::size_t actions, double discount)
      : n_states(states),
        n_actions(actions),
        transition(states * actions * states, 0.0),
        reward(states * actions, 0.0),
        mu0(states, 0.0),
        gamma(discount) {}

  double& p(std::size_t s, std::size_t a, std::size_t s2) { return transition[(s * n_actions + a) * n_states + s2]; }
  double p(std::size_t s, std::size_t a, std::size_t s2) const {
    return transition[(s * n_actions + a) * n_states + s2];
  }
  double& r(std::size_t s, std::size_t a) { return reward[s * n_actions + a]; }
  double r(std::size_t s, std::size_t a) const { return reward[s * n_actions + a]; }

  std::span<const double> row(std::size_t s, std::size_t a) const {
    return std::span<const double>(transition).subspan((s * n_actions + a) * n_states, n_states);
  }

  /// Throws DomainError on the first malformed entry.
  void validate(double tol = 1e-10) const {
    if (n_states == 0 || n_actions == 0) throw DomainError("TabularMDP: empty state or action set");
    if (transition.size() != n_states * n_actions * n_states || reward.size() != n_states * n_actions ||
        mu0.size() != n_states)
      throw DomainError("TabularMDP: table sizes inconsistent with n_states/n_actions");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw DomainError("TabularMDP: gamma must lie in [0, 1)");
    for (std::size_t s = 0; s < n_states; ++s)
      for (std::size_t a = 0; a < n_actions; ++a) {
        double total = 0.0;
        for (double v : row(s, a)) {
          if (!(v >= 0.0)) throw DomainError("TabularMDP: negative transition probability");
          total += v;
        }
        if (std::abs(total - 1.0) > tol)
          throw DomainError("TabularMDP: P[" + std::to_string(s) + "][" + std::to_string(a) + "] sums to " +
                            std::to_string(total));
        if (!std::isfinite(r(s, a))) throw DomainError("TabularMDP: non-finite reward");
      }
    double total = 0.0;
    for (double v : mu0) {
      if (!(v >= 0.0)) throw DomainError("TabularMDP: negative initial probability");
      total += v;
    }
    if (std::abs(total - 1.0) > tol) throw DomainError("TabularMDP: mu0 sums to " + std::to_string(total));
  }
};

/// Environment view of a TabularMDP with one-hot state features.
class TabularEnv final : public Environment {
 public:
  explicit TabularEnv(TabularMDP mdp) : mdp_(std::move(mdp)) { mdp_.validate(); }

  std::string name() const override { return mdp_.name; }
  std::size_t feature_dim() const override { return mdp_.n_states; }
  ActionSpace action_space() const override { return {true, mdp_.n_actions, 0}; }
  double gamma() const override { return mdp_.gamma; }
  std::size_t horizon() const override { return mdp_.horizon; }

  State reset(Rng& rng) const override { return State{rng.categorical(mdp_.mu0), {}}; }

  StepResult step(const State& state, const Action& action, Rng& rng) const override {
    if (state.index >= mdp_.n_states) throw DomainError("TabularEnv::step: state index out of range");
    if (action.index >= mdp_.n_actions) throw DomainError("TabularEnv::step: action index out of range");
    const std::size_t next = rng.categorical(mdp_.row(state.index, action.index));
    return StepResult{State{next, {}}, mdp_.r(state.index, action.index), false};
  }

  void features(const State& state, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    out[state.index] = 1.0;
  }
  using Environment::features;

  std::vector<double> position(const State& state) const override {
    if (state.index < mdp_.coords.size()) return {mdp_.coords[state.index][0], mdp_.coords[state.index][1]};
    return {static_cast<double>(state.index), 0.0};
  }

  double displacement(const State& from, const Action& action, const State& to) const override {
    if (!mdp_.velocity.empty()) return mdp_.velocity[from.index * mdp_.n_actions + action.index];
    return Environment::displacement(from, action, to);
  }

  const TabularMDP* tabular() const override { return &mdp_; }
  const TabularMDP& mdp() const { return mdp_; }

 private:
  TabularMDP mdp_;
};

/// Random MDP with Dirichlet(1)-like rows, uniform-random rewards in [0,1) and random mu0.
inline TabularMDP make_random_mdp(std::size_t n_states, std::size_t n_actions, double gamma, Rng& rng) {
  TabularMDP m(n_states, n_actions, gamma);
  auto simplex = [&rng](std::span<double> out) {
    double total = 0.0;
    for (double& v : out) {
      v = -std::log(1.0 - rng.uniform());
      total += v;
    }
    for (double& v : out) v /= total;
  };
  for (std::size_t s = 0; s < n_states; ++s)
    for (std::size_t a = 0; a < n_actions; ++a) {
      simplex(std::span<double>(m.transition).subspan((s * n_actions + a) * n_states, n_states));
      m.r(s, a) = rng.uniform();
    }
  simplex(m.mu0);
  m.name = "random_mdp";
  for (std::size_t s = 0; s < n_states; ++s) m.coords.push_back({static_cast<double>(s), 0.0});
  return m;
}

/// Random MDP whose transitions are deterministic: each (s, a) moves to one
/// uniformly drawn successor. Rewards uniform in [0, 1), mu0 on the simplex.
inline TabularMDP make_random_deterministic_mdp(std::size_t n_states, std::size_t n_actions, double gamma, Rng& rng) {
  TabularMDP m(n_states, n_actions, gamma);
  for (std::size_t s = 0; s < n_states; ++s)
    for (std::size_t a = 0; a < n_actions; ++a) {
      m.p(s, a, rng.index(n_states)) = 1.0;
      m.r(s, a) = rng.uniform();
    }
  double total = 0.0;
  for (double& v : m.mu0) total += v = -std::log(1.0 - rng.uniform());
  for (double& v : m.mu0) v /= total;
  m.name = "random_deterministic_mdp";
  for (std::size_t s = 0; s < n_states; ++s) m.coords.push_back({static_cast<double>(s), 0.0});
  m.validate();
  return m;
}

}  // namespace qdsvpg

#endif  // QDSVPG_ENVS_TABULAR_MDP_HPP
