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

#ifndef QDSVPG_ENVS_ENVIRONMENT_HPP
#define QDSVPG_ENVS_ENVIRONMENT_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qdsvpg/core/random.hpp"

namespace qdsvpg {

struct TabularMDP;

/// Discrete index for tabular environments, coordinates for continuous ones.
struct State {
  std::size_t index = 0;
  std::vector<double> coords;

  friend bool operator==(const State&, const State&) = default;
};

/// Discrete index, or a real vector for continuous action spaces.
struct Action {
  std::size_t index = 0;
  std::vector<double> value;

  friend bool operator==(const Action&, const Action&) = default;
};

struct ActionSpace {
  bool discrete = true;
  std::size_t count = 0;  // number of discrete actions
  std::size_t dim = 0;    // continuous dimension

  /// Width of the action encoding fed to (s,a) networks.
  std::size_t encoding_dim() const { return discrete ? count : dim; }
};

struct StepResult {
  State next;
  double reward = 0.0;
  bool done = false;
};

// Environments are immutable; the caller owns the state and the RNG, so
// independent rollouts only need independent RNG streams.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual std::size_t feature_dim() const = 0;
  virtual ActionSpace action_space() const = 0;
  virtual double gamma() const = 0;
  /// Sampling horizon; exact computations ignore it.
  virtual std::size_t horizon() const = 0;
  virtual State reset(Rng& rng) const = 0;
  virtual StepResult step(const State& state, const Action& action, Rng& rng) const = 0;
  virtual void features(const State& state, std::span<double> out) const = 0;
  /// Position used by behaviour metrics (displacement, coverage).
  virtual std::vector<double> position(const State& state) const = 0;
  /// Signed scalar displacement of one step, the behaviour descriptor of the diversity metric.
  virtual double displacement(const State& from, const Action& action, const State& to) const {
    (void)action;
    return position(to)[0] - position(from)[0];
  }
  /// Exact model when the environment is finite, else nullptr.
  virtual const TabularMDP* tabular() const { return nullptr; }

  std::vector<double> features(const State& state) const {
    std::vector<double> f(feature_dim(), 0.0);
    features(state, f);
    return f;
  }
};

}  // namespace qdsvpg

#endif  // QDSVPG_ENVS_ENVIRONMENT_HPP
