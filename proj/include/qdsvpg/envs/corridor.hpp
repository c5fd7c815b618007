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

#ifndef QDSVPG_ENVS_CORRIDOR_HPP
#define QDSVPG_ENVS_CORRIDOR_HPP

#include <string>

#include "qdsvpg/core/errors.hpp"
#include "qdsvpg/envs/tabular_mdp.hpp"

namespace qdsvpg {

enum CorridorAction : std::size_t { kStay = 0, kLeft = 1, kRight = 2 };

// Deceptive chain. The agent starts at cell 0; moving costs `action_penalty`
// per step; from cells >= threshold each move also earns its signed velocity
// times `movement_reward`. Cells [threshold, length) form a treadmill: moving
// right from the last cell re-enters the threshold cell, so running forward in
// the distal region keeps paying, while standing still pays exactly zero.
inline TabularMDP make_deceptive_corridor(std::size_t length, std::size_t threshold, double action_penalty,
                                          double gamma, double movement_reward = 1.0, std::size_t horizon = 200) {
  if (length < 2) throw ConfigError("corridor: length must be at least 2");
  if (threshold == 0 || threshold >= length)
    throw ConfigError("corridor: threshold d must satisfy 0 < d < length (d=" + std::to_string(threshold) +
                      ", length=" + std::to_string(length) + ")");
  if (!(action_penalty >= 0.0)) throw ConfigError("corridor: action_penalty must be non-negative");
  TabularMDP m(length, 3, gamma);
  m.horizon = horizon;
  m.name = "corridor";
  m.region_start = threshold;
  m.mu0[0] = 1.0;
  m.velocity.assign(length * 3, 0.0);
  for (std::size_t s = 0; s < length; ++s) {
    m.coords.push_back({static_cast<double>(s), 0.0});
    const bool paid = s >= threshold;
    m.p(s, kStay, s) = 1.0;
    m.r(s, kStay) = 0.0;

    const std::size_t left = s == 0 ? 0 : s - 1;
    m.p(s, kLeft, left) = 1.0;
    const double vel_left = left == s ? 0.0 : -1.0;
    m.r(s, kLeft) = (paid ? movement_reward * vel_left : 0.0) - action_penalty;
    m.velocity[s * 3 + kLeft] = vel_left;

    const std::size_t right = s + 1 < length ? s + 1 : threshold;
    m.p(s, kRight, right) = 1.0;
    m.r(s, kRight) = (paid ? movement_reward : 0.0) - action_penalty;
    m.velocity[s * 3 + kRight] = 1.0;
  }
  m.validate();
  return m;
}

}  // namespace qdsvpg

#endif  // QDSVPG_ENVS_CORRIDOR_HPP
