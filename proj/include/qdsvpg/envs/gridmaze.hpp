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

#ifndef QDSVPG_ENVS_GRIDMAZE_HPP
#define QDSVPG_ENVS_GRIDMAZE_HPP

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "qdsvpg/core/errors.hpp"
#include "qdsvpg/envs/environment.hpp"
#include "qdsvpg/envs/tabular_mdp.hpp"

namespace qdsvpg {

/// Rectangular maze description: '#' wall, 'S' start, 'G' goal, anything else open.
struct GridSpec {
  std::vector<std::string> grid;
  double gamma = 0.99;
  std::size_t horizon = 200;
  /// Continuous maze only: displacement per unit action.
  double step_scale = 0.25;

  std::size_t height() const { return grid.size(); }
  std::size_t width() const { return grid.empty() ? 0 : grid.front().size(); }
  bool wall(long row, long col) const {
    if (row < 0 || col < 0 || row >= static_cast<long>(height()) || col >= static_cast<long>(width())) return true;
    return grid[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)] == '#';
  }

  void validate() const {
    if (grid.empty() || grid.front().empty()) throw ConfigError("grid: empty grid");
    for (const std::string& row : grid)
      if (row.size() != width()) throw ConfigError("grid: rows have unequal length");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("grid: gamma must lie in [0, 1)");
    if (horizon == 0) throw ConfigError("grid: horizon must be positive");
    if (!(step_scale > 0.0)) throw ConfigError("grid: step_scale must be positive");
    std::size_t starts = 0, goals = 0, open = 0;
    for (const std::string& row : grid)
      for (char c : row) {
        starts += c == 'S';
        goals += c == 'G';
        open += c != '#';
      }
    if (open == 0) throw ConfigError("grid: no open cell");
    if (starts > 1 || goals > 1) throw ConfigError("grid: at most one 'S' and one 'G' allowed");
  }
};

inline GridSpec grid_spec_from_json(const nlohmann::json& j) {
  GridSpec spec;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    if (key == "grid")
      spec.grid = it->get<std::vector<std::string>>();
    else if (key == "gamma")
      spec.gamma = it->get<double>();
    else if (key == "horizon")
      spec.horizon = it->get<std::size_t>();
    else if (key == "step_scale")
      spec.step_scale = it->get<double>();
    else
      throw ConfigError("grid spec: unknown key '" + key + "'");
  }
  spec.validate();
  return spec;
}

inline GridSpec load_grid_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("grid spec: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("grid spec: " + path + ": " + e.what());
  }
  return grid_spec_from_json(j);
}

namespace detail {

struct Cell {
  long row = 0;
  long col = 0;
};

inline Cell find_cell(const GridSpec& spec, char c) {
  for (std::size_t r = 0; r < spec.height(); ++r)
    for (std::size_t k = 0; k < spec.width(); ++k)
      if (spec.grid[r][k] == c) return {static_cast<long>(r), static_cast<long>(k)};
  return {-1, -1};
}

inline Cell first_open(const GridSpec& spec) {
  for (std::size_t r = 0; r < spec.height(); ++r)
    for (std::size_t k = 0; k < spec.width(); ++k)
      if (spec.grid[r][k] != '#') return {static_cast<long>(r), static_cast<long>(k)};
  return {-1, -1};
}

}  // namespace detail

enum GridAction : std::size_t { kUp = 0, kDown = 1, kWest = 2, kEast = 3 };

/// Four-action gridworld over the open cells. Bumping a wall leaves the agent in
/// place; r(s,a) = exp(-euclidean distance from the resulting cell to the goal).
inline TabularMDP make_gridmaze(const GridSpec& spec) {
  spec.validate();
  std::vector<std::vector<long>> id(spec.height(), std::vector<long>(spec.width(), -1));
  std::vector<detail::Cell> cells;
  for (std::size_t r = 0; r < spec.height(); ++r)
    for (std::size_t c = 0; c < spec.width(); ++c)
      if (spec.grid[r][c] != '#') {
        id[r][c] = static_cast<long>(cells.size());
        cells.push_back({static_cast<long>(r), static_cast<long>(c)});
      }
  detail::Cell start = detail::find_cell(spec, 'S');
  detail::Cell goal = detail::find_cell(spec, 'G');
  TabularMDP m(cells.size(), 4, spec.gamma);
  m.horizon = spec.horizon;
  m.name = "gridmaze";
  if (start.row < 0) {
    start = detail::first_open(spec);
    m.warnings.push_back("no 'S' cell; starting at the first open cell");
  }
  if (goal.row < 0) {
    goal = start;
    m.warnings.push_back("no 'G' cell; goal placed at the start cell");
  }
  m.mu0[static_cast<std::size_t>(id[start.row][start.col])] = 1.0;
  constexpr long dr[4] = {-1, 1, 0, 0};
  constexpr long dc[4] = {0, 0, -1, 1};
  for (std::size_t s = 0; s < cells.size(); ++s) {
    m.coords.push_back({static_cast<double>(cells[s].col), static_cast<double>(cells[s].row)});
    for (std::size_t a = 0; a < 4; ++a) {
      detail::Cell next{cells[s].row + dr[a], cells[s].col + dc[a]};
      if (spec.wall(next.row, next.col)) next = cells[s];
      m.p(s, a, static_cast<std::size_t>(id[next.row][next.col])) = 1.0;
      m.r(s, a) = std::exp(-std::hypot(static_cast<double>(next.row - goal.row),
                                       static_cast<double>(next.col - goal.col)));
    }
  }
  // Reachability of the goal from the start (warning only).
  std::vector<char> seen(cells.size(), 0);
  std::deque<std::size_t> frontier{static_cast<std::size_t>(id[start.row][start.col])};
  seen[frontier.front()] = 1;
  while (!frontier.empty()) {
    const std::size_t s = frontier.front();
    frontier.pop_front();
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t s2 = 0; s2 < cells.size(); ++s2)
        if (m.p(s, a, s2) > 0.0 && !seen[s2]) {
          seen[s2] = 1;
          frontier.push_back(s2);
        }
  }
  if (!seen[static_cast<std::size_t>(id[goal.row][goal.col])]) m.warnings.push_back("goal unreachable from start");
  m.validate();
  return m;
}

// Point mass in the continuous plane [0, width] x [0, height]; every '#'
// cell is a solid unit square. Actions are 2-vectors clipped to [-1, 1] and
// scaled by step_scale. Motion is resolved per axis: a move whose end point
// lands in a wall or outside the bounds is dropped on that axis.
class ContinuousMaze final : public Environment {
 public:
  explicit ContinuousMaze(GridSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    detail::Cell s = detail::find_cell(spec_, 'S');
    if (s.row < 0) s = detail::first_open(spec_);
    detail::Cell g = detail::find_cell(spec_, 'G');
    if (g.row < 0) g = s;
    start_ = {static_cast<double>(s.col) + 0.5, static_cast<double>(s.row) + 0.5};
    goal_ = {static_cast<double>(g.col) + 0.5, static_cast<double>(g.row) + 0.5};
  }

  std::string name() const override { return "continuous_maze"; }
  std::size_t feature_dim() const override { return 2; }
  ActionSpace action_space() const override { return {false, 0, 2}; }
  double gamma() const override { return spec_.gamma; }
  std::size_t horizon() const override { return spec_.horizon; }

  State reset(Rng&) const override { return State{0, start_}; }

  StepResult step(const State& state, const Action& action, Rng&) const override {
    if (state.coords.size() != 2 || !blocked_free(state.coords[0], state.coords[1]))
      throw DomainError("ContinuousMaze::step: state outside the free space");
    if (action.value.size() != 2) throw DomainError("ContinuousMaze::step: action must be 2-dimensional");
    double x = state.coords[0], y = state.coords[1];
    const double dx = spec_.step_scale * std::clamp(action.value[0], -1.0, 1.0);
    const double dy = spec_.step_scale * std::clamp(action.value[1], -1.0, 1.0);
    if (blocked_free(x + dx, y)) x += dx;
    if (blocked_free(x, y + dy)) y += dy;
    const double reward = std::exp(-std::hypot(x - goal_[0], y - goal_[1]));
    return StepResult{State{0, {x, y}}, reward, false};
  }

  void features(const State& state, std::span<double> out) const override {
    out[0] = 2.0 * state.coords[0] / static_cast<double>(spec_.width()) - 1.0;
    out[1] = 2.0 * state.coords[1] / static_cast<double>(spec_.height()) - 1.0;
  }
  using Environment::features;

  std::vector<double> position(const State& state) const override { return state.coords; }

  /// Signed norm: |displacement| with the sign of its x component.
  double displacement(const State& from, const Action&, const State& to) const override {
    const double dx = to.coords[0] - from.coords[0];
    const double dy = to.coords[1] - from.coords[1];
    const double norm = std::hypot(dx, dy);
    return dx < 0.0 ? -norm : norm;
  }

  /// True when the point is inside the bounds and not inside a wall cell.
  bool blocked_free(double x, double y) const {
    const double w = static_cast<double>(spec_.width()), h = static_cast<double>(spec_.height());
    if (!(x >= 0.0 && y >= 0.0 && x < w && y < h)) return false;
    return !spec_.wall(static_cast<long>(std::floor(y)), static_cast<long>(std::floor(x)));
  }

  const GridSpec& spec() const { return spec_; }
  const std::vector<double>& goal() const { return goal_; }
  const std::vector<double>& start() const { return start_; }

 private:
  GridSpec spec_;
  std::vector<double> start_;
  std::vector<double> goal_;
};

/// Two symmetric routes around an inner wall to a goal near the centre.
inline GridSpec default_maze_spec() {
  GridSpec spec;
  spec.grid = {
      "###########",
      "#.........#",
      "#.#######.#",
      "#.#..G..#.#",
      "#.#.###.#.#",
      "#.........#",
      "#....S....#",
      "###########",
  };
  spec.gamma = 0.99;
  spec.horizon = 100;
  spec.step_scale = 0.25;
  return spec;
}

}  // namespace qdsvpg

#endif  // QDSVPG_ENVS_GRIDMAZE_HPP
