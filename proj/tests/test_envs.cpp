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

#include <cmath>
#include <memory>
#include <vector>

#include <gtest/gtest.h>

#include "qdsvpg/envs/corridor.hpp"
#include "qdsvpg/envs/gridmaze.hpp"
#include "qdsvpg/envs/tabular_mdp.hpp"
#include "qdsvpg/envs/zero_reward.hpp"
#include "qdsvpg/oracle/occupancy.hpp"

namespace qdsvpg {
namespace {

TEST(TabularEnv, DeterministicSuccessor) {
  TabularMDP m = make_deceptive_corridor(5, 2, 0.1, 0.9);
  TabularEnv env(m);
  Rng rng(3);
  EXPECT_EQ(env.step(State{1, {}}, Action{kRight, {}}, rng).next.index, 2u);
  EXPECT_EQ(env.step(State{0, {}}, Action{kLeft, {}}, rng).next.index, 0u);
  EXPECT_EQ(env.step(State{3, {}}, Action{kStay, {}}, rng).next.index, 3u);
}

TEST(TabularEnv, InvalidIndicesThrow) {
  TabularEnv env(make_deceptive_corridor(5, 2, 0.1, 0.9));
  Rng rng(0);
  EXPECT_THROW(env.step(State{5, {}}, Action{0, {}}, rng), DomainError);
  EXPECT_THROW(env.step(State{0, {}}, Action{3, {}}, rng), DomainError);
}

TEST(TabularEnv, SampledRowMatchesStoredProbabilities) {
  Rng build(9);
  TabularMDP m = make_random_mdp(4, 2, 0.9, build);
  TabularEnv env(m);
  Rng rng(10);
  const std::size_t n = 100000;
  std::vector<double> counts(4, 0.0);
  for (std::size_t k = 0; k < n; ++k) counts[env.step(State{1, {}}, Action{1, {}}, rng).next.index] += 1.0;
  for (std::size_t s2 = 0; s2 < 4; ++s2) {
    const double p = m.p(1, 1, s2);
    const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    EXPECT_NEAR(counts[s2] / static_cast<double>(n), p, 3.0 * sigma + 1e-12);
  }
}

TEST(TabularEnv, SameSeedSameTrajectory) {
  Rng build(4);
  TabularEnv env(make_random_mdp(6, 3, 0.9, build));
  auto run = [&](std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::size_t> path;
    State s = env.reset(rng);
    for (int t = 0; t < 50; ++t) {
      s = env.step(s, Action{rng.index(3), {}}, rng).next;
      path.push_back(s.index);
    }
    return path;
  };
  EXPECT_EQ(run(77), run(77));
}

TEST(RandomMdp, PassesValidation) {
  Rng rng(5);
  for (int k = 0; k < 20; ++k) EXPECT_NO_THROW(make_random_mdp(1 + k % 10, 1 + k % 4, 0.95, rng).validate());
}

TEST(Corridor, ThresholdOutOfRangeIsConfigError) {
  EXPECT_THROW(make_deceptive_corridor(10, 0, 0.1, 0.9), ConfigError);
  EXPECT_THROW(make_deceptive_corridor(10, 10, 0.1, 0.9), ConfigError);
}

TEST(Corridor, AlwaysStayReturnsZero) {
  TabularMDP m = make_deceptive_corridor(10, 5, 0.1, 0.9);
  EXPECT_EQ(exact_return(m, constant_policy(m, kStay)), 0.0);
}

TEST(Corridor, AlwaysRightMatchesGeometricSum) {
  const double g = 0.9;
  TabularMDP m = make_deceptive_corridor(10, 5, 0.1, g);
  double hand = 0.0, w = 1.0 - g;
  for (int t = 0; t < 5000; ++t, w *= g) hand += w * (t < 5 ? -0.1 : 0.9);
  EXPECT_NEAR(exact_return(m, constant_policy(m, kRight)), hand, 1e-12);
}

TEST(Corridor, GreedyLookaheadIsTrappedAtStart) {
  TabularMDP m = make_deceptive_corridor(10, 5, 0.1, 0.9);
  std::vector<std::size_t> greedy(m.n_states);
  for (std::size_t s = 0; s < m.n_states; ++s) {
    std::size_t best = 0;
    for (std::size_t a = 1; a < 3; ++a)
      if (m.r(s, a) > m.r(s, best)) best = a;
    greedy[s] = best;
  }
  EXPECT_EQ(greedy[0], kStay);
  EXPECT_EQ(exact_return(m, deterministic_policy(m, greedy)), 0.0);
}

TEST(Corridor, TwoLocalOptima) {
  TabularMDP m = make_deceptive_corridor(12, 6, 0.1, 0.99);
  // Staying: every reachable state prefers stay under its own Q.
  const DenseArray stay = constant_policy(m, kStay);
  const DenseArray q_stay = exact_q(m, stay);
  EXPECT_GT(q_stay(0, kStay), q_stay(0, kRight));
  EXPECT_GT(q_stay(0, kStay), q_stay(0, kLeft));
  // Running right is the global optimum with positive return.
  const ValueIterationResult vi = value_iteration(m);
  EXPECT_EQ(vi.greedy(0, kRight), 1.0);
  const DenseArray right = constant_policy(m, kRight);
  EXPECT_GT(exact_return(m, right), 0.5);
  const DenseArray q_right = exact_q(m, right);
  for (std::size_t s = 0; s < m.n_states; ++s) EXPECT_GE(q_right(s, kRight), q_right(s, kStay)) << s;
}

GridSpec open_grid(std::size_t n) {
  GridSpec spec;
  spec.grid.assign(n, std::string(n, '.'));
  spec.grid[0][0] = 'S';
  spec.grid[n - 1][n - 1] = 'G';
  return spec;
}

TEST(Gridmaze, SingleCell) {
  GridSpec spec;
  spec.grid = {"S"};
  TabularMDP m = make_gridmaze(spec);
  EXPECT_EQ(m.n_states, 1u);
  for (std::size_t a = 0; a < 4; ++a) EXPECT_EQ(m.p(0, a, 0), 1.0);
}

TEST(Gridmaze, OpenThreeByThree) {
  TabularMDP m = make_gridmaze(open_grid(3));
  EXPECT_EQ(m.n_states, 9u);
  EXPECT_EQ(m.n_actions, 4u);
  EXPECT_TRUE(m.warnings.empty());
}

TEST(Gridmaze, UnreachableGoalIsWarning) {
  GridSpec spec;
  spec.grid = {"S#G"};
  TabularMDP m = make_gridmaze(spec);
  ASSERT_EQ(m.warnings.size(), 1u);
  EXPECT_NE(m.warnings[0].find("unreachable"), std::string::npos);
}

TEST(Gridmaze, ValueIterationFollowsShortestPaths) {
  GridSpec spec;
  spec.grid = {"S...", ".##.", "...G"};
  spec.gamma = 0.9;
  TabularMDP m = make_gridmaze(spec);
  const ValueIterationResult vi = value_iteration(m);
  // BFS distance to the goal cell on the open cells.
  std::vector<int> dist(m.n_states, -1);
  std::size_t goal = 0;
  for (std::size_t s = 0; s < m.n_states; ++s)
    if (m.coords[s][0] == 3.0 && m.coords[s][1] == 2.0) goal = s;
  dist[goal] = 0;
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t s = 0; s < m.n_states; ++s)
      for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t s2 = 0; s2 < m.n_states; ++s2)
          if (m.p(s, a, s2) > 0.0 && dist[s2] >= 0 && (dist[s] < 0 || dist[s] > dist[s2] + 1)) {
            dist[s] = dist[s2] + 1;
            changed = true;
          }
  }
  for (std::size_t s = 0; s < m.n_states; ++s) {
    if (s == goal) continue;
    std::size_t a = 0;
    while (vi.greedy(s, a) != 1.0) ++a;
    std::size_t next = 0;
    while (m.p(s, a, next) != 1.0) ++next;
    EXPECT_EQ(dist[next], dist[s] - 1) << "state " << s;
  }
  for (std::size_t s = 0; s < m.n_states; ++s)
    for (std::size_t s2 = 0; s2 < m.n_states; ++s2)
      if (s != goal && dist[s] < dist[s2]) {
        EXPECT_GT(vi.values[s], vi.values[s2]);
      }
}

TEST(Gridmaze, LoadsFromJson) {
  nlohmann::json j = {{"grid", {"S.", ".G"}}, {"gamma", 0.95}, {"horizon", 30}};
  GridSpec spec = grid_spec_from_json(j);
  EXPECT_EQ(spec.horizon, 30u);
  j["colour"] = "red";
  EXPECT_THROW(grid_spec_from_json(j), ConfigError);
}

TEST(ContinuousMaze, WallBlocksOnlyTheBlockedAxis) {
  GridSpec spec;
  spec.grid = {"...", ".#.", "S.."};
  spec.step_scale = 1.0;
  ContinuousMaze maze(spec);
  Rng rng(0);
  // From the centre of (col 1, row 2), moving up would enter the wall cell.
  State s{0, {1.5, 2.5}};
  StepResult r = maze.step(s, Action{0, {0.4, -1.0}}, rng);
  EXPECT_DOUBLE_EQ(r.next.coords[0], 1.9);
  EXPECT_DOUBLE_EQ(r.next.coords[1], 2.5);
  // Leaving the bounds is blocked the same way.
  r = maze.step(State{0, {0.5, 2.5}}, Action{0, {-1.0, 0.0}}, rng);
  EXPECT_DOUBLE_EQ(r.next.coords[0], 0.5);
}

TEST(ContinuousMaze, StaysInsideBounds) {
  ContinuousMaze maze(default_maze_spec());
  Rng rng(1);
  State s = maze.reset(rng);
  for (int t = 0; t < 2000; ++t) {
    s = maze.step(s, Action{0, {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)}}, rng).next;
    ASSERT_TRUE(maze.blocked_free(s.coords[0], s.coords[1]));
  }
}

TEST(ContinuousMaze, DisplacementSign) {
  ContinuousMaze maze(default_maze_spec());
  const State a{0, {2.0, 1.5}}, b{0, {1.7, 1.1}};
  EXPECT_NEAR(maze.displacement(a, Action{}, b), -0.5, 1e-12);
  EXPECT_NEAR(maze.displacement(b, Action{}, a), 0.5, 1e-12);
}

TEST(ZeroReward, RewardsVanishDynamicsKept) {
  Rng build(8);
  auto base = std::make_shared<TabularEnv>(make_random_mdp(5, 3, 0.9, build));
  auto wrapped = zero_reward(base);
  Rng ra(21), rb(21);
  State sa = base->reset(ra), sb = wrapped->reset(rb);
  for (int t = 0; t < 200; ++t) {
    const Action act{static_cast<std::size_t>(t % 3), {}};
    StepResult xa = base->step(sa, act, ra), xb = wrapped->step(sb, act, rb);
    EXPECT_EQ(xb.reward, 0.0);
    EXPECT_EQ(xa.next, xb.next);
    sa = xa.next;
    sb = xb.next;
  }
  Rng prng(2);
  DenseArray pi = DenseArray::matrix(5, 3);
  for (std::size_t s = 0; s < 5; ++s) {
    double t = 0.0;
    for (std::size_t a = 0; a < 3; ++a) t += pi(s, a) = prng.uniform() + 0.1;
    for (std::size_t a = 0; a < 3; ++a) pi(s, a) /= t;
  }
  EXPECT_EQ(exact_return(*wrapped->tabular(), pi), 0.0);
}

}  // namespace
}  // namespace qdsvpg
