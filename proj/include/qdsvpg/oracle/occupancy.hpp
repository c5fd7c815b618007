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

#ifndef QDSVPG_ORACLE_OCCUPANCY_HPP
#define QDSVPG_ORACLE_OCCUPANCY_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/LU>

#include "qdsvpg/core/dense_array.hpp"
#include "qdsvpg/core/errors.hpp"
#include "qdsvpg/envs/tabular_mdp.hpp"

namespace qdsvpg {

// Policies enter the oracle as a probability table pi[s][a] (DenseArray [S, A]).

enum class OccupancyMode { Exact, Empirical };

/// Discounted state-action visitation rho[s][a], normalized to total mass 1.
struct OccupancyMeasure {
  DenseArray rho;
  double gamma = 0.99;
  OccupancyMode mode = OccupancyMode::Exact;

  std::size_t n_states() const { return rho.rows(); }
  std::size_t n_actions() const { return rho.cols(); }
  double operator()(std::size_t s, std::size_t a) const { return rho(s, a); }
  double total() const {
    double t = 0.0;
    for (double v : rho.values()) t += v;
    return t;
  }
  std::vector<double> state_marginal() const {
    std::vector<double> d(n_states(), 0.0);
    for (std::size_t s = 0; s < n_states(); ++s)
      for (std::size_t a = 0; a < n_actions(); ++a) d[s] += rho(s, a);
    return d;
  }
};

inline void validate_policy_table(const TabularMDP& mdp, const DenseArray& pi, double tol = 1e-10) {
  if (pi.rank() != 2 || pi.rows() != mdp.n_states || pi.cols() != mdp.n_actions)
    throw ShapeError("policy table " + DenseArray::shape_string(pi.shape()) + " does not match MDP [" +
                     std::to_string(mdp.n_states) + ", " + std::to_string(mdp.n_actions) + "]");
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    double total = 0.0;
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      if (!(pi(s, a) >= 0.0)) throw DomainError("policy table: negative or NaN probability at state " + std::to_string(s));
      total += pi(s, a);
    }
    if (std::abs(total - 1.0) > tol) throw DomainError("policy table: row " + std::to_string(s) + " sums to " + std::to_string(total));
  }
}

/// State transition matrix under pi: P_pi[s][s'] = sum_a pi(a|s) P(s'|s,a).
inline Eigen::MatrixXd policy_transition(const TabularMDP& mdp, const DenseArray& pi) {
  const auto S = static_cast<Eigen::Index>(mdp.n_states);
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(S, S);
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      const double w = pi(s, a);
      if (w == 0.0) continue;
      for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2)
        P(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s2)) += w * mdp.p(s, a, s2);
    }
  return P;
}

/// Solves d = (1 - gamma) mu0 + gamma P_pi^T d by LU.
inline std::vector<double> exact_state_occupancy(const TabularMDP& mdp, const DenseArray& pi) {
  validate_policy_table(mdp, pi);
  const auto S = static_cast<Eigen::Index>(mdp.n_states);
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(S, S) - mdp.gamma * policy_transition(mdp, pi).transpose();
  Eigen::VectorXd b(S);
  for (Eigen::Index s = 0; s < S; ++s) b(s) = (1.0 - mdp.gamma) * mdp.mu0[static_cast<std::size_t>(s)];
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  if (!(std::abs(lu.determinant()) > 1e-300)) throw NumericError("exact_occupancy: singular flow system");
  Eigen::VectorXd d = lu.solve(b);
  std::vector<double> out(mdp.n_states);
  for (Eigen::Index s = 0; s < S; ++s) {
    if (!std::isfinite(d(s))) throw NumericError("exact_occupancy: non-finite solution");
    // Round-off can leave -1e-18 on unreachable states.
    out[static_cast<std::size_t>(s)] = std::max(0.0, d(s));
  }
  return out;
}

inline OccupancyMeasure exact_occupancy(const TabularMDP& mdp, const DenseArray& pi) {
  const std::vector<double> d = exact_state_occupancy(mdp, pi);
  OccupancyMeasure m{DenseArray::matrix(mdp.n_states, mdp.n_actions), mdp.gamma, OccupancyMode::Exact};
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    for (std::size_t a = 0; a < mdp.n_actions; ++a) m.rho(s, a) = d[s] * pi(s, a);
  return m;
}

/// Largest per-cell violation of rho(s',a') = pi(a'|s')[(1-gamma) mu0(s') + gamma sum P(s'|s,a) rho(s,a)].
inline double flow_residual(const TabularMDP& mdp, const DenseArray& pi, const OccupancyMeasure& m) {
  std::vector<double> inflow(mdp.n_states, 0.0);
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    for (std::size_t a = 0; a < mdp.n_actions; ++a)
      for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) inflow[s2] += mdp.p(s, a, s2) * m.rho(s, a);
  double worst = 0.0;
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      const double rhs = pi(s, a) * ((1.0 - mdp.gamma) * mdp.mu0[s] + mdp.gamma * inflow[s]);
      worst = std::max(worst, std::abs(m.rho(s, a) - rhs));
    }
  return worst;
}

/// Truncated series sum_{t <= steps} (1-gamma) gamma^t P(s_t = s) pi(a|s), by forward propagation.
inline OccupancyMeasure power_iteration_occupancy(const TabularMDP& mdp, const DenseArray& pi, std::size_t steps) {
  std::vector<double> marginal = mdp.mu0, next(mdp.n_states);
  OccupancyMeasure m{DenseArray::matrix(mdp.n_states, mdp.n_actions), mdp.gamma, OccupancyMode::Exact};
  double weight = 1.0 - mdp.gamma;
  for (std::size_t t = 0; t <= steps; ++t) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t s = 0; s < mdp.n_states; ++s)
      for (std::size_t a = 0; a < mdp.n_actions; ++a) {
        const double mass = marginal[s] * pi(s, a);
        m.rho(s, a) += weight * mass;
        for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) next[s2] += mass * mdp.p(s, a, s2);
      }
    marginal.swap(next);
    weight *= mdp.gamma;
  }
  return m;
}

/// Discount-weighted empirical visitation from sampled (s, a) pairs.
inline OccupancyMeasure empirical_occupancy(std::size_t n_states, std::size_t n_actions, double gamma,
                                            std::span<const std::size_t> states, std::span<const std::size_t> actions,
                                            std::span<const double> weights) {
  if (states.size() != actions.size() || states.size() != weights.size())
    throw ShapeError("empirical_occupancy: states, actions and weights differ in length");
  OccupancyMeasure m{DenseArray::matrix(n_states, n_actions), gamma, OccupancyMode::Empirical};
  double total = 0.0;
  for (std::size_t k = 0; k < states.size(); ++k) {
    m.rho(states[k], actions[k]) += weights[k];
    total += weights[k];
  }
  if (!(total > 0.0)) throw DomainError("empirical_occupancy: no sample weight");
  for (double& v : m.rho.values()) v /= total;
  return m;
}

/// eta(pi) = sum rho(s,a) r(s,a).
inline double exact_return(const TabularMDP& mdp, const DenseArray& pi) {
  const OccupancyMeasure m = exact_occupancy(mdp, pi);
  double eta = 0.0;
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    for (std::size_t a = 0; a < mdp.n_actions; ++a) eta += m.rho(s, a) * mdp.r(s, a);
  return eta;
}

/// Unnormalized state values V(s) = E[sum gamma^t r | s_0 = s].
inline std::vector<double> exact_values(const TabularMDP& mdp, const DenseArray& pi) {
  validate_policy_table(mdp, pi);
  const auto S = static_cast<Eigen::Index>(mdp.n_states);
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(S, S) - mdp.gamma * policy_transition(mdp, pi);
  Eigen::VectorXd r(S);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    double v = 0.0;
    for (std::size_t a = 0; a < mdp.n_actions; ++a) v += pi(s, a) * mdp.r(s, a);
    r(static_cast<Eigen::Index>(s)) = v;
  }
  Eigen::VectorXd v = A.partialPivLu().solve(r);
  return std::vector<double>(v.data(), v.data() + S);
}

/// Unnormalized Q(s,a) = r(s,a) + gamma sum P(s'|s,a) V(s').
inline DenseArray exact_q(const TabularMDP& mdp, const DenseArray& pi) {
  const std::vector<double> v = exact_values(mdp, pi);
  DenseArray q = DenseArray::matrix(mdp.n_states, mdp.n_actions);
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      double next = 0.0;
      for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) next += mdp.p(s, a, s2) * v[s2];
      q(s, a) = mdp.r(s, a) + mdp.gamma * next;
    }
  return q;
}

// Gradient of eta with respect to the logits of a tabular softmax policy:
// d eta / d theta[s][a] = rho(s,a) (Q(s,a) - V(s)).
inline DenseArray exact_softmax_policy_gradient(const TabularMDP& mdp, const DenseArray& pi) {
  const OccupancyMeasure m = exact_occupancy(mdp, pi);
  const DenseArray q = exact_q(mdp, pi);
  DenseArray g = DenseArray::matrix(mdp.n_states, mdp.n_actions);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    double v = 0.0;
    for (std::size_t a = 0; a < mdp.n_actions; ++a) v += pi(s, a) * q(s, a);
    for (std::size_t a = 0; a < mdp.n_actions; ++a) g(s, a) = m.rho(s, a) * (q(s, a) - v);
  }
  return g;
}

struct ValueIterationResult {
  std::vector<double> values;
  DenseArray q;
  DenseArray greedy;  // deterministic policy table, ties to the lowest action index
  std::size_t sweeps = 0;
};

inline ValueIterationResult value_iteration(const TabularMDP& mdp, double tol = 1e-12, std::size_t max_sweeps = 100000) {
  ValueIterationResult out{std::vector<double>(mdp.n_states, 0.0), DenseArray::matrix(mdp.n_states, mdp.n_actions),
                           DenseArray::matrix(mdp.n_states, mdp.n_actions), 0};
  for (; out.sweeps < max_sweeps; ++out.sweeps) {
    double delta = 0.0;
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < mdp.n_actions; ++a) {
        double next = 0.0;
        for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) next += mdp.p(s, a, s2) * out.values[s2];
        out.q(s, a) = mdp.r(s, a) + mdp.gamma * next;
        best = std::max(best, out.q(s, a));
      }
      delta = std::max(delta, std::abs(best - out.values[s]));
      out.values[s] = best;
    }
    if (delta < tol) break;
  }
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    std::size_t arg = 0;
    for (std::size_t a = 1; a < mdp.n_actions; ++a)
      if (out.q(s, a) > out.q(s, arg) + 1e-12) arg = a;
    out.greedy(s, arg) = 1.0;
  }
  return out;
}

/// Policy table putting all mass on one action per state.
inline DenseArray deterministic_policy(const TabularMDP& mdp, std::span<const std::size_t> action_per_state) {
  DenseArray pi = DenseArray::matrix(mdp.n_states, mdp.n_actions);
  for (std::size_t s = 0; s < mdp.n_states; ++s) pi(s, action_per_state[s]) = 1.0;
  return pi;
}

inline DenseArray constant_policy(const TabularMDP& mdp, std::size_t action) {
  DenseArray pi = DenseArray::matrix(mdp.n_states, mdp.n_actions);
  for (std::size_t s = 0; s < mdp.n_states; ++s) pi(s, action) = 1.0;
  return pi;
}

inline DenseArray uniform_policy(const TabularMDP& mdp) {
  return DenseArray::matrix(mdp.n_states, mdp.n_actions, 1.0 / static_cast<double>(mdp.n_actions));
}

}  // namespace qdsvpg

#endif  // QDSVPG_ORACLE_OCCUPANCY_HPP
