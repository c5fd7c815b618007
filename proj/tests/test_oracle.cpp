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
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "qdsvpg/divergence/kinds.hpp"
#include "qdsvpg/envs/tabular_mdp.hpp"
#include "qdsvpg/oracle/occupancy.hpp"
#include "qdsvpg/oracle/ratio.hpp"

namespace qdsvpg {
namespace {

DenseArray random_policy(std::size_t S, std::size_t A, Rng& rng, double temperature = 1.0) {
  DenseArray pi = DenseArray::matrix(S, A);
  for (std::size_t s = 0; s < S; ++s) {
    double total = 0.0;
    for (std::size_t a = 0; a < A; ++a) total += pi(s, a) = std::exp(temperature * rng.normal());
    for (std::size_t a = 0; a < A; ++a) pi(s, a) /= total;
  }
  return pi;
}

// Independent route: iterate d <- (1-g) mu0 + g P_pi^T d to a fixed point with plain loops.
std::vector<double> fixed_point_state_occupancy(const TabularMDP& m, const DenseArray& pi, int sweeps) {
  std::vector<double> d(m.n_states, 0.0);
  for (int it = 0; it < sweeps; ++it) {
    std::vector<double> next(m.n_states);
    for (std::size_t s = 0; s < m.n_states; ++s) next[s] = (1.0 - m.gamma) * m.mu0[s];
    for (std::size_t s = 0; s < m.n_states; ++s)
      for (std::size_t a = 0; a < m.n_actions; ++a)
        for (std::size_t s2 = 0; s2 < m.n_states; ++s2) next[s2] += m.gamma * d[s] * pi(s, a) * m.p(s, a, s2);
    d = next;
  }
  return d;
}

OccupancyMeasure measure(std::vector<double> cells, std::size_t S, std::size_t A) {
  return OccupancyMeasure{DenseArray::matrix(S, A, std::move(cells)), 0.9, OccupancyMode::Exact};
}

OccupancyMeasure random_measure(std::size_t S, std::size_t A, Rng& rng) {
  std::vector<double> cells(S * A);
  double total = 0.0;
  for (double& c : cells) total += c = rng.uniform() + 0.01;
  for (double& c : cells) c /= total;
  return measure(cells, S, A);
}

TEST(ExactOccupancy, SingleCell) {
  TabularMDP m(1, 1, 0.9);
  m.p(0, 0, 0) = 1.0;
  m.mu0[0] = 1.0;
  EXPECT_NEAR(exact_occupancy(m, uniform_policy(m)).rho(0, 0), 1.0, 1e-15);
}

TEST(ExactOccupancy, TwoStateChain) {
  TabularMDP m(2, 1, 0.9);
  m.p(0, 0, 1) = 1.0;
  m.p(1, 0, 1) = 1.0;
  m.mu0[0] = 1.0;
  const OccupancyMeasure o = exact_occupancy(m, uniform_policy(m));
  EXPECT_NEAR(o.rho(0, 0), 0.1, 1e-14);
  EXPECT_NEAR(o.rho(1, 0), 0.9, 1e-14);
}

TEST(ExactOccupancy, MatchesIndependentIteration) {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    TabularMDP m = make_random_mdp(5, 3, 0.9, rng);
    const DenseArray pi = random_policy(5, 3, rng);
    const OccupancyMeasure o = exact_occupancy(m, pi);
    const std::vector<double> d = fixed_point_state_occupancy(m, pi, 2000);
    for (std::size_t s = 0; s < 5; ++s)
      for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(o.rho(s, a), d[s] * pi(s, a), 1e-6);
    const OccupancyMeasure pw = power_iteration_occupancy(m, pi, 2000);
    for (std::size_t k = 0; k < o.rho.size(); ++k) EXPECT_NEAR(o.rho[k], pw.rho[k], 1e-6);
  }
}

TEST(ExactOccupancy, FlowConstraintAndMass) {
  Rng rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    TabularMDP m = make_random_mdp(1 + rng.index(10), 1 + rng.index(4), 0.95, rng);
    const DenseArray pi = random_policy(m.n_states, m.n_actions, rng);
    const OccupancyMeasure o = exact_occupancy(m, pi);
    EXPECT_LT(flow_residual(m, pi, o), 1e-8);
    EXPECT_NEAR(o.total(), 1.0, 1e-8);
    for (double v : o.rho.values()) EXPECT_GE(v, 0.0);
  }
}

TEST(ExactOccupancy, BadPolicyShapeThrows) {
  Rng rng(1);
  TabularMDP m = make_random_mdp(3, 2, 0.9, rng);
  EXPECT_THROW(exact_occupancy(m, DenseArray::matrix(3, 3, 1.0 / 3.0)), ShapeError);
}

TEST(ExactReturn, ZeroAndConstantRewards) {
  Rng rng(33);
  TabularMDP m = make_random_mdp(4, 2, 0.9, rng);
  const DenseArray pi = random_policy(4, 2, rng);
  std::fill(m.reward.begin(), m.reward.end(), 0.0);
  EXPECT_EQ(exact_return(m, pi), 0.0);
  std::fill(m.reward.begin(), m.reward.end(), 2.5);
  EXPECT_NEAR(exact_return(m, pi), 2.5, 1e-12);
}

TEST(ExactReturn, MatchesMonteCarlo) {
  Rng rng(34);
  TabularMDP m = make_random_mdp(4, 2, 0.8, rng);
  const DenseArray pi = random_policy(4, 2, rng);
  TabularEnv env(m);
  Rng sim(35);
  const int episodes = 100000;
  double sum = 0.0, sumsq = 0.0;
  std::vector<double> row(2);
  for (int e = 0; e < episodes; ++e) {
    State s = env.reset(sim);
    double g = 0.0, w = 1.0;
    for (int t = 0; t < 120; ++t, w *= m.gamma) {
      row[0] = pi(s.index, 0);
      row[1] = pi(s.index, 1);
      StepResult r = env.step(s, Action{sim.categorical(row), {}}, sim);
      g += w * r.reward;
      s = r.next;
    }
    g *= 1.0 - m.gamma;
    sum += g;
    sumsq += g * g;
  }
  const double mean = sum / episodes;
  const double se = std::sqrt((sumsq / episodes - mean * mean) / episodes);
  EXPECT_NEAR(exact_return(m, pi), mean, 3.0 * se + 1e-9);
}

TEST(ExactPolicyGradient, MatchesFiniteDifferenceOfReturn) {
  Rng rng(36);
  TabularMDP m = make_random_mdp(3, 3, 0.9, rng);
  DenseArray logits = DenseArray::matrix(3, 3);
  for (double& v : logits.values()) v = rng.normal();
  auto softmax = [](const DenseArray& z) {
    DenseArray pi = z;
    for (std::size_t s = 0; s < z.rows(); ++s) {
      double t = 0.0;
      for (std::size_t a = 0; a < z.cols(); ++a) t += pi(s, a) = std::exp(z(s, a));
      for (std::size_t a = 0; a < z.cols(); ++a) pi(s, a) /= t;
    }
    return pi;
  };
  const DenseArray g = exact_softmax_policy_gradient(m, softmax(logits));
  for (std::size_t k = 0; k < logits.size(); ++k) {
    DenseArray up = logits, down = logits;
    up[k] += 1e-6;
    down[k] -= 1e-6;
    const double fd = (exact_return(m, softmax(up)) - exact_return(m, softmax(down))) / 2e-6;
    EXPECT_NEAR(g[k], fd, 1e-7);
  }
}

TEST(ExactRatio, IdenticalMeasuresGiveOne) {
  Rng rng(37);
  const OccupancyMeasure p = random_measure(3, 2, rng);
  const RatioTable z = exact_ratio(p, p);
  for (double v : z.zeta.values()) EXPECT_EQ(v, 1.0);
}

TEST(ExactRatio, HalfSupport) {
  const OccupancyMeasure q = measure({0.25, 0.25, 0.25, 0.25}, 2, 2);
  const OccupancyMeasure p = measure({0.5, 0.5, 0.0, 0.0}, 2, 2);
  const RatioTable z = exact_ratio(p, q);
  EXPECT_EQ(z(0, 0), 2.0);
  EXPECT_EQ(z(0, 1), 2.0);
  EXPECT_EQ(z(1, 0), 0.0);
  EXPECT_EQ(z(1, 1), 0.0);
}

TEST(ExactRatio, ZeroOverZeroIsOne) {
  const OccupancyMeasure q = measure({0.5, 0.5, 0.0, 0.0}, 2, 2);
  const OccupancyMeasure p = measure({0.2, 0.8, 0.0, 0.0}, 2, 2);
  EXPECT_EQ(exact_ratio(p, q)(1, 1), 1.0);
}

TEST(ExactRatio, SupportViolationListsCells) {
  const OccupancyMeasure q = measure({0.5, 0.5, 0.0, 0.0}, 2, 2);
  const OccupancyMeasure p = measure({0.2, 0.2, 0.0, 0.6}, 2, 2);
  try {
    exact_ratio(p, q);
    FAIL();
  } catch (const SupportError& e) {
    EXPECT_NE(std::string(e.what()).find("(1,1)"), std::string::npos);
  }
}

TEST(ExactRatio, ExpectationUnderDenominatorIsOne) {
  Rng rng(38);
  for (int trial = 0; trial < 10; ++trial) {
    TabularMDP m = make_random_mdp(5, 3, 0.95, rng);
    const OccupancyMeasure pi = exact_occupancy(m, random_policy(5, 3, rng));
    const OccupancyMeasure pj = exact_occupancy(m, random_policy(5, 3, rng));
    const RatioTable z = exact_ratio(pi, pj);
    double e = 0.0;
    for (std::size_t k = 0; k < z.zeta.size(); ++k) e += pj.rho[k] * z.zeta[k];
    EXPECT_NEAR(e, 1.0, 1e-10);
  }
}

TEST(GeneratorF, TableValues) {
  for (FDivergenceKind k : kAllDivergenceKinds) EXPECT_NEAR(generator_f(k, 1.0), 0.0, 1e-15) << to_string(k);
  EXPECT_DOUBLE_EQ(generator_f(FDivergenceKind::TotalVariation, 3.0), 1.0);
  EXPECT_NEAR(generator_f(FDivergenceKind::SymmetricKL, std::numbers::e), std::numbers::e - 1.0, 1e-14);
  EXPECT_THROW(generator_f(FDivergenceKind::JS, -0.5), DomainError);
  EXPECT_NEAR(generator_f(FDivergenceKind::JS, 0.0), 0.5 * std::numbers::ln2, 1e-15);
}

TEST(ExactDivergence, IdenticalIsZero) {
  Rng rng(39);
  const OccupancyMeasure p = random_measure(4, 2, rng);
  for (FDivergenceKind k : kAllDivergenceKinds) EXPECT_NEAR(exact_divergence(k, p, p).value, 0.0, 1e-15);
}

TEST(ExactDivergence, DisjointJsIsLog2) {
  const OccupancyMeasure p = measure({0.5, 0.5, 0.0, 0.0}, 2, 2);
  const OccupancyMeasure q = measure({0.0, 0.0, 0.3, 0.7}, 2, 2);
  EXPECT_NEAR(exact_divergence(FDivergenceKind::JS, p, q).value, std::numbers::ln2, 1e-15);
  EXPECT_TRUE(exact_divergence(FDivergenceKind::KL, p, q).infinite);
  EXPECT_TRUE(exact_divergence(FDivergenceKind::ReverseKL, p, q).infinite);
  EXPECT_TRUE(exact_divergence(FDivergenceKind::SymmetricKL, p, q).infinite);
  EXPECT_FALSE(exact_divergence(FDivergenceKind::TotalVariation, p, q).infinite);
}

TEST(ExactDivergence, GeneratorRouteAgrees) {
  Rng rng(40);
  for (int trial = 0; trial < 20; ++trial) {
    TabularMDP m = make_random_mdp(4, 3, 0.9, rng);
    const OccupancyMeasure ri = exact_occupancy(m, random_policy(4, 3, rng));
    const OccupancyMeasure rj = exact_occupancy(m, random_policy(4, 3, rng));
    const RatioTable z = exact_ratio(ri, rj);
    for (FDivergenceKind k : kAllDivergenceKinds) {
      // sum_x rho_j f(zeta_ij) is the divergence with rho_j in the first slot.
      double via_generator = 0.0;
      for (std::size_t c = 0; c < z.zeta.size(); ++c) via_generator += rj.rho[c] * generator_f(k, z.zeta[c]);
      EXPECT_NEAR(exact_divergence(k, rj, ri).value, via_generator, 1e-10) << to_string(k);
      EXPECT_NEAR(generator_divergence(k, rj, ri).value, via_generator, 1e-10) << to_string(k);
    }
  }
}

TEST(ExactDivergence, NonNegativityAndSymmetry) {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const OccupancyMeasure p = random_measure(3, 3, rng), q = random_measure(3, 3, rng);
    for (FDivergenceKind k : kAllDivergenceKinds) {
      const double pq = exact_divergence(k, p, q).value, qp = exact_divergence(k, q, p).value;
      EXPECT_GE(pq, 0.0);
      if (is_symmetric(k)) {
        EXPECT_NEAR(pq, qp, 1e-12) << to_string(k);
      }
    }
    EXPECT_NEAR(exact_divergence(FDivergenceKind::KL, p, q).value,
                exact_divergence(FDivergenceKind::ReverseKL, q, p).value, 1e-12);
  }
}

TEST(ExactDivergence, ZetaFormsMatchIntegrals) {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    TabularMDP m = make_random_mdp(5, 2, 0.9, rng);
    const OccupancyMeasure ri = exact_occupancy(m, random_policy(5, 2, rng));
    const OccupancyMeasure rj = exact_occupancy(m, random_policy(5, 2, rng));
    const RatioTable z = exact_ratio(ri, rj);
    double js = std::numbers::ln2, kls = 0.0;
    for (std::size_t c = 0; c < z.zeta.size(); ++c) {
      js += 0.5 * ri.rho[c] * std::log(z.zeta[c] / (1.0 + z.zeta[c])) + 0.5 * rj.rho[c] * std::log(1.0 / (1.0 + z.zeta[c]));
      kls += (ri.rho[c] - rj.rho[c]) * std::log(z.zeta[c]);
    }
    EXPECT_NEAR(exact_divergence(FDivergenceKind::JS, ri, rj).value, js, 1e-10);
    EXPECT_NEAR(exact_divergence(FDivergenceKind::SymmetricKL, ri, rj).value, kls, 1e-10);
  }
}

}  // namespace
}  // namespace qdsvpg
