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
#include <cstdio>
#include <limits>
#include <memory>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "qdsvpg/divergence/kernel.hpp"
#include "qdsvpg/envs/tabular_mdp.hpp"
#include "qdsvpg/oracle/occupancy.hpp"
#include "qdsvpg/oracle/ratio.hpp"
#include "qdsvpg/policies/ppo.hpp"
#include "qdsvpg/policies/rollout.hpp"

namespace qdsvpg {
namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  return ab / std::sqrt(aa * bb);
}

TEST(EstimateDjs, UnitRatioIsZero) {
  const std::vector<double> one(10, 1.0), w(10, 1.0);
  EXPECT_NEAR(estimate_djs(one, w, one, w).value, 0.0, 1e-15);
}

TEST(EstimateDjs, DisjointLimitIsLog2) {
  const std::vector<double> big(5, 1e12), small(5, 0.0), w(5, 1.0);
  EXPECT_NEAR(estimate_djs(big, w, small, w).value, std::numbers::ln2, 1e-5);
}

TEST(EstimateDjs, NonFiniteZetaNamesSample) {
  std::vector<double> z(4, 1.0), w(4, 1.0);
  z[2] = std::nan("");
  try {
    estimate_djs(z, w, z, w);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("sample 2"), std::string::npos);
  }
}

TEST(EstimateDkls, ConstantRatioIsZero) {
  const std::vector<double> c(7, 3.7), w(7, 0.4);
  EXPECT_NEAR(estimate_dkls(c, w, c, w).value, 0.0, 1e-15);
  const std::vector<double> zero(7, 0.0);
  EXPECT_THROW(estimate_dkls(zero, w, c, w), NumericError);
}

struct Pair {
  TabularMDP mdp;
  DenseArray pi_i, pi_j;
  OccupancyMeasure rho_i, rho_j;
  RatioTable zeta;
};

Pair random_pair(std::uint64_t seed, std::size_t S = 4, std::size_t A = 2) {
  Rng rng(seed);
  TabularMDP m = make_random_mdp(S, A, 0.9, rng);
  m.horizon = 300;
  auto policy = [&] {
    DenseArray pi = DenseArray::matrix(S, A);
    for (std::size_t s = 0; s < S; ++s) {
      double t = 0.0;
      for (std::size_t a = 0; a < A; ++a) t += pi(s, a) = std::exp(rng.normal());
      for (std::size_t a = 0; a < A; ++a) pi(s, a) /= t;
    }
    return pi;
  };
  DenseArray pi = policy(), pj = policy();
  OccupancyMeasure ri = exact_occupancy(m, pi), rj = exact_occupancy(m, pj);
  RatioTable z = exact_ratio(ri, rj);
  return Pair{m, pi, pj, ri, rj, z};
}

TEST(EstimateDivergence, ExactExpectationsReproduceOracle) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Pair p = random_pair(seed);
    const std::vector<double> z(p.zeta.zeta.values().begin(), p.zeta.zeta.values().end());
    const std::vector<double> wi(p.rho_i.rho.values().begin(), p.rho_i.rho.values().end());
    const std::vector<double> wj(p.rho_j.rho.values().begin(), p.rho_j.rho.values().end());
    EXPECT_NEAR(estimate_dkls(z, wi, z, wj).value,
                exact_divergence(FDivergenceKind::SymmetricKL, p.rho_i, p.rho_j).value, 1e-10);
    EXPECT_NEAR(estimate_djs(z, wi, z, wj).value, exact_divergence(FDivergenceKind::JS, p.rho_i, p.rho_j).value, 1e-10);
  }
}

PolicyParams tabular_from_table(const DenseArray& pi) {
  PolicyParams p = make_tabular_policy(pi.rows(), pi.cols());
  for (std::size_t k = 0; k < pi.size(); ++k) p.net.layers[0].weight[k] = std::log(pi[k]);
  return p;
}

std::vector<double> zeta_on(const RolloutBatch& b, const RatioTable& z) {
  std::vector<double> out;
  for (const Transition& tr : b.transitions) out.push_back(z(tr.state.index, tr.action.index));
  return out;
}

TEST(EstimateDivergence, SampledMatchesOracle) {
  for (std::uint64_t seed = 11; seed <= 13; ++seed) {
    const Pair p = random_pair(seed);
    TabularEnv env(p.mdp);
    Rng rng(seed);
    const RolloutBatch bi = collect_rollouts(env, tabular_from_table(p.pi_i), 100000, rng);
    const RolloutBatch bj = collect_rollouts(env, tabular_from_table(p.pi_j), 100000, rng);
    const std::vector<double> zi = zeta_on(bi, p.zeta), zj = zeta_on(bj, p.zeta);
    EXPECT_NEAR(estimate_djs(zi, bi.weights, zj, bj.weights).value,
                exact_divergence(FDivergenceKind::JS, p.rho_i, p.rho_j).value, 0.02);
    EXPECT_NEAR(estimate_dkls(zi, bi.weights, zj, bj.weights).value,
                exact_divergence(FDivergenceKind::SymmetricKL, p.rho_i, p.rho_j).value, 0.05);
  }
}

TEST(KernelValue, Values) {
  const KernelSpec spec{FDivergenceKind::JS, 0.5};
  EXPECT_EQ(kernel_value(spec, DivergenceEstimate::finite(0.0)), 1.0);
  EXPECT_NEAR(kernel_value(spec, DivergenceEstimate::finite(0.5)), std::exp(-1.0), 1e-15);
  EXPECT_EQ(kernel_value(spec, DivergenceEstimate::infinity()), 0.0);
  double previous = 2.0;
  for (double d = 0.0; d < 5.0; d += 0.01) {
    const double k = kernel_value(spec, DivergenceEstimate::finite(d));
    EXPECT_LT(k, previous);
    previous = k;
  }
}

TEST(SurrogateReward, Values) {
  EXPECT_NEAR(surrogate_reward(FDivergenceKind::JS, 1.0), -0.5 * std::numbers::ln2, 1e-15);
  EXPECT_NEAR(surrogate_reward(FDivergenceKind::SymmetricKL, 1.0), -1.0, 1e-15);
  EXPECT_NEAR(surrogate_reward(FDivergenceKind::JS, 0.0), 0.0, 1e-6);
  EXPECT_THROW(surrogate_reward(FDivergenceKind::TotalVariation, 1.0), ContractError);
  EXPECT_EQ(surrogate_reward(FDivergenceKind::SymmetricKL, 1e9), surrogate_reward(FDivergenceKind::SymmetricKL, kZetaMax));
}

TEST(SurrogateReward, ShapeOnGrid) {
  double previous_js = 1.0, previous_kls = std::numeric_limits<double>::infinity();
  for (double z = 0.0; z < 50.0; z += 0.05) {
    const double js = surrogate_reward(FDivergenceKind::JS, z);
    const double kls = surrogate_reward(FDivergenceKind::SymmetricKL, z);
    EXPECT_LE(js, 0.0);
    EXPECT_LT(js, previous_js);
    EXPECT_LT(kls, previous_kls);
    previous_js = js;
    previous_kls = kls;
  }
}

// Both runs use the same tabular 3-state set-up as the acceptance check.
struct GradientCase {
  TabularMDP mdp;
  std::unique_ptr<TabularEnv> env;
  PolicyParams pi_j;
  DenseArray table_i;
};

GradientCase gradient_case(std::uint64_t seed) {
  Rng rng(seed);
  GradientCase c{make_random_mdp(3, 3, 0.9, rng), nullptr, make_tabular_policy(3, 3), DenseArray()};
  c.mdp.horizon = 200;
  c.env = std::make_unique<TabularEnv>(c.mdp);
  std::vector<double> flat = c.pi_j.flat();
  for (double& v : flat) v = 0.7 * rng.normal();
  c.pi_j.set_flat(flat);
  PolicyParams pi_i = make_tabular_policy(3, 3);
  for (double& v : flat) v = 0.7 * rng.normal();
  pi_i.set_flat(flat);
  c.table_i = policy_table(pi_i, *c.env);
  return c;
}

std::vector<double> sampled_divergence_gradient(const GradientCase& c, FDivergenceKind kind, std::size_t n, Rng& rng) {
  const OccupancyMeasure ri = exact_occupancy(c.mdp, c.table_i);
  const OccupancyMeasure rj = exact_occupancy(c.mdp, policy_table(c.pi_j, *c.env));
  const RatioTable z = exact_ratio(ri, rj);
  const RolloutBatch b = collect_rollouts(*c.env, c.pi_j, n, rng);
  const std::vector<double> zj = zeta_on(b, z);
  PpoConfig cfg;
  cfg.gamma = c.mdp.gamma;
  cfg.gae_lambda = 1.0;
  cfg.clip = std::numeric_limits<double>::infinity();
  ValueFunction vf = make_value_function(*c.env, 0, 0, 0.05, rng);
  const std::vector<double> r = surrogate_rewards(kind, zj);
  for (int round = 0; round < 3; ++round)
    fit_value_function(vf, b, gae_advantages(b, r, vf, cfg.gamma, 1.0).returns, 2, 256, rng);
  return divergence_gradient(c.pi_j, vf, b, zj, kind, cfg);
}

std::vector<double> finite_difference_gradient(const GradientCase& c, FDivergenceKind kind) {
  const OccupancyMeasure ri = exact_occupancy(c.mdp, c.table_i);
  PolicyParams p = c.pi_j;
  const std::vector<double> flat = p.flat();
  std::vector<double> g(flat.size());
  for (std::size_t k = 0; k < flat.size(); ++k) {
    std::vector<double> up = flat, down = flat;
    up[k] += 1e-4;
    down[k] -= 1e-4;
    p.set_flat(up);
    const double fu = exact_divergence(kind, exact_occupancy(c.mdp, policy_table(p, *c.env)), ri).value;
    p.set_flat(down);
    const double fd = exact_divergence(kind, exact_occupancy(c.mdp, policy_table(p, *c.env)), ri).value;
    g[k] = (fu - fd) / 2e-4;
  }
  return g;
}

TEST(DivergenceGradient, IdenticalPoliciesGiveZero) {
  GradientCase c = gradient_case(3);
  c.table_i = policy_table(c.pi_j, *c.env);
  Rng rng(4);
  for (FDivergenceKind kind : {FDivergenceKind::JS, FDivergenceKind::SymmetricKL}) {
    const RolloutBatch b = collect_rollouts(*c.env, c.pi_j, 2000, rng);
    const std::vector<double> ones(b.size(), 1.0);
    PpoConfig cfg;
    cfg.gamma = c.mdp.gamma;
    ValueFunction vf = make_value_function(*c.env, 0, 0, 0.05, rng);
    // A baseline that already predicts the constant return makes every advantage vanish.
    const double r = surrogate_reward(kind, 1.0);
    for (std::size_t s = 0; s < 3; ++s) vf.net.layers[0].weight(s, 0) = r;
    for (double g : divergence_gradient(c.pi_j, vf, b, ones, kind, cfg)) EXPECT_NEAR(g, 0.0, 1e-12);
  }
}

TEST(DivergenceGradient, AlignsWithFiniteDifferenceOfExactDivergence) {
  for (FDivergenceKind kind : {FDivergenceKind::JS, FDivergenceKind::SymmetricKL}) {
    const GradientCase c = gradient_case(5);
    Rng rng(6);
    const std::vector<double> est = sampled_divergence_gradient(c, kind, 100000, rng);
    const std::vector<double> fd = finite_difference_gradient(c, kind);
    EXPECT_GE(cosine(est, fd), 0.9) << to_string(kind);
  }
}

TEST(GramPdCheck, SingleDistribution) {
  Rng rng(7);
  const std::vector<OccupancyMeasure> one{random_categorical(6, rng)};
  for (FDivergenceKind k : kAllDivergenceKinds) EXPECT_NEAR(gram_min_eigenvalue(k, one, 0.5), 1.0, 1e-15);
}

TEST(GramPdCheck, PdKindsHaveNoNegativeEigenvalue) {
  for (FDivergenceKind k : kAllDivergenceKinds) {
    if (!kernel_is_pd(k)) continue;
    Rng rng(8);
    EXPECT_GE(gram_pd_check(k, 200, 8, 6, 0.5, rng).min_eigenvalue, -1e-8) << to_string(k);
  }
}

TEST(GramPdCheck, SymmetricKlWitness) {
  Rng rng(9);
  const PdSearchResult r = gram_pd_check(FDivergenceKind::SymmetricKL, 200, 16, 3, 1.0, rng);
  std::printf("KLS min eigenvalue over 200 trials: %.3e\n", r.min_eigenvalue);
  EXPECT_LT(r.min_eigenvalue, -1e-6);
}

}  // namespace
}  // namespace qdsvpg
