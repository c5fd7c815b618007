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

#ifndef QDSVPG_DIVERGENCE_KERNEL_HPP
#define QDSVPG_DIVERGENCE_KERNEL_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "qdsvpg/core/errors.hpp"
#include "qdsvpg/core/random.hpp"
#include "qdsvpg/divergence/kinds.hpp"
#include "qdsvpg/oracle/occupancy.hpp"
#include "qdsvpg/oracle/ratio.hpp"
#include "qdsvpg/policies/ppo.hpp"

namespace qdsvpg {

inline constexpr double kZetaMin = 1e-6;
inline constexpr double kZetaMax = 1e6;

inline double clamp_zeta(double z) { return std::clamp(z, kZetaMin, kZetaMax); }

struct KernelSpec {
  FDivergenceKind kind = FDivergenceKind::JS;
  double temperature = 0.5;

  void validate() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature))
      throw ConfigError("kernel: temperature must be positive and finite");
  }
};

/// Default temperatures: 0.5 for JS, 1.0 otherwise.
inline double default_temperature(FDivergenceKind k) { return k == FDivergenceKind::JS ? 0.5 : 1.0; }

inline double kernel_value(const KernelSpec& spec, const DivergenceEstimate& d) {
  if (d.infinite) return 0.0;
  return std::exp(-std::max(0.0, d.value) / spec.temperature);
}

namespace detail {

inline void check_samples(std::span<const double> zeta, std::span<const double> w, const char* side, const char* op) {
  if (zeta.empty()) throw ContractError(std::string(op) + ": empty " + side + " sample set");
  if (zeta.size() != w.size()) throw ShapeError(std::string(op) + ": " + side + " zeta and weights differ in length");
  for (std::size_t k = 0; k < zeta.size(); ++k)
    if (!std::isfinite(zeta[k]))
      throw NumericError(std::string(op) + ": non-finite zeta on " + side + " sample " + std::to_string(k));
}

inline double weighted_average(std::span<const double> x, std::span<const double> w) {
  double s = 0.0, t = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    s += w[k] * x[k];
    t += w[k];
  }
  if (!(t > 0.0)) throw ContractError("weighted average: weights sum to zero");
  return s / t;
}

}  // namespace detail

// D_JS(rho_i, rho_j) = 1/2 E_i log(zeta / (1 + zeta)) + 1/2 E_j log(1 / (1 + zeta)) + log 2,
// zeta = zeta_ij evaluated on each side's samples; clamped to [0, log 2].
inline DivergenceEstimate estimate_djs(std::span<const double> zeta_on_i, std::span<const double> w_i,
                                       std::span<const double> zeta_on_j, std::span<const double> w_j) {
  detail::check_samples(zeta_on_i, w_i, "i-side", "estimate_djs");
  detail::check_samples(zeta_on_j, w_j, "j-side", "estimate_djs");
  std::vector<double> a(zeta_on_i.size()), b(zeta_on_j.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double z = clamp_zeta(zeta_on_i[k]);
    a[k] = std::log(z) - std::log1p(z);
  }
  for (std::size_t k = 0; k < b.size(); ++k) b[k] = -std::log1p(clamp_zeta(zeta_on_j[k]));
  const double d = 0.5 * detail::weighted_average(a, w_i) + 0.5 * detail::weighted_average(b, w_j) + std::numbers::ln2;
  return DivergenceEstimate::finite(std::clamp(d, 0.0, std::numbers::ln2), a.size(), b.size());
}

/// D_KLS(rho_i, rho_j) = E_i log zeta - E_j log zeta, clamped below at 0.
inline DivergenceEstimate estimate_dkls(std::span<const double> zeta_on_i, std::span<const double> w_i,
                                        std::span<const double> zeta_on_j, std::span<const double> w_j) {
  detail::check_samples(zeta_on_i, w_i, "i-side", "estimate_dkls");
  detail::check_samples(zeta_on_j, w_j, "j-side", "estimate_dkls");
  auto logs = [](std::span<const double> z, const char* side) {
    std::vector<double> out(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
      if (!(z[k] > 0.0)) throw NumericError(std::string("estimate_dkls: zeta = 0 on ") + side + " sample " + std::to_string(k));
      out[k] = std::log(z[k]);
    }
    return out;
  };
  const double d = detail::weighted_average(logs(zeta_on_i, "i-side"), w_i) - detail::weighted_average(logs(zeta_on_j, "j-side"), w_j);
  return DivergenceEstimate::finite(std::max(0.0, d), zeta_on_i.size(), zeta_on_j.size());
}

inline bool has_surrogate(FDivergenceKind k) { return k == FDivergenceKind::JS || k == FDivergenceKind::SymmetricKL; }

inline DivergenceEstimate estimate_divergence(FDivergenceKind kind, std::span<const double> zeta_on_i, std::span<const double> w_i,
                                              std::span<const double> zeta_on_j, std::span<const double> w_j) {
  if (kind == FDivergenceKind::JS) return estimate_djs(zeta_on_i, w_i, zeta_on_j, w_j);
  if (kind == FDivergenceKind::SymmetricKL) return estimate_dkls(zeta_on_i, w_i, zeta_on_j, w_j);
  throw ContractError("estimate_divergence: only JS and KLS have ratio-based estimates, got " + to_string(kind));
}

/// Per-step reward whose policy gradient on pi_j is the divergence gradient: JS -1/2 log(1 + zeta), KLS -zeta - log zeta.
inline double surrogate_reward(FDivergenceKind kind, double zeta) {
  if (std::isnan(zeta) || zeta < 0.0) throw DomainError("surrogate_reward: zeta must be non-negative");
  const double z = clamp_zeta(zeta);
  switch (kind) {
    case FDivergenceKind::JS: return -0.5 * std::log1p(z);
    case FDivergenceKind::SymmetricKL: return -z - std::log(z);
    default: throw ContractError("surrogate_reward: no surrogate reward for " + to_string(kind));
  }
}

inline std::vector<double> surrogate_rewards(FDivergenceKind kind, std::span<const double> zeta) {
  std::vector<double> r(zeta.size());
  for (std::size_t k = 0; k < zeta.size(); ++k) r[k] = surrogate_reward(kind, zeta[k]);
  return r;
}

// Gradient of D(rho_j, rho_i) with respect to theta_j, with zeta_ij held fixed:
// the policy gradient of pi_j under the surrogate reward.
inline std::vector<double> divergence_gradient(const PolicyParams& policy_j, const ValueFunction& value_j,
                                               const RolloutBatch& batch_j, std::span<const double> zeta_on_j,
                                               FDivergenceKind kind, const PpoConfig& cfg) {
  if (zeta_on_j.size() != batch_j.size()) throw ShapeError("divergence_gradient: zeta not aligned with batch_j");
  const std::vector<double> rewards = surrogate_rewards(kind, zeta_on_j);
  return policy_gradient_estimate(policy_j, value_j, batch_j, rewards, cfg, "surrogate-" + to_string(kind));
}

/// Smallest eigenvalue of the Gram matrix K_mn = exp(-D(p_m, p_n) / T), symmetrized.
inline double gram_min_eigenvalue(FDivergenceKind kind, std::span<const OccupancyMeasure> dists, double temperature) {
  const auto n = static_cast<Eigen::Index>(dists.size());
  if (n == 0) throw ContractError("gram_pd_check: no distributions");
  const KernelSpec spec{kind, temperature};
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b)
      K(a, b) = kernel_value(spec, exact_divergence(kind, dists[static_cast<std::size_t>(a)], dists[static_cast<std::size_t>(b)]));
  const Eigen::MatrixXd S = 0.5 * (K + K.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(S, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

/// Random categorical distribution: softmax of Gaussian logits with a random spread.
inline OccupancyMeasure random_categorical(std::size_t atoms, Rng& rng) {
  const double spread = rng.uniform(0.25, 3.0);
  std::vector<double> p(atoms);
  double total = 0.0;
  for (double& v : p) total += v = std::exp(spread * rng.normal());
  for (double& v : p) v /= total;
  return OccupancyMeasure{DenseArray::matrix(atoms, 1, std::move(p)), 0.0, OccupancyMode::Exact};
}

struct PdSearchResult {
  FDivergenceKind kind = FDivergenceKind::JS;
  double min_eigenvalue = 1.0;
  std::size_t worst_trial = 0;
  std::size_t trials = 0;
};

// Random search over Gram matrices of `per_trial` distributions on `atoms` atoms;
// reports the smallest eigenvalue seen.
inline PdSearchResult gram_pd_check(FDivergenceKind kind, std::size_t trials, std::size_t per_trial, std::size_t atoms,
                                    double temperature, Rng& rng) {
  if (per_trial == 0 || atoms == 0) throw ContractError("gram_pd_check: empty trial");
  PdSearchResult out{kind, std::numeric_limits<double>::infinity(), 0, trials};
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<OccupancyMeasure> dists;
    for (std::size_t k = 0; k < per_trial; ++k) dists.push_back(random_categorical(atoms, rng));
    const double e = gram_min_eigenvalue(kind, dists, temperature);
    if (e < out.min_eigenvalue) {
      out.min_eigenvalue = e;
      out.worst_trial = t;
    }
  }
  return out;
}

}  // namespace qdsvpg

#endif  // QDSVPG_DIVERGENCE_KERNEL_HPP
