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

#ifndef QDSVPG_RATIO_ESTIMATOR_HPP
#define QDSVPG_RATIO_ESTIMATOR_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "qdsvpg/core/adam.hpp"
#include "qdsvpg/core/dense_array.hpp"
#include "qdsvpg/core/errors.hpp"
#include "qdsvpg/core/mlp.hpp"
#include "qdsvpg/core/random.hpp"
#include "qdsvpg/core/serialize.hpp"
#include "qdsvpg/core/tape.hpp"
#include "qdsvpg/divergence/kernel.hpp"
#include "qdsvpg/envs/environment.hpp"
#include "qdsvpg/oracle/occupancy.hpp"
#include "qdsvpg/oracle/ratio.hpp"
#include "qdsvpg/policies/policy.hpp"
#include "qdsvpg/policies/rollout.hpp"

namespace qdsvpg {

enum class EstimatorKind { None, Oracle, NCE, DualDICE, ValueDICE, GenDICE };

inline std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::None: return "none";
    case EstimatorKind::Oracle: return "Oracle";
    case EstimatorKind::NCE: return "NCE";
    case EstimatorKind::DualDICE: return "DualDICE";
    case EstimatorKind::ValueDICE: return "ValueDICE";
    case EstimatorKind::GenDICE: return "GenDICE";
  }
  return "none";
}

inline EstimatorKind estimator_kind_from_string(const std::string& s) {
  for (EstimatorKind k : {EstimatorKind::None, EstimatorKind::Oracle, EstimatorKind::NCE, EstimatorKind::DualDICE,
                          EstimatorKind::ValueDICE, EstimatorKind::GenDICE})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown estimator '" + s + "' (expected none, Oracle, NCE, DualDICE, ValueDICE or GenDICE)");
}

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::DualDICE;
  std::size_t hidden_layers = 2;
  std::size_t width = 100;
  double lr = 1e-4;
  std::size_t steps = 100;  // update steps per training iteration
  std::size_t minibatch = 256;
  double gendice_lambda = 10.0;
  double ascent_lr_ratio = 100.0;  // max-player lr / min-player lr in the DICE saddle problems

  void validate() const {
    if (hidden_layers > 0 && width == 0) throw ConfigError("estimator.width must be positive");
    if (!(lr > 0.0)) throw ConfigError("estimator.lr must be positive");
    if (minibatch == 0) throw ConfigError("estimator.minibatch must be positive");
    if (!(gendice_lambda >= 0.0)) throw ConfigError("estimator.gendice_lambda must be non-negative");
    if (!(ascent_lr_ratio > 0.0)) throw ConfigError("estimator.ascent_lr_ratio must be positive");
  }
};

/// Small-network settings that converge within a few thousand steps on tabular pairs.
inline EstimatorConfig compact_estimator_config(EstimatorKind kind) {
  EstimatorConfig cfg;
  cfg.kind = kind;
  cfg.hidden_layers = 1;
  cfg.width = 64;
  cfg.minibatch = 128;
  switch (kind) {
    case EstimatorKind::DualDICE: cfg.lr = 1e-4; break;
    case EstimatorKind::GenDICE: cfg.lr = 5e-4; break;
    default: cfg.lr = 1e-3; break;
  }
  return cfg;
}

/// Draws indices with probability proportional to fixed non-negative weights.
class WeightedSampler {
 public:
  explicit WeightedSampler(std::span<const double> weights) : cdf_(weights.size()) {
    double acc = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (!(weights[k] >= 0.0)) throw ContractError("WeightedSampler: negative or NaN weight");
      acc += weights[k];
      cdf_[k] = acc;
    }
    if (!(acc > 0.0)) throw ContractError("WeightedSampler: weights sum to zero");
  }

  std::size_t draw(Rng& rng) const {
    const double u = rng.uniform() * cdf_.back();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

  std::vector<std::size_t> draw(std::size_t m, Rng& rng) const {
    std::vector<std::size_t> out(m);
    for (std::size_t& k : out) k = draw(rng);
    return out;
  }

 private:
  std::vector<double> cdf_;
};

/// Everything a DICE objective reads for one ordered pair: samples of rho_j,
/// pi_i's action branches at each successor s', and at initial states s0.
struct DiceInputs {
  const DenseArray* sa = nullptr;
  const ActionBranches* next = nullptr;
  const ActionBranches* initial = nullptr;
  std::span<const double> weights;
  std::vector<double> continuation;  // 0 after a terminal transition, else 1
  double gamma = 0.99;

  std::size_t size() const { return sa->rows(); }
};

inline DiceInputs dice_inputs(const RolloutBatch& batch_j, std::size_t target) {
  if (target >= batch_j.targets.size())
    throw ContractError("DICE update: batch has no a' annotations for target policy " + std::to_string(target));
  const TargetAnnotation& ann = batch_j.targets[target];
  if (ann.next_actions.size() != batch_j.size() || ann.initial_actions.empty() || ann.next_branches.count() == 0 ||
      ann.initial_branches.count() == 0)
    throw ContractError("DICE update: incomplete a' annotations for target policy " + std::to_string(target));
  DiceInputs in;
  in.sa = &batch_j.sa;
  in.next = &ann.next_branches;
  in.initial = &ann.initial_branches;
  in.weights = batch_j.weights;
  in.continuation.reserve(batch_j.size());
  for (const Transition& tr : batch_j.transitions) in.continuation.push_back(tr.done ? 0.0 : 1.0);
  in.gamma = batch_j.gamma;
  return in;
}

/// A state-action network with its own Adam state.
struct SaNetwork {
  MlpParams net;
  AdamState adam;

  SaNetwork() = default;
  SaNetwork(std::size_t input_dim, const EstimatorConfig& cfg, OutputHead head, Rng& rng, double lr_scale = 1.0)
      : net(make_mlp(MlpArchitecture{input_dim, cfg.hidden_layers, cfg.width, 1, head, true}, rng)),
        adam(net.arch.parameter_count(), cfg.lr * lr_scale) {}

  std::vector<double> operator()(const DenseArray& sa) const {
    const DenseArray out = mlp_forward(net, sa);
    return {out.values().begin(), out.values().end()};
  }

  /// One Adam step along -grad (descent) or +grad (ascent).
  void step(const std::vector<double>& grad, bool ascend) {
    std::vector<double> g = grad;
    if (ascend)
      for (double& x : g) x = -x;
    std::vector<double> p = net.flat();
    adam_step(adam, p, g);
    net.set_flat(p);
  }

  Json to_json() const { return Json{{"net", qdsvpg::to_json(net)}, {"adam", qdsvpg::to_json(adam)}}; }
  void load(const Json& j) {
    load_json(net, j.at("net"));
    load_json(adam, j.at("adam"));
  }
};

class RatioEstimator {
 public:
  RatioEstimator(std::size_t i, std::size_t j) : i_(i), j_(j) {}
  virtual ~RatioEstimator() = default;

  std::size_t i() const { return i_; }
  std::size_t j() const { return j_; }
  virtual EstimatorKind kind() const = 0;
  /// zeta_ij on each row of a state-action matrix.
  virtual std::vector<double> evaluate(const DenseArray& sa) const = 0;
  /// Fits against batch_j, whose annotation `i` carries pi_i's actions.
  virtual void update(const RolloutBatch& batch_j, std::size_t steps, Rng& rng) = 0;
  virtual Json to_json() const = 0;
  virtual void load(const Json& j) = 0;
  virtual Json diagnostics(const RolloutBatch&) const { return Json::object(); }

 private:
  std::size_t i_, j_;
};

namespace detail {

inline void require_finite(std::span<const double> v, const std::string& what) {
  for (std::size_t k = 0; k < v.size(); ++k)
    if (!std::isfinite(v[k])) throw NumericError(what + ": non-finite value at row " + std::to_string(k));
}

// (state, action) indices of a row of one-hot tabular features followed by a one-hot action.
inline std::pair<std::size_t, std::size_t> decode_tabular_sa(const DenseArray& sa, std::size_t row, std::size_t n_states) {
  const auto r = sa.values().subspan(row * sa.cols(), sa.cols());
  const auto s = std::max_element(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(n_states)) - r.begin();
  const auto a = std::max_element(r.begin() + static_cast<std::ptrdiff_t>(n_states), r.end()) - r.begin();
  return {static_cast<std::size_t>(s), static_cast<std::size_t>(a) - n_states};
}

}  // namespace detail

/// Exact ratios from the tabular model; `refresh` recomputes them for new policies.
class OracleEstimator final : public RatioEstimator {
 public:
  OracleEstimator(std::size_t i, std::size_t j, const Environment& env) : RatioEstimator(i, j), env_(env) {
    if (env.tabular() == nullptr) throw ContractError("oracle estimator: environment '" + env.name() + "' is not tabular");
  }
  OracleEstimator(std::size_t i, std::size_t j, const Environment& env, const PolicyParams& pi_i,
                  const PolicyParams& pi_j)
      : OracleEstimator(i, j, env) {
    refresh(pi_i, pi_j);
  }

  EstimatorKind kind() const override { return EstimatorKind::Oracle; }

  void refresh(const PolicyParams& pi_i, const PolicyParams& pi_j) {
    const TabularMDP& m = *env_.tabular();
    rho_i_ = exact_occupancy(m, policy_table(pi_i, env_));
    rho_j_ = exact_occupancy(m, policy_table(pi_j, env_));
    try {
      zeta_ = exact_ratio(rho_i_, rho_j_).zeta;
    } catch (const SupportError&) {
      // Cells outside rho_j's support are never sampled from it; cap them.
      zeta_ = DenseArray::matrix(m.n_states, m.n_actions);
      for (std::size_t k = 0; k < zeta_.size(); ++k) {
        const double p = rho_i_.rho[k], q = rho_j_.rho[k];
        zeta_[k] = q > 0.0 ? p / q : (p > 0.0 ? kZetaMax : 1.0);
      }
    }
  }

  const DenseArray& table() const { return zeta_; }
  const OccupancyMeasure& rho_i() const { return rho_i_; }
  const OccupancyMeasure& rho_j() const { return rho_j_; }

  std::vector<double> evaluate(const DenseArray& sa) const override {
    if (zeta_.empty()) throw ContractError("oracle estimator: refresh() was never called");
    std::vector<double> out(sa.rows());
    for (std::size_t k = 0; k < out.size(); ++k) {
      const auto [s, a] = detail::decode_tabular_sa(sa, k, zeta_.rows());
      out[k] = zeta_(s, a);
    }
    return out;
  }

  void update(const RolloutBatch&, std::size_t, Rng&) override {}
  Json to_json() const override { return Json::object(); }
  void load(const Json&) override {}

 private:
  const Environment& env_;
  OccupancyMeasure rho_i_, rho_j_;
  DenseArray zeta_;
};

/// rho_j-weighted mean |log zeta_hat - log zeta| over cells with rho_j > 0.
inline double weighted_log_ratio_error(const DenseArray& zeta_hat, const RatioTable& exact, const OccupancyMeasure& rho_j) {
  double err = 0.0, mass = 0.0;
  for (std::size_t k = 0; k < zeta_hat.size(); ++k) {
    const double w = rho_j.rho[k];
    if (w <= 0.0) continue;
    const double z = std::max(exact.zeta[k], kZetaMin), zh = std::max(zeta_hat[k], kZetaMin);
    err += w * std::abs(std::log(zh) - std::log(z));
    mass += w;
  }
  return err / mass;
}

/// rho_j-weighted mean |zeta_hat - zeta|.
inline double weighted_abs_ratio_error(const DenseArray& zeta_hat, const RatioTable& exact, const OccupancyMeasure& rho_j) {
  double err = 0.0, mass = 0.0;
  for (std::size_t k = 0; k < zeta_hat.size(); ++k) {
    err += rho_j.rho[k] * std::abs(zeta_hat[k] - exact.zeta[k]);
    mass += rho_j.rho[k];
  }
  return err / mass;
}

/// Every (s, a) cell of a tabular environment as an encoded state-action matrix, row s*A + a.
inline DenseArray all_state_actions(const Environment& env) {
  const TabularMDP* m = env.tabular();
  if (m == nullptr) throw ContractError("all_state_actions: environment is not tabular");
  std::vector<State> states;
  std::vector<Action> actions;
  for (std::size_t s = 0; s < m->n_states; ++s)
    for (std::size_t a = 0; a < m->n_actions; ++a) {
      State st;
      st.index = s;
      states.push_back(st);
      Action ac;
      ac.index = a;
      actions.push_back(ac);
    }
  return state_action_matrix(env, detail::feature_matrix(env, states), actions);
}

/// An estimator's zeta on every tabular cell, as an [S, A] table.
inline DenseArray zeta_table(const RatioEstimator& est, const Environment& env) {
  const TabularMDP& m = *env.tabular();
  const std::vector<double> z = est.evaluate(all_state_actions(env));
  return DenseArray::matrix(m.n_states, m.n_actions, z);
}

}  // namespace qdsvpg

#endif  // QDSVPG_RATIO_ESTIMATOR_HPP
