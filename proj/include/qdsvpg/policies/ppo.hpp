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

#ifndef QDSVPG_POLICIES_PPO_HPP
#define QDSVPG_POLICIES_PPO_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qdsvpg/core/adam.hpp"
#include "qdsvpg/core/dense_array.hpp"
#include "qdsvpg/core/errors.hpp"
#include "qdsvpg/core/mlp.hpp"
#include "qdsvpg/core/random.hpp"
#include "qdsvpg/core/tape.hpp"
#include "qdsvpg/policies/policy.hpp"
#include "qdsvpg/policies/rollout.hpp"

namespace qdsvpg {

enum class AdvantageNorm { Standardize, Center, None };

inline std::string to_string(AdvantageNorm n) {
  switch (n) {
    case AdvantageNorm::Standardize: return "standardize";
    case AdvantageNorm::Center: return "center";
    case AdvantageNorm::None: return "none";
  }
  return "?";
}

inline AdvantageNorm advantage_norm_from_string(const std::string& s) {
  if (s == "standardize") return AdvantageNorm::Standardize;
  if (s == "center") return AdvantageNorm::Center;
  if (s == "none") return AdvantageNorm::None;
  throw ConfigError("unknown advantage normalization '" + s + "'");
}

struct PpoConfig {
  double clip = 0.2;
  std::size_t epochs = 4;
  std::size_t minibatch = 64;
  double lr = 1e-4;
  double value_lr = 1e-3;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  AdvantageNorm advantage_norm = AdvantageNorm::Standardize;
  bool discount_weighting = true;
};

// Baseline network. The head predicts (1 - gamma) V(s) so targets stay O(reward)
// whatever the discount; predict() undoes the scaling.
struct ValueFunction {
  MlpParams net;
  AdamState adam;
  double gamma = 0.99;

  double scale() const { return 1.0 / (1.0 - gamma); }
};

inline ValueFunction make_value_function(const Environment& env, std::size_t hidden_layers, std::size_t width, double lr,
                                         Rng& rng) {
  ValueFunction vf;
  vf.gamma = env.gamma();
  // One-hot tabular features make a bias-free linear layer an exact table.
  const bool table = env.tabular() != nullptr && hidden_layers == 0;
  vf.net = make_mlp(MlpArchitecture{env.feature_dim(), hidden_layers, width, 1, OutputHead::Identity, !table}, rng);
  vf.adam = AdamState(vf.net.arch.parameter_count(), lr);
  return vf;
}

inline std::vector<double> predict(const ValueFunction& vf, const DenseArray& features) {
  const DenseArray out = mlp_forward(vf.net, features);
  std::vector<double> v(out.values().begin(), out.values().end());
  for (double& x : v) x *= vf.scale();
  if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }))
    throw NumericError("value function produced a non-finite output");
  return v;
}

struct GaeResult {
  std::vector<double> advantages;  // raw, before normalization
  std::vector<double> returns;     // lambda-returns, the value regression targets
};

// delta_t = r_t + gamma V(s_{t+1}) [not terminal] - V(s_t);
// A_t = delta_t + gamma lambda A_{t+1}, restarted at every episode end.
// Truncated episodes bootstrap from V(s_{t+1}).
inline GaeResult gae_advantages(const RolloutBatch& batch, std::span<const double> rewards, std::span<const double> values,
                                std::span<const double> next_values, double gamma, double lambda) {
  const std::size_t n = batch.size();
  if (rewards.size() != n || values.size() != n || next_values.size() != n)
    throw ShapeError("gae_advantages: rewards/values not aligned with the batch");
  GaeResult out{std::vector<double>(n), std::vector<double>(n)};
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const Transition& tr = batch.transitions[k];
    const double bootstrap = tr.done ? 0.0 : next_values[k];
    const double delta = rewards[k] + gamma * bootstrap - values[k];
    if (batch.episode_end(k)) running = 0.0;
    running = delta + (tr.done ? 0.0 : gamma * lambda * running);
    out.advantages[k] = running;
    out.returns[k] = running + values[k];
  }
  return out;
}

inline GaeResult gae_advantages(const RolloutBatch& batch, std::span<const double> rewards, const ValueFunction& vf,
                                double gamma, double lambda) {
  return gae_advantages(batch, rewards, predict(vf, batch.features), predict(vf, batch.next_features), gamma, lambda);
}

// A spread below this is treated as a constant signal: the mean is removed
// but nothing is rescaled, so round-off is never blown up to unit variance.
inline constexpr double kAdvantageStdFloor = 1e-8;

inline std::vector<double> normalize_advantages(std::vector<double> a, AdvantageNorm mode) {
  if (mode == AdvantageNorm::None || a.empty()) return a;
  const double n = static_cast<double>(a.size());
  double mean = 0.0;
  for (double x : a) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : a) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  for (double& x : a) x -= mean;
  if (mode == AdvantageNorm::Standardize && sd > kAdvantageStdFloor)
    for (double& x : a) x /= sd;
  return a;
}

inline void require_finite_rewards(std::span<const double> rewards, const std::string& stream) {
  for (std::size_t k = 0; k < rewards.size(); ++k)
    if (!std::isfinite(rewards[k]))
      throw NumericError("non-finite reward in stream '" + stream + "' at transition " + std::to_string(k));
}

/// Shuffled minibatch index lists covering every transition once.
inline std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t size, Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t k = n; k > 1; --k) std::swap(perm[k - 1], perm[rng.index(k)]);
  std::vector<std::vector<std::size_t>> out;
  const std::size_t m = std::max<std::size_t>(1, size);
  for (std::size_t start = 0; start < n; start += m)
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                     perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + m)));
  return out;
}

struct PolicyLossTerms {
  std::vector<double> gradient;  // d loss / d theta, to be descended
  double loss = 0.0;
  double clip_fraction = 0.0;
};

// Clipped-surrogate loss -sum_k w_k min(r_k A_k, clip(r_k) A_k) / sum_k w_k on
// the rows `idx`, for several advantage streams sharing one forward pass.
inline std::vector<PolicyLossTerms> policy_loss_gradients(const PolicyParams& policy, const RolloutBatch& batch,
                                                          std::span<const std::size_t> idx,
                                                          std::span<const double> old_log_prob,
                                                          std::span<const std::vector<double>* const> advantages,
                                                          double clip, bool discount_weighting) {
  const std::size_t m = idx.size();
  Tape tape;
  PolicyVars vars = register_policy(tape, policy);
  std::vector<Action> acts;
  acts.reserve(m);
  std::vector<double> old(m), w(m);
  for (std::size_t k = 0; k < m; ++k) {
    acts.push_back(batch.transitions[idx[k]].action);
    old[k] = old_log_prob[idx[k]];
    w[k] = discount_weighting ? batch.weights[idx[k]] : 1.0;
  }
  Var lp = log_prob(policy, vars, tape.constant(gather_rows(batch.features, idx)), acts);
  Var ratio = ad::exp(ad::sub(lp, tape.constant(DenseArray::matrix(m, 1, old))));
  const bool clipped = std::isfinite(clip);
  Var ratio_clipped = clipped ? ad::clamp(ratio, 1.0 - clip, 1.0 + clip) : ratio;
  double n_clipped = 0.0;
  if (clipped)
    for (double r : tape.value(ratio).values()) n_clipped += (r < 1.0 - clip || r > 1.0 + clip) ? 1.0 : 0.0;
  std::vector<PolicyLossTerms> out;
  out.reserve(advantages.size());
  for (const std::vector<double>* adv : advantages) {
    std::vector<double> a(m);
    for (std::size_t k = 0; k < m; ++k) a[k] = (*adv)[idx[k]];
    Var av = tape.constant(DenseArray::matrix(m, 1, std::move(a)));
    Var surrogate = ad::minimum(ad::mul(ratio, av), ad::mul(ratio_clipped, av));
    Var loss = ad::neg(ad::weighted_mean(surrogate, w));
    tape.run_backward(loss);
    out.push_back(PolicyLossTerms{vars.flat_gradient(tape), tape.value(loss).scalar_value(),
                                  n_clipped / static_cast<double>(m)});
  }
  return out;
}

/// One Adam step of mean-squared regression of (1 - gamma) V onto scaled targets.
inline double value_regression_step(ValueFunction& vf, const RolloutBatch& batch, std::span<const std::size_t> idx,
                                    std::span<const double> returns) {
  const std::size_t m = idx.size();
  std::vector<double> target(m);
  for (std::size_t k = 0; k < m; ++k) target[k] = returns[idx[k]] / vf.scale();
  Tape tape;
  MlpVars vars = register_mlp(tape, vf.net);
  Var pred = mlp_forward(vf.net.arch, vars, tape.constant(gather_rows(batch.features, idx)));
  Var loss = ad::mean(ad::square(ad::sub(pred, tape.constant(DenseArray::matrix(m, 1, std::move(target))))));
  tape.run_backward(loss);
  const std::vector<double> g = vars.flat_gradient(tape);
  std::vector<double> flat = vf.net.flat();
  adam_step(vf.adam, flat, g);
  vf.net.set_flat(flat);
  return tape.value(loss).scalar_value();
}

/// Regression of the value function onto fixed targets for several epochs.
inline double fit_value_function(ValueFunction& vf, const RolloutBatch& batch, std::span<const double> returns,
                                 std::size_t epochs, std::size_t minibatch, Rng& rng) {
  double last = 0.0;
  for (std::size_t e = 0; e < epochs; ++e)
    for (const auto& mb : minibatches(batch.size(), minibatch, rng)) last = value_regression_step(vf, batch, mb, returns);
  return last;
}

inline void apply_gradient(PolicyParams& policy, AdamState& adam, std::span<const double> grad) {
  std::vector<double> flat = policy.flat();
  adam_step(adam, flat, grad);
  policy.set_flat(flat);
}

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double mean_reward = 0.0;
};

/// Advantages and value targets for one reward stream.
struct PreparedStream {
  std::vector<double> advantages;  // normalized
  std::vector<double> returns;
};

inline PreparedStream prepare_stream(const RolloutBatch& batch, std::span<const double> rewards, const ValueFunction& vf,
                                     const PpoConfig& cfg, const std::string& stream) {
  require_finite_rewards(rewards, stream);
  if (std::abs(cfg.gamma - vf.gamma) > 1e-12)
    throw ContractError("stream '" + stream + "': PPO gamma differs from the value function's gamma");
  GaeResult g = gae_advantages(batch, rewards, vf, cfg.gamma, cfg.gae_lambda);
  return PreparedStream{normalize_advantages(std::move(g.advantages), cfg.advantage_norm), std::move(g.returns)};
}

// PPO-clip on one reward stream: advantages from GAE over `rewards`, then
// `epochs` passes of shuffled minibatches, each taking one policy Adam step
// and one value-regression Adam step.
inline PpoStats ppo_update(PolicyParams& policy, AdamState& policy_adam, ValueFunction& vf, const RolloutBatch& batch,
                           std::span<const double> rewards, const PpoConfig& cfg, Rng& rng,
                           const std::string& stream = "env") {
  if (rewards.size() != batch.size()) throw ShapeError("ppo_update: rewards not aligned with the batch");
  const PreparedStream prep = prepare_stream(batch, rewards, vf, cfg, stream);
  const std::vector<double> old_lp = log_prob(policy, batch.features, batch.actions());
  PpoStats stats;
  for (double r : rewards) stats.mean_reward += r / static_cast<double>(rewards.size());
  const std::vector<double>* streams[] = {&prep.advantages};
  double count = 0.0;
  for (std::size_t e = 0; e < cfg.epochs; ++e)
    for (const auto& mb : minibatches(batch.size(), cfg.minibatch, rng)) {
      const PolicyLossTerms terms =
          policy_loss_gradients(policy, batch, mb, old_lp, streams, cfg.clip, cfg.discount_weighting).front();
      apply_gradient(policy, policy_adam, terms.gradient);
      stats.value_loss += value_regression_step(vf, batch, mb, prep.returns);
      stats.policy_loss += terms.loss;
      stats.clip_fraction += terms.clip_fraction;
      count += 1.0;
    }
  if (count > 0.0) {
    stats.policy_loss /= count;
    stats.value_loss /= count;
    stats.clip_fraction /= count;
  }
  return stats;
}

/// Ascent direction of the stream's objective from the full batch at the current parameters.
inline std::vector<double> policy_gradient_estimate(const PolicyParams& policy, const ValueFunction& vf,
                                                    const RolloutBatch& batch, std::span<const double> rewards,
                                                    const PpoConfig& cfg, const std::string& stream = "env") {
  const PreparedStream prep = prepare_stream(batch, rewards, vf, cfg, stream);
  const std::vector<double> old_lp = log_prob(policy, batch.features, batch.actions());
  std::vector<std::size_t> all(batch.size());
  std::iota(all.begin(), all.end(), 0);
  const std::vector<double>* streams[] = {&prep.advantages};
  std::vector<double> g =
      policy_loss_gradients(policy, batch, all, old_lp, streams, cfg.clip, cfg.discount_weighting).front().gradient;
  for (double& x : g) x = -x;
  return g;
}

}  // namespace qdsvpg

#endif  // QDSVPG_POLICIES_PPO_HPP
