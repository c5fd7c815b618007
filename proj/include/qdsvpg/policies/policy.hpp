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

#ifndef QDSVPG_POLICIES_POLICY_HPP
#define QDSVPG_POLICIES_POLICY_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "qdsvpg/core/dense_array.hpp"
#include "qdsvpg/core/errors.hpp"
#include "qdsvpg/core/mlp.hpp"
#include "qdsvpg/core/random.hpp"
#include "qdsvpg/core/tape.hpp"
#include "qdsvpg/envs/environment.hpp"
#include "qdsvpg/envs/tabular_mdp.hpp"

namespace qdsvpg {

enum class PolicyKind { TabularSoftmax, MlpCategorical, MlpGaussian };

inline std::string to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::TabularSoftmax: return "tabular-softmax";
    case PolicyKind::MlpCategorical: return "mlp-categorical";
    case PolicyKind::MlpGaussian: return "mlp-gaussian";
  }
  return "?";
}

inline PolicyKind policy_kind_from_string(const std::string& s) {
  if (s == "tabular-softmax") return PolicyKind::TabularSoftmax;
  if (s == "mlp-categorical") return PolicyKind::MlpCategorical;
  if (s == "mlp-gaussian") return PolicyKind::MlpGaussian;
  throw ConfigError("unknown policy kind '" + s + "'");
}

inline const double kLogStdFloor = std::log(0.05);

// A tabular softmax policy is a bias-free linear layer on one-hot state
// features, so all three kinds share the MLP machinery.
struct PolicyParams {
  PolicyKind kind = PolicyKind::TabularSoftmax;
  MlpParams net;
  std::vector<double> log_std;  // Gaussian only, one per action dimension

  bool discrete() const { return kind != PolicyKind::MlpGaussian; }
  std::size_t input_dim() const { return net.arch.input_dim; }
  std::size_t output_dim() const { return net.arch.output_dim; }
  std::size_t parameter_count() const { return net.arch.parameter_count() + log_std.size(); }

  std::vector<double> flat() const {
    std::vector<double> out = net.flat();
    out.insert(out.end(), log_std.begin(), log_std.end());
    return out;
  }

  void set_flat(std::span<const double> values) {
    if (values.size() != parameter_count())
      throw ShapeError("PolicyParams::set_flat: expected " + std::to_string(parameter_count()) + " values, got " +
                       std::to_string(values.size()));
    const std::size_t n = net.arch.parameter_count();
    net.set_flat(values.subspan(0, n));
    std::copy(values.begin() + static_cast<std::ptrdiff_t>(n), values.end(), log_std.begin());
  }
};

/// Zero-logit tabular policy: uniform in every state.
inline PolicyParams make_tabular_policy(std::size_t n_states, std::size_t n_actions) {
  PolicyParams p;
  p.kind = PolicyKind::TabularSoftmax;
  p.net.arch = MlpArchitecture{n_states, 0, 0, n_actions, OutputHead::Identity, false};
  p.net.layers = {MlpLayer{DenseArray::matrix(n_states, n_actions, 0.0), DenseArray()}};
  return p;
}

inline PolicyParams make_policy(PolicyKind kind, const Environment& env, std::size_t hidden_layers, std::size_t width,
                                Rng& rng, double init_log_std = 0.0) {
  const ActionSpace space = env.action_space();
  if (kind == PolicyKind::MlpGaussian && space.discrete)
    throw ConfigError("policy: mlp-gaussian needs a continuous action space");
  if (kind != PolicyKind::MlpGaussian && !space.discrete)
    throw ConfigError("policy: " + to_string(kind) + " needs a discrete action space");
  if (kind == PolicyKind::TabularSoftmax) {
    if (env.tabular() == nullptr) throw ConfigError("policy: tabular-softmax needs a tabular environment");
    return make_tabular_policy(env.feature_dim(), space.count);
  }
  PolicyParams p;
  p.kind = kind;
  const std::size_t out = kind == PolicyKind::MlpGaussian ? space.dim : space.count;
  p.net = make_mlp(MlpArchitecture{env.feature_dim(), hidden_layers, width, out, OutputHead::Identity, true}, rng);
  if (kind == PolicyKind::MlpGaussian) p.log_std.assign(space.dim, std::max(init_log_std, kLogStdFloor));
  return p;
}

/// Probabilities (discrete) or mean and standard deviation (continuous) at one state.
struct ActionDistribution {
  bool discrete = true;
  std::vector<double> probs;
  std::vector<double> mean;
  std::vector<double> stddev;
};

inline double effective_log_std(double raw) { return std::max(raw, kLogStdFloor); }

/// Softmax probabilities [n, A] (discrete) or Gaussian means [n, dim] (continuous).
inline DenseArray policy_output(const PolicyParams& policy, const DenseArray& features) {
  DenseArray z = mlp_forward(policy.net, features);
  if (!policy.discrete()) return z;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double mx = z(r, 0);
    for (std::size_t c = 1; c < z.cols(); ++c) mx = std::max(mx, z(r, c));
    double total = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) total += z(r, c) = std::exp(z(r, c) - mx);
    for (std::size_t c = 0; c < z.cols(); ++c) z(r, c) /= total;
  }
  return z;
}

inline ActionDistribution action_distribution(const PolicyParams& policy, std::span<const double> features) {
  const DenseArray out = policy_output(
      policy, DenseArray::matrix(1, features.size(), std::vector<double>(features.begin(), features.end())));
  ActionDistribution d;
  d.discrete = policy.discrete();
  if (d.discrete) {
    d.probs.assign(out.values().begin(), out.values().end());
  } else {
    d.mean.assign(out.values().begin(), out.values().end());
    for (double ls : policy.log_std) d.stddev.push_back(std::exp(effective_log_std(ls)));
  }
  return d;
}

inline Action sample_action(const ActionDistribution& d, Rng& rng) {
  Action a;
  if (d.discrete) {
    a.index = rng.categorical(d.probs);
  } else {
    a.value.resize(d.mean.size());
    for (std::size_t k = 0; k < d.mean.size(); ++k) a.value[k] = d.mean[k] + d.stddev[k] * rng.normal();
  }
  return a;
}

inline double gaussian_log_density(std::span<const double> x, std::span<const double> mean, std::span<const double> log_std) {
  double lp = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double ls = effective_log_std(log_std[k]);
    const double z = (x[k] - mean[k]) * std::exp(-ls);
    lp += -0.5 * z * z - ls - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return lp;
}

/// log pi(a_k | s_k) for a batch of feature rows.
inline std::vector<double> log_prob(const PolicyParams& policy, const DenseArray& features, std::span<const Action> actions) {
  if (features.rows() != actions.size()) throw ShapeError("log_prob: feature rows and actions differ");
  std::vector<double> out(actions.size());
  if (policy.discrete()) {
    const DenseArray z = mlp_forward(policy.net, features);
    for (std::size_t r = 0; r < z.rows(); ++r) {
      double mx = z(r, 0);
      for (std::size_t c = 1; c < z.cols(); ++c) mx = std::max(mx, z(r, c));
      double total = 0.0;
      for (std::size_t c = 0; c < z.cols(); ++c) total += std::exp(z(r, c) - mx);
      out[r] = z(r, actions[r].index) - mx - std::log(total);
    }
  } else {
    const DenseArray mean = mlp_forward(policy.net, features);
    const std::size_t dim = mean.cols();
    for (std::size_t r = 0; r < mean.rows(); ++r)
      out[r] = gaussian_log_density(actions[r].value, mean.values().subspan(r * dim, dim), policy.log_std);
  }
  return out;
}

/// Policy parameters registered on a tape.
struct PolicyVars {
  MlpVars net;
  Var log_std{};
  bool has_log_std = false;

  std::vector<double> flat_gradient(const Tape& tape) const {
    std::vector<double> g = net.flat_gradient(tape);
    if (has_log_std) {
      const DenseArray gl = tape.grad_of(log_std);
      g.insert(g.end(), gl.values().begin(), gl.values().end());
    }
    return g;
  }
};

inline PolicyVars register_policy(Tape& tape, const PolicyParams& policy) {
  PolicyVars v;
  v.net = register_mlp(tape, policy.net);
  if (!policy.discrete()) {
    v.log_std = tape.parameter(DenseArray::matrix(1, policy.log_std.size(), policy.log_std));
    v.has_log_std = true;
  }
  return v;
}

/// log pi(a | s) on the tape, shape [n, 1].
inline Var log_prob(const PolicyParams& policy, const PolicyVars& vars, Var features, std::span<const Action> actions) {
  Tape& t = *features.tape;
  const std::size_t n = t.value(features).rows();
  if (n != actions.size()) throw ShapeError("log_prob: feature rows and actions differ");
  Var z = mlp_logits(policy.net.arch, vars.net, features);
  if (policy.discrete()) {
    std::vector<std::size_t> idx(n);
    for (std::size_t k = 0; k < n; ++k) idx[k] = actions[k].index;
    return ad::pick(ad::log_softmax_rows(z), std::move(idx));
  }
  const std::size_t dim = policy.log_std.size();
  DenseArray a = DenseArray::matrix(n, dim);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t d = 0; d < dim; ++d) a(k, d) = actions[k].value[d];
  Var ls = ad::broadcast_rows(ad::clamp(vars.log_std, kLogStdFloor, 1e300), n);
  Var scaled = ad::mul(ad::sub(t.constant(std::move(a)), z), ad::exp(ad::neg(ls)));
  Var per_dim = ad::sub(ad::scale(ad::square(scaled), -0.5), ls);
  return ad::shift(ad::row_sum(per_dim), -0.5 * static_cast<double>(dim) * std::log(2.0 * std::numbers::pi));
}

/// pi[s][a] for every state of a tabular environment.
inline DenseArray policy_table(const PolicyParams& policy, const Environment& env) {
  const TabularMDP* m = env.tabular();
  if (m == nullptr) throw ContractError("policy_table: environment is not tabular");
  if (!policy.discrete()) throw ContractError("policy_table: continuous policy");
  DenseArray features = DenseArray::matrix(m->n_states, env.feature_dim());
  for (std::size_t s = 0; s < m->n_states; ++s)
    env.features(State{s, {}}, features.values().subspan(s * env.feature_dim(), env.feature_dim()));
  return policy_output(policy, features);
}

}  // namespace qdsvpg

#endif  // QDSVPG_POLICIES_POLICY_HPP
