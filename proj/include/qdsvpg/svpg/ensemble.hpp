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


#ifndef QDSVPG_SVPG_ENSEMBLE_HPP
#define QDSVPG_SVPG_ENSEMBLE_HPP

#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "qdsvpg/core/serialize.hpp"
#include "qdsvpg/divergence/kernel.hpp"
#include "qdsvpg/oracle/occupancy.hpp"
#include "qdsvpg/oracle/ratio.hpp"
#include "qdsvpg/policies/ppo.hpp"
#include "qdsvpg/ratio/bank.hpp"

namespace qdsvpg {

/// How the kernel-weighted sum over sources j is normalized.
enum class KernelNormalization { Count, KernelSum };

inline std::string to_string(KernelNormalization k) { return k == KernelNormalization::Count ? "count" : "kernel-sum"; }

inline KernelNormalization kernel_normalization_from_string(const std::string& s) {
  if (s == "count") return KernelNormalization::Count;
  if (s == "kernel-sum") return KernelNormalization::KernelSum;
  throw ConfigError("unknown kernel normalization '" + s + "' (expected count or kernel-sum)");
}

struct EnsembleConfig {
  std::size_t n = 4;
  PolicyKind policy_kind = PolicyKind::MlpCategorical;
  std::size_t policy_hidden_layers = 2;
  std::size_t policy_width = 64;
  double init_log_std = 0.0;
  std::size_t value_hidden_layers = 2;
  std::size_t value_width = 64;
  PpoConfig ppo;
  EstimatorConfig estimator;
  KernelSpec kernel;
  std::size_t transitions = 2048;  // per member per iteration
  std::size_t n_initial = 256;
  bool self_quality_only = false;
  KernelNormalization normalization = KernelNormalization::Count;
  AdvantageNorm divergence_advantage_norm = AdvantageNorm::Standardize;

  void validate() const {
    if (n == 0) throw ConfigError("ensemble.n must be at least 1");
    if (transitions == 0) throw ConfigError("ensemble.transitions must be positive");
    if (n_initial == 0) throw ConfigError("ensemble.n_initial must be positive");
    if (ppo.epochs == 0 || ppo.minibatch == 0) throw ConfigError("ppo.epochs and ppo.minibatch must be positive");
    if (!(ppo.lr > 0.0) || !(ppo.value_lr > 0.0)) throw ConfigError("ppo learning rates must be positive");
    if (!(ppo.clip > 0.0)) throw ConfigError("ppo.clip must be positive");
    if (!(ppo.gamma > 0.0 && ppo.gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
    if (!(ppo.gae_lambda >= 0.0 && ppo.gae_lambda <= 1.0)) throw ConfigError("gae_lambda must lie in [0, 1]");
    kernel.validate();
    if (!has_surrogate(kernel.kind))
      throw ConfigError("divergence must be JS or KLS, got " + to_string(kernel.kind));
    estimator.validate();
    if (estimator.kind == EstimatorKind::NCE && n < 2) throw ConfigError("the NCE estimator needs n >= 2");
  }
};

/// One member's trainable state.
struct Member {
  PolicyParams policy;
  AdamState adam;
  ValueFunction value;
};

/// Per-source inputs to one assembled update, all as ascent directions.
struct SvpgTerms {
  std::size_t n = 0;
  std::vector<std::vector<double>> quality;     // [j]: grad_{theta_j} eta(pi_j)
  std::vector<std::vector<double>> divergence;  // [i*n + j]: grad_{theta_j} D(rho_j, rho_i); empty when i == j
  DenseArray kernel;                            // (i, j): k(theta_j, theta_i)
};

struct SvpgOptions {
  double temperature = 0.5;
  bool self_quality_only = false;
  KernelNormalization normalization = KernelNormalization::Count;
};

// Delta theta_i = (1/n) sum_j k(theta_j, theta_i) [grad eta_j - (1/T) grad_{theta_j} D(rho_j, rho_i)].
// The j = i term has kernel 1 and no divergence gradient.
inline std::vector<double> svpg_delta(std::size_t i, const SvpgTerms& t, const SvpgOptions& opt) {
  const std::size_t n = t.n;
  if (i >= n || t.quality.size() != n || t.divergence.size() != n * n || t.kernel.rows() != n || t.kernel.cols() != n)
    throw ShapeError("svpg_delta: inputs do not cover " + std::to_string(n) + " members");
  const std::size_t dim = t.quality[i].size();
  auto require_finite = [&](const std::vector<double>& v, std::size_t j, const char* what) {
    if (v.size() != dim) throw ShapeError(std::string("svpg_delta: ") + what + " size mismatch");
    for (double x : v)
      if (!std::isfinite(x))
        throw NumericError(std::string("svpg_delta: non-finite ") + what + " for pair (" + std::to_string(i) + "," +
                           std::to_string(j) + ")");
  };
  std::vector<double> delta(dim, 0.0);
  double norm = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double k = i == j ? 1.0 : t.kernel(i, j);
    if (!(k >= 0.0 && k <= 1.0))
      throw NumericError("svpg_delta: kernel weight outside [0, 1] for pair (" + std::to_string(i) + "," +
                         std::to_string(j) + ")");
    norm += k;
    if (i == j || !opt.self_quality_only) {
      require_finite(t.quality[j], j, "quality gradient");
      for (std::size_t d = 0; d < dim; ++d) delta[d] += k * t.quality[j][d];
    }
    if (i != j) {
      const std::vector<double>& g = t.divergence[i * n + j];
      require_finite(g, j, "divergence gradient");
      const double c = k / opt.temperature;
      for (std::size_t d = 0; d < dim; ++d) delta[d] -= c * g[d];
    }
  }
  const double scale = opt.normalization == KernelNormalization::Count ? static_cast<double>(n) : norm;
  for (double& x : delta) x /= scale;
  return delta;
}

/// Full-batch PPO ascent direction of member j on its own environment rewards.
inline std::vector<double> quality_gradient(const Member& member_j, const RolloutBatch& batch_j,
                                            std::span<const double> env_rewards, const PpoConfig& cfg) {
  return policy_gradient_estimate(member_j.policy, member_j.value, batch_j, env_rewards, cfg);
}

struct IterationMetrics {
  std::size_t iteration = 0;
  std::vector<double> mc_return;     // gamma^t-weighted mean batch reward, comparable to the exact return
  std::vector<double> exact_return;  // tabular only, after the update
  DenseArray divergence;             // (i, j): estimate of D(rho_j, rho_i) used for the kernel
  DenseArray kernel;                 // (i, j): k(theta_j, theta_i)
  DenseArray exact_divergence;       // tabular only, after the update
  double estimator_error = std::numeric_limits<double>::quiet_NaN();
  double max_delta_norm = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  bool rolled_back = false;
  std::string error;
  Json diagnostics = Json::object();
  // Wall-clock seconds per phase; excluded from deterministic outputs.
  double seconds_rollout = 0.0, seconds_estimator = 0.0, seconds_update = 0.0;
};

namespace detail {

inline Json policy_to_json(const PolicyParams& p) {
  return Json{{"kind", to_string(p.kind)}, {"net", to_json(p.net)}, {"log_std", p.log_std}};
}

inline void policy_from_json(PolicyParams& p, const Json& j) {
  if (policy_kind_from_string(j.at("kind").get<std::string>()) != p.kind) throw ConfigError("checkpoint: policy kind mismatch");
  load_json(p.net, j.at("net"));
  std::vector<double> ls = j.at("log_std").get<std::vector<double>>();
  if (ls.size() != p.log_std.size()) throw ConfigError("checkpoint: log_std size mismatch");
  p.log_std = std::move(ls);
}

inline Json value_to_json(const ValueFunction& v) { return Json{{"net", to_json(v.net)}, {"adam", to_json(v.adam)}}; }

inline void value_from_json(ValueFunction& v, const Json& j) {
  load_json(v.net, j.at("net"));
  load_json(v.adam, j.at("adam"));
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline double weighted_mean(std::span<const double> x, std::span<const double> w) {
  double s = 0.0, t = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    s += w[k] * x[k];
    t += w[k];
  }
  return s / t;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// n members trained jointly. Each iteration: rollouts for every member, an
// estimator update for every ordered pair, divergence values and surrogate
// reward streams, then PPO epochs in which every minibatch step assembles
// Delta theta_i from all members' gradients and applies it with Adam.
// Estimator kind None trains the members independently.
class Ensemble {
 public:
  Ensemble(const EnsembleConfig& cfg, std::shared_ptr<const Environment> env, std::uint64_t seed)
      : cfg_(cfg), env_(std::move(env)), rng_(seed) {
    cfg_.validate();
    if (std::abs(cfg_.ppo.gamma - env_->gamma()) > 1e-12)
      throw ConfigError("ppo gamma " + std::to_string(cfg_.ppo.gamma) + " differs from the environment's " +
                        std::to_string(env_->gamma()));
    for (std::size_t k = 0; k < cfg_.n; ++k) {
      Member m;
      m.policy = make_policy(cfg_.policy_kind, *env_, cfg_.policy_hidden_layers, cfg_.policy_width, rng_, cfg_.init_log_std);
      m.adam = AdamState(m.policy.parameter_count(), cfg_.ppo.lr);
      m.value = make_value_function(*env_, cfg_.value_hidden_layers, cfg_.value_width, cfg_.ppo.value_lr, rng_);
      members_.push_back(std::move(m));
    }
    bank_ = std::make_unique<EstimatorBank>(cfg_.estimator, *env_, cfg_.n, rng_);
    div_values_.resize(cfg_.n * cfg_.n);
    if (bank_->active())
      for (std::size_t i = 0; i < cfg_.n; ++i)
        for (std::size_t j = 0; j < cfg_.n; ++j)
          if (i != j)
            div_values_[i * cfg_.n + j] =
                make_value_function(*env_, cfg_.value_hidden_layers, cfg_.value_width, cfg_.ppo.value_lr, rng_);
  }

  const EnsembleConfig& config() const { return cfg_; }
  const Environment& env() const { return *env_; }
  std::size_t size() const { return members_.size(); }
  std::size_t iteration() const { return iteration_; }
  const Member& member(std::size_t k) const { return members_.at(k); }
  Member& member(std::size_t k) { return members_.at(k); }
  const EstimatorBank& bank() const { return *bank_; }
  const std::vector<RolloutBatch>& batches() const { return batches_; }
  const Rng& rng() const { return rng_; }

  std::vector<PolicyParams> policies() const {
    std::vector<PolicyParams> out;
    for (const Member& m : members_) out.push_back(m.policy);
    return out;
  }

  IterationMetrics train_iteration() {
    const std::size_t n = size();
    IterationMetrics out;
    out.iteration = iteration_ + 1;
    const std::vector<Member> snapshot = members_;
    const std::vector<ValueFunction> div_snapshot = div_values_;

    auto t0 = std::chrono::steady_clock::now();
    std::vector<const PolicyParams*> targets;
    if (needs_annotations())
      for (const Member& m : members_) targets.push_back(&m.policy);
    batches_.clear();
    for (const Member& m : members_)
      batches_.push_back(collect_rollouts(*env_, m.policy, cfg_.transitions, rng_, targets, cfg_.n_initial));
    out.seconds_rollout = detail::seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    const std::vector<PolicyParams> pols = policies();
    try {
      bank_->update(batches_, pols, rng_);
    } catch (const Error& e) {
      throw NumericError("iteration " + std::to_string(out.iteration) + " aborted: " + e.what());
    }
    out.seconds_estimator = detail::seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    out.divergence = DenseArray::matrix(n, n, 0.0);
    out.kernel = DenseArray::matrix(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) out.kernel(i, i) = 1.0;
    std::vector<std::vector<double>> div_rewards(n * n);
    if (bank_->active()) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          const std::vector<double> on_i = bank_->zeta(i, j, batches_[i].sa), on_j = bank_->zeta(i, j, batches_[j].sa);
          const DivergenceEstimate d =
              estimate_divergence(cfg_.kernel.kind, on_i, batches_[i].weights, on_j, batches_[j].weights);
          out.divergence(i, j) = d.value;
          out.kernel(i, j) = kernel_value(cfg_.kernel, d);
          div_rewards[i * n + j] = surrogate_rewards(cfg_.kernel.kind, on_j);
        }
    } else {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (i != j) out.divergence(i, j) = out.kernel(i, j) = std::numeric_limits<double>::quiet_NaN();
    }

    try {
      update_members(out, div_rewards);
      for (const Member& m : members_)
        if (!detail::all_finite(m.policy.flat()) || !detail::all_finite(m.value.net.flat()))
          throw NumericError("non-finite parameters after the update");
    } catch (const NumericError& e) {
      members_ = snapshot;
      div_values_ = div_snapshot;
      out.rolled_back = true;
      out.error = std::string("iteration ") + std::to_string(out.iteration) + ": " + e.what() +
                  " (parameters rolled back)";
    }
    out.seconds_update = detail::seconds_since(t0);

    for (std::size_t j = 0; j < n; ++j) {
      std::vector<double> r(batches_[j].size());
      for (std::size_t k = 0; k < r.size(); ++k) r[k] = batches_[j].transitions[k].reward;
      out.mc_return.push_back(detail::weighted_mean(r, batches_[j].weights));
    }
    fill_exact_metrics(out, pols);
    out.diagnostics = bank_->diagnostics(batches_);
    ++iteration_;
    return out;
  }

  Json to_json() const {
    Json j{{"iteration", iteration_}, {"rng", rng_.serialize()}, {"members", Json::array()},
           {"divergence_values", Json::object()}, {"estimators", bank_->to_json()}};
    for (const Member& m : members_)
      j["members"].push_back(
          Json{{"policy", detail::policy_to_json(m.policy)}, {"adam", qdsvpg::to_json(m.adam)}, {"value", detail::value_to_json(m.value)}});
    for (std::size_t a = 0; a < size(); ++a)
      for (std::size_t b = 0; b < size(); ++b)
        if (bank_->active() && a != b)
          j["divergence_values"][std::to_string(a) + "," + std::to_string(b)] =
              detail::value_to_json(div_values_[a * size() + b]);
    return j;
  }

  void load(const Json& j) {
    const Json& ms = j.at("members");
    if (ms.size() != size()) throw ConfigError("checkpoint: member count mismatch");
    for (std::size_t k = 0; k < size(); ++k) {
      detail::policy_from_json(members_[k].policy, ms[k].at("policy"));
      load_json(members_[k].adam, ms[k].at("adam"));
      detail::value_from_json(members_[k].value, ms[k].at("value"));
    }
    for (std::size_t a = 0; a < size(); ++a)
      for (std::size_t b = 0; b < size(); ++b)
        if (bank_->active() && a != b)
          detail::value_from_json(div_values_[a * size() + b],
                                  j.at("divergence_values").at(std::to_string(a) + "," + std::to_string(b)));
    bank_->load(j.at("estimators"));
    rng_.deserialize(j.at("rng").get<std::string>());
    iteration_ = j.at("iteration").get<std::size_t>();
  }

 private:
  bool needs_annotations() const {
    const EstimatorKind k = cfg_.estimator.kind;
    return bank_->active() && (k == EstimatorKind::DualDICE || k == EstimatorKind::ValueDICE || k == EstimatorKind::GenDICE);
  }

  void update_members(IterationMetrics& out, const std::vector<std::vector<double>>& div_rewards) {
    const std::size_t n = size();
    const bool coupled = bank_->active();
    PpoConfig div_cfg = cfg_.ppo;
    div_cfg.advantage_norm = cfg_.divergence_advantage_norm;

    std::vector<PreparedStream> env_streams, div_streams(n * n);
    std::vector<std::vector<double>> old_lp;
    std::vector<std::vector<const std::vector<double>*>> stream_ptrs(n);
    for (std::size_t j = 0; j < n; ++j) {
      const RolloutBatch& b = batches_[j];
      std::vector<double> r(b.size());
      for (std::size_t k = 0; k < r.size(); ++k) r[k] = b.transitions[k].reward;
      env_streams.push_back(prepare_stream(b, r, members_[j].value, cfg_.ppo, "env, member " + std::to_string(j)));
      old_lp.push_back(log_prob(members_[j].policy, b.features, b.actions()));
    }
    for (std::size_t j = 0; j < n; ++j) {
      stream_ptrs[j].push_back(&env_streams[j].advantages);
      if (!coupled) continue;
      for (std::size_t i = 0; i < n; ++i) {
        if (i == j) continue;
        div_streams[i * n + j] = prepare_stream(batches_[j], div_rewards[i * n + j], div_values_[i * n + j], div_cfg,
                                                "divergence (" + std::to_string(i) + "," + std::to_string(j) + ")");
        stream_ptrs[j].push_back(&div_streams[i * n + j].advantages);
      }
    }

    const SvpgOptions opt{cfg_.kernel.temperature, cfg_.self_quality_only, cfg_.normalization};
    double count = 0.0;
    for (std::size_t e = 0; e < cfg_.ppo.epochs; ++e) {
      std::vector<std::vector<std::vector<std::size_t>>> mbs;
      for (std::size_t j = 0; j < n; ++j) mbs.push_back(minibatches(batches_[j].size(), cfg_.ppo.minibatch, rng_));
      for (std::size_t step = 0; step < mbs[0].size(); ++step) {
        SvpgTerms terms;
        terms.n = n;
        terms.quality.resize(n);
        terms.divergence.resize(n * n);
        terms.kernel = out.kernel;
        for (std::size_t j = 0; j < n; ++j) {
          const std::vector<PolicyLossTerms> g = policy_loss_gradients(
              members_[j].policy, batches_[j], mbs[j][step], old_lp[j], stream_ptrs[j], cfg_.ppo.clip,
              cfg_.ppo.discount_weighting);
          terms.quality[j] = negated(g[0].gradient);
          out.policy_loss += g[0].loss / static_cast<double>(n);
          out.clip_fraction += g[0].clip_fraction / static_cast<double>(n);
          std::size_t s = 1;
          for (std::size_t i = 0; coupled && i < n; ++i)
            if (i != j) terms.divergence[i * n + j] = negated(g[s++].gradient);
        }
        for (std::size_t i = 0; i < n; ++i) {
          const std::vector<double> delta = coupled ? svpg_delta(i, terms, opt) : terms.quality[i];
          double sq = 0.0;
          for (double x : delta) sq += x * x;
          if (!std::isfinite(sq)) throw NumericError("non-finite update for member " + std::to_string(i));
          out.max_delta_norm = std::max(out.max_delta_norm, std::sqrt(sq));
          apply_gradient(members_[i].policy, members_[i].adam, negated(delta));
        }
        for (std::size_t j = 0; j < n; ++j) {
          out.value_loss +=
              value_regression_step(members_[j].value, batches_[j], mbs[j][step], env_streams[j].returns) /
              static_cast<double>(n);
          for (std::size_t i = 0; coupled && i < n; ++i)
            if (i != j)
              value_regression_step(div_values_[i * n + j], batches_[j], mbs[j][step], div_streams[i * n + j].returns);
        }
        count += 1.0;
      }
    }
    if (count > 0.0) {
      out.policy_loss /= count;
      out.value_loss /= count;
      out.clip_fraction /= count;
    }
  }

  static std::vector<double> negated(std::vector<double> v) {
    for (double& x : v) x = -x;
    return v;
  }

  void fill_exact_metrics(IterationMetrics& out, const std::vector<PolicyParams>& before) const {
    const TabularMDP* m = env_->tabular();
    if (m == nullptr) return;
    const std::size_t n = size();
    std::vector<OccupancyMeasure> rho;
    for (const Member& mem : members_) {
      const DenseArray pi = policy_table(mem.policy, *env_);
      rho.push_back(exact_occupancy(*m, pi));
      out.exact_return.push_back(exact_return(*m, pi));
    }
    out.exact_divergence = DenseArray::matrix(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) {
          const DivergenceEstimate d = exact_divergence(cfg_.kernel.kind, rho[j], rho[i]);
          out.exact_divergence(i, j) = d.infinite ? std::numeric_limits<double>::infinity() : d.value;
        }
    if (!bank_->active()) return;
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) {
          const OracleEstimator oracle(i, j, *env_, before[i], before[j]);
          err += weighted_log_ratio_error(zeta_table(bank_->pair(i, j), *env_), RatioTable{oracle.table(), true},
                                          oracle.rho_j());
        }
    out.estimator_error = err / static_cast<double>(n * (n - 1));
  }

  EnsembleConfig cfg_;
  std::shared_ptr<const Environment> env_;
  Rng rng_;
  std::unique_ptr<EstimatorBank> bank_;
  std::vector<Member> members_;
  std::vector<ValueFunction> div_values_;
  std::vector<RolloutBatch> batches_;
  std::size_t iteration_ = 0;
};

}  // namespace qdsvpg

#endif  // QDSVPG_SVPG_ENSEMBLE_HPP
