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

#ifndef QDSVPG_RATIO_DICE_HPP
#define QDSVPG_RATIO_DICE_HPP

#include <cmath>
#include <limits>
#include <vector>

#include "qdsvpg/ratio/estimator.hpp"

namespace qdsvpg {

namespace detail {

inline ActionBranches gather_branches(const ActionBranches& b, std::span<const std::size_t> idx) {
  ActionBranches out;
  for (const DenseArray& sa : b.sa) out.sa.push_back(gather_rows(sa, idx));
  out.prob = gather_rows(b.prob, idx);
  return out;
}

struct DiceMinibatch {
  DenseArray sa;
  ActionBranches next, initial;
  std::vector<double> continuation;
};

// Transitions drawn in proportion to gamma^t, so the minibatch mean is an
// unweighted estimate of an expectation under rho_j. Initial states uniform.
inline DiceMinibatch draw_dice_minibatch(const DiceInputs& in, const WeightedSampler& sampler, std::size_t m, Rng& rng) {
  const std::vector<std::size_t> idx = sampler.draw(m, rng);
  const std::size_t n0 = in.initial->prob.rows();
  std::vector<std::size_t> idx0(std::min(m, n0));
  for (std::size_t& k : idx0) k = rng.index(n0);
  DiceMinibatch mb{gather_rows(*in.sa, idx), gather_branches(*in.next, idx), gather_branches(*in.initial, idx0), {}};
  mb.continuation.reserve(m);
  for (std::size_t k : idx) mb.continuation.push_back(in.continuation[k]);
  return mb;
}

inline Var net_on(const SaNetwork& n, const MlpVars& v, Tape& t, const DenseArray& x) {
  return mlp_forward(n.net.arch, v, t.constant(x));
}

inline std::vector<double> column(const DenseArray& m, std::size_t c) {
  std::vector<double> out(m.rows());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = m(r, c);
  return out;
}

// sum_k pi_i(a_k | s) net(s, a_k) over the branches.
inline Var expected_net(const SaNetwork& n, const MlpVars& v, Tape& t, const ActionBranches& b) {
  Var acc = ad::mask(net_on(n, v, t, b.sa[0]), column(b.prob, 0));
  for (std::size_t k = 1; k < b.count(); ++k) acc = ad::add(acc, ad::mask(net_on(n, v, t, b.sa[k]), column(b.prob, k)));
  return acc;
}

inline std::vector<double> expected_net(const SaNetwork& n, const ActionBranches& b) {
  std::vector<double> acc(b.prob.rows(), 0.0);
  for (std::size_t k = 0; k < b.count(); ++k) {
    const std::vector<double> y = n(b.sa[k]);
    for (std::size_t r = 0; r < acc.size(); ++r) acc[r] += b.prob(r, k) * y[r];
  }
  return acc;
}

}  // namespace detail

/// max_g (g x - g^2/2), the conjugate used by DualDICE; attained at g = x.
inline double quadratic_conjugate(double x) { return 0.5 * x * x; }

/// Chi-squared generator f(u) = (u - 1)^2 and its conjugate f*(g) = g + g^2/4.
inline double chi2_f(double u) { return (u - 1.0) * (u - 1.0); }
inline double chi2_conjugate(double g) { return g + 0.25 * g * g; }

/// GenDICE normalization penalty E[u zeta - u] - u^2/2, maximized at u = E[zeta] - 1.
inline double gendice_penalty(double u, double mean_zeta) { return u * mean_zeta - u - 0.5 * u * u; }

/// E_{rho_i}[x] - log E_{rho_j}[exp x] for a tabular function x; at most KL(rho_i || rho_j).
inline double donsker_varadhan(const OccupancyMeasure& rho_i, const OccupancyMeasure& rho_j, const DenseArray& x) {
  if (x.size() != rho_i.rho.size() || x.size() != rho_j.rho.size()) throw ShapeError("donsker_varadhan: shape mismatch");
  double lin = 0.0, mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < x.size(); ++k) {
    lin += rho_i.rho[k] * x[k];
    if (rho_j.rho[k] > 0.0) mx = std::max(mx, x[k]);
  }
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += rho_j.rho[k] * std::exp(x[k] - mx);
  return lin - (mx + std::log(s / rho_j.total()));
}

// Successor and initial terms average over pi_i's actions exactly when the
// action space is discrete, and use the sampled a' otherwise.

// min_nu max_g E_rho_j[(nu - gamma nu(s',a')) g - g^2/2] - (1-gamma) E[nu(s0,a0)].
// At the saddle g = nu - B nu = zeta; zeta is read from g. The nu network
// predicts (1 - gamma) nu so its outputs stay O(1).
class DualDiceEstimator final : public RatioEstimator {
 public:
  DualDiceEstimator(std::size_t i, std::size_t j, std::size_t sa_dim, const EstimatorConfig& cfg, Rng& rng)
      : RatioEstimator(i, j), cfg_(cfg), nu_(sa_dim, cfg, OutputHead::Identity, rng),
        g_(sa_dim, cfg, OutputHead::Identity, rng, cfg.ascent_lr_ratio) {
    // Start g at the ratio of identical policies.
    g_.net.layers.back().bias[0] = 1.0;
  }

  EstimatorKind kind() const override { return EstimatorKind::DualDICE; }

  std::vector<double> evaluate(const DenseArray& sa) const override {
    std::vector<double> z = g_(sa);
    detail::require_finite(z, "DualDICE pair (" + std::to_string(i()) + "," + std::to_string(j()) + ")");
    for (double& v : z) v = clamp_zeta(v);
    return z;
  }

  void update(const RolloutBatch& batch_j, std::size_t steps, Rng& rng) override {
    const DiceInputs in = dice_inputs(batch_j, i());
    const WeightedSampler sampler(in.weights);
    for (std::size_t s = 0; s < steps; ++s) {
      const detail::DiceMinibatch mb = detail::draw_dice_minibatch(in, sampler, cfg_.minibatch, rng);
      Tape tape;
      const MlpVars nv = register_mlp(tape, nu_.net), gv = register_mlp(tape, g_.net);
      const double c = 1.0 / (1.0 - in.gamma);
      Var nu_sa = ad::scale(detail::net_on(nu_, nv, tape, mb.sa), c);
      Var nu_next = ad::scale(ad::mask(detail::expected_net(nu_, nv, tape, mb.next), mb.continuation), c);
      Var nu_0 = ad::scale(detail::expected_net(nu_, nv, tape, mb.initial), c);
      Var g = detail::net_on(g_, gv, tape, mb.sa);
      Var residual = ad::sub(nu_sa, ad::scale(nu_next, in.gamma));
      Var inner = ad::sub(ad::mul(residual, g), ad::scale(ad::square(g), 0.5));
      Var J = ad::sub(ad::mean(inner), ad::scale(ad::mean(nu_0), 1.0 - in.gamma));
      tape.run_backward(J);
      nu_.step(nv.flat_gradient(tape), false);
      g_.step(gv.flat_gradient(tape), true);
    }
  }

  /// nu - gamma nu(s',a') on batch_j, the alternative zeta read-out.
  std::vector<double> residual_zeta(const RolloutBatch& batch_j) const {
    const DiceInputs in = dice_inputs(batch_j, i());
    const double c = 1.0 / (1.0 - in.gamma);
    std::vector<double> r = nu_(*in.sa);
    const std::vector<double> nn = detail::expected_net(nu_, *in.next);
    for (std::size_t k = 0; k < r.size(); ++k) r[k] = c * (r[k] - in.gamma * in.continuation[k] * nn[k]);
    return r;
  }

  Json diagnostics(const RolloutBatch& batch_j) const override {
    const std::vector<double> g = g_(batch_j.sa), r = residual_zeta(batch_j);
    double gap = 0.0, w = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      gap += batch_j.weights[k] * std::abs(g[k] - r[k]);
      w += batch_j.weights[k];
    }
    return Json{{"g_vs_residual_gap", gap / w}};
  }

  Json to_json() const override { return Json{{"nu", nu_.to_json()}, {"g", g_.to_json()}}; }
  void load(const Json& j) override {
    nu_.load(j.at("nu"));
    g_.load(j.at("g"));
  }

 private:
  EstimatorConfig cfg_;
  SaNetwork nu_, g_;
};

// min_nu log E_rho_j[exp(nu - gamma nu(s',a'))] - (1-gamma) E[nu(s0,a0)].
// The optimum residual x = nu - B nu equals log zeta up to a constant. An
// auxiliary network regresses x onto (s, a) so zeta can be read anywhere, and
// the constant is fixed by E_rho_j[zeta] = 1 on the latest batch. As in
// DualDICE the nu network predicts (1 - gamma) nu.
class ValueDiceEstimator final : public RatioEstimator {
 public:
  ValueDiceEstimator(std::size_t i, std::size_t j, std::size_t sa_dim, const EstimatorConfig& cfg, Rng& rng)
      : RatioEstimator(i, j), cfg_(cfg), nu_(sa_dim, cfg, OutputHead::Identity, rng),
        x_(sa_dim, cfg, OutputHead::Identity, rng) {}

  EstimatorKind kind() const override { return EstimatorKind::ValueDICE; }

  std::vector<double> evaluate(const DenseArray& sa) const override {
    std::vector<double> z = x_(sa);
    detail::require_finite(z, "ValueDICE pair (" + std::to_string(i()) + "," + std::to_string(j()) + ")");
    for (double& v : z) v = std::min(std::exp(std::min(v + shift_, 700.0)), kZetaMax);
    return z;
  }

  void update(const RolloutBatch& batch_j, std::size_t steps, Rng& rng) override {
    const DiceInputs in = dice_inputs(batch_j, i());
    const WeightedSampler sampler(in.weights);
    const std::vector<double> uniform(cfg_.minibatch, 1.0);
    for (std::size_t s = 0; s < steps; ++s) {
      const detail::DiceMinibatch mb = detail::draw_dice_minibatch(in, sampler, cfg_.minibatch, rng);
      Tape tape;
      const MlpVars nv = register_mlp(tape, nu_.net);
      const double c = 1.0 / (1.0 - in.gamma);
      Var nu_sa = ad::scale(detail::net_on(nu_, nv, tape, mb.sa), c);
      Var nu_next = ad::scale(ad::mask(detail::expected_net(nu_, nv, tape, mb.next), mb.continuation), c);
      Var nu_0 = ad::scale(detail::expected_net(nu_, nv, tape, mb.initial), c);
      Var residual = ad::sub(nu_sa, ad::scale(nu_next, in.gamma));
      Var J = ad::sub(ad::weighted_log_mean_exp(residual, uniform), ad::scale(ad::mean(nu_0), 1.0 - in.gamma));
      tape.run_backward(J);
      const DenseArray target = tape.value(residual);
      nu_.step(nv.flat_gradient(tape), false);

      Tape reg;
      const MlpVars xv = register_mlp(reg, x_.net);
      Var err = ad::sub(detail::net_on(x_, xv, reg, mb.sa), reg.constant(target));
      reg.run_backward(ad::mean(ad::square(err)));
      x_.step(xv.flat_gradient(reg), false);
    }
    normalize(batch_j);
  }

  /// Sets the shift so the gamma^t-weighted mean of zeta over batch_j is 1.
  void normalize(const RolloutBatch& batch_j) {
    const std::vector<double> x = x_(batch_j.sa);
    detail::require_finite(x, "ValueDICE normalization");
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : x) mx = std::max(mx, v);
    double s = 0.0, w = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      s += batch_j.weights[k] * std::exp(x[k] - mx);
      w += batch_j.weights[k];
    }
    shift_ = -(mx + std::log(s / w));
  }

  double shift() const { return shift_; }

  Json to_json() const override { return Json{{"nu", nu_.to_json()}, {"x", x_.to_json()}, {"shift", shift_}}; }
  void load(const Json& j) override {
    nu_.load(j.at("nu"));
    x_.load(j.at("x"));
    shift_ = j.at("shift").get<double>();
  }

 private:
  EstimatorConfig cfg_;
  SaNetwork nu_, x_;
  double shift_ = 0.0;
};

// min_zeta max_{g,u} (1-gamma) E[g(s0,a0)] + gamma E_rho_j[zeta(s,a) g(s',a')]
//   - E_rho_j[zeta f*(g)] + lambda (E_rho_j[u zeta - u] - u^2/2), chi-squared f*.
class GenDiceEstimator final : public RatioEstimator {
 public:
  GenDiceEstimator(std::size_t i, std::size_t j, std::size_t sa_dim, const EstimatorConfig& cfg, Rng& rng)
      : RatioEstimator(i, j), cfg_(cfg), zeta_(sa_dim, cfg, OutputHead::Exponential, rng),
        g_(sa_dim, cfg, OutputHead::Identity, rng, cfg.ascent_lr_ratio), u_adam_(1, cfg.lr * cfg.ascent_lr_ratio) {
    if (!(cfg.gendice_lambda >= 0.0)) throw ConfigError("GenDICE: lambda must be non-negative");
  }

  EstimatorKind kind() const override { return EstimatorKind::GenDICE; }
  double lambda() const { return cfg_.gendice_lambda; }
  double u() const { return u_; }

  std::vector<double> evaluate(const DenseArray& sa) const override {
    std::vector<double> z = zeta_(sa);
    detail::require_finite(z, "GenDICE pair (" + std::to_string(i()) + "," + std::to_string(j()) + ")");
    for (double& v : z) v = std::min(v, kZetaMax);
    return z;
  }

  void update(const RolloutBatch& batch_j, std::size_t steps, Rng& rng) override {
    const DiceInputs in = dice_inputs(batch_j, i());
    const WeightedSampler sampler(in.weights);
    const double lambda = cfg_.gendice_lambda;
    for (std::size_t s = 0; s < steps; ++s) {
      const detail::DiceMinibatch mb = detail::draw_dice_minibatch(in, sampler, cfg_.minibatch, rng);
      Tape tape;
      const MlpVars zv = register_mlp(tape, zeta_.net), gv = register_mlp(tape, g_.net);
      Var u = tape.parameter(DenseArray::scalar(u_));
      Var z = detail::net_on(zeta_, zv, tape, mb.sa);
      Var g_sa = detail::net_on(g_, gv, tape, mb.sa);
      Var g_next = ad::mask(detail::expected_net(g_, gv, tape, mb.next), mb.continuation);
      Var g_0 = detail::expected_net(g_, gv, tape, mb.initial);
      Var conj = ad::add(g_sa, ad::scale(ad::square(g_sa), 0.25));
      Var J = ad::add(ad::scale(ad::mean(g_0), 1.0 - in.gamma),
                      ad::sub(ad::scale(ad::mean(ad::mul(z, g_next)), in.gamma), ad::mean(ad::mul(z, conj))));
      if (lambda > 0.0) {
        Var penalty = ad::sub(ad::sub(ad::mul(u, ad::mean(z)), u), ad::scale(ad::square(u), 0.5));
        J = ad::add(J, ad::scale(penalty, lambda));
      }
      tape.run_backward(J);
      zeta_.step(zv.flat_gradient(tape), false);
      g_.step(gv.flat_gradient(tape), true);
      std::vector<double> up{u_};
      const std::vector<double> gu{-tape.grad_of(u)[0]};
      adam_step(u_adam_, up, gu);
      u_ = up[0];
    }
  }

  Json diagnostics(const RolloutBatch& batch_j) const override {
    const std::vector<double> z = zeta_(batch_j.sa);
    double m = 0.0, w = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      m += batch_j.weights[k] * z[k];
      w += batch_j.weights[k];
    }
    return Json{{"mean_zeta", m / w}, {"u", u_}};
  }

  Json to_json() const override {
    return Json{{"zeta", zeta_.to_json()}, {"g", g_.to_json()}, {"u", u_}, {"u_adam", qdsvpg::to_json(u_adam_)}};
  }
  void load(const Json& j) override {
    zeta_.load(j.at("zeta"));
    g_.load(j.at("g"));
    u_ = j.at("u").get<double>();
    load_json(u_adam_, j.at("u_adam"));
  }

 private:
  EstimatorConfig cfg_;
  SaNetwork zeta_, g_;
  double u_ = 0.0;
  AdamState u_adam_;
};

}  // namespace qdsvpg

#endif  // QDSVPG_RATIO_DICE_HPP
