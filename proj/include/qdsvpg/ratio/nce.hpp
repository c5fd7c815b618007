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

#ifndef QDSVPG_RATIO_NCE_HPP
#define QDSVPG_RATIO_NCE_HPP

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "qdsvpg/ratio/estimator.hpp"

namespace qdsvpg {

// One unnormalized density model per member, log rho~_k(s, a) = clamp(net_k).
// Member i is trained to tell its own samples from the pooled samples of the
// other members, with noise density p_N = mean_{k != i} rho~_k (held fixed
// for the step). zeta_ij = rho~_i / rho~_j.
class NceModels {
 public:
  NceModels(std::size_t n, std::size_t sa_dim, const EstimatorConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (n < 2) throw ContractError("NCE: needs at least two members (the noise mixture is empty for n = 1)");
    for (std::size_t k = 0; k < n; ++k) models_.emplace_back(sa_dim, cfg, OutputHead::Identity, rng);
  }

  std::size_t size() const { return models_.size(); }

  /// log rho~_k on each row.
  std::vector<double> log_density(std::size_t k, const DenseArray& sa) const {
    std::vector<double> z = models_.at(k)(sa);
    for (double& v : z) v = std::clamp(v, -kExpHeadClamp, kExpHeadClamp);
    return z;
  }

  std::vector<double> density(std::size_t k, const DenseArray& sa) const {
    std::vector<double> z = log_density(k, sa);
    for (double& v : z) v = std::exp(v);
    return z;
  }

  /// log of the uniform mixture of every model except `skip`.
  std::vector<double> log_noise_density(std::size_t skip, const DenseArray& sa) const {
    std::vector<std::vector<double>> parts;
    for (std::size_t k = 0; k < size(); ++k)
      if (k != skip) parts.push_back(log_density(k, sa));
    std::vector<double> out(sa.rows());
    for (std::size_t r = 0; r < out.size(); ++r) {
      double mx = -std::numeric_limits<double>::infinity();
      for (const auto& p : parts) mx = std::max(mx, p[r]);
      double s = 0.0;
      for (const auto& p : parts) s += std::exp(p[r] - mx);
      out[r] = mx + std::log(s / static_cast<double>(parts.size()));
    }
    return out;
  }

  /// `steps` rounds; in each round every member takes one logistic-loss step.
  void update(std::span<const RolloutBatch* const> batches, std::size_t steps, Rng& rng) {
    if (batches.size() != size()) throw ContractError("NCE: one batch per member required");
    std::vector<WeightedSampler> samplers;
    for (const RolloutBatch* b : batches) samplers.emplace_back(b->weights);
    const std::size_t m = cfg_.minibatch;
    for (std::size_t s = 0; s < steps; ++s) {
      for (std::size_t i = 0; i < size(); ++i) {
        const DenseArray data = gather_rows(batches[i]->sa, samplers[i].draw(m, rng));
        DenseArray noise = DenseArray::matrix(m, data.cols());
        for (std::size_t r = 0; r < m; ++r) {
          std::size_t k = rng.index(size() - 1);
          if (k >= i) ++k;
          const std::size_t row = samplers[k].draw(rng);
          std::copy_n(batches[k]->sa.values().begin() + static_cast<std::ptrdiff_t>(row * data.cols()), data.cols(),
                      noise.values().begin() + static_cast<std::ptrdiff_t>(r * data.cols()));
        }
        step(i, data, noise);
      }
    }
  }

  /// Mean logistic loss of member i's classifier (data label 1, noise label 0).
  double loss(std::size_t i, const DenseArray& data, const DenseArray& noise) const {
    const std::vector<double> ld = log_density(i, data), nd = log_noise_density(i, data);
    const std::vector<double> ln = log_density(i, noise), nn = log_noise_density(i, noise);
    auto softplus = [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); };
    double a = 0.0, b = 0.0;
    for (std::size_t k = 0; k < ld.size(); ++k) a += softplus(-(ld[k] - nd[k]));
    for (std::size_t k = 0; k < ln.size(); ++k) b += softplus(ln[k] - nn[k]);
    return a / static_cast<double>(ld.size()) + b / static_cast<double>(ln.size());
  }

  Json to_json() const {
    Json j = Json::array();
    for (const SaNetwork& m : models_) j.push_back(m.to_json());
    return j;
  }
  void load(const Json& j) {
    if (j.size() != models_.size()) throw ConfigError("checkpoint: NCE model count mismatch");
    for (std::size_t k = 0; k < models_.size(); ++k) models_[k].load(j[k]);
  }

 private:
  void step(std::size_t i, const DenseArray& data, const DenseArray& noise) {
    const std::vector<double> nd = log_noise_density(i, data), nn = log_noise_density(i, noise);
    Tape tape;
    const MlpVars v = register_mlp(tape, models_[i].net);
    const MlpArchitecture& arch = models_[i].net.arch;
    Var ld = ad::clamp(mlp_logits(arch, v, tape.constant(data)), -kExpHeadClamp, kExpHeadClamp);
    Var ln = ad::clamp(mlp_logits(arch, v, tape.constant(noise)), -kExpHeadClamp, kExpHeadClamp);
    Var logit_d = ad::sub(ld, tape.constant(DenseArray::matrix(nd.size(), 1, nd)));
    Var logit_n = ad::sub(ln, tape.constant(DenseArray::matrix(nn.size(), 1, nn)));
    Var L = ad::add(ad::mean(ad::softplus(ad::neg(logit_d))), ad::mean(ad::softplus(logit_n)));
    tape.run_backward(L);
    models_[i].step(v.flat_gradient(tape), false);
  }

  EstimatorConfig cfg_;
  std::vector<SaNetwork> models_;
};

/// The (i, j) view onto shared NCE models.
class NceEstimator final : public RatioEstimator {
 public:
  NceEstimator(std::size_t i, std::size_t j, std::shared_ptr<NceModels> models)
      : RatioEstimator(i, j), models_(std::move(models)) {}

  EstimatorKind kind() const override { return EstimatorKind::NCE; }

  std::vector<double> evaluate(const DenseArray& sa) const override {
    std::vector<double> a = models_->log_density(i(), sa);
    const std::vector<double> b = models_->log_density(j(), sa);
    for (std::size_t k = 0; k < a.size(); ++k) a[k] = clamp_zeta(std::exp(a[k] - b[k]));
    return a;
  }

  // Training happens once per round on the shared models.
  void update(const RolloutBatch&, std::size_t, Rng&) override {}
  Json to_json() const override { return Json::object(); }
  void load(const Json&) override {}

 private:
  std::shared_ptr<NceModels> models_;
};

}  // namespace qdsvpg

#endif  // QDSVPG_RATIO_NCE_HPP
