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

#ifndef QDSVPG_RATIO_BANK_HPP
#define QDSVPG_RATIO_BANK_HPP

#include <memory>
#include <vector>

#include "qdsvpg/ratio/dice.hpp"
#include "qdsvpg/ratio/estimator.hpp"
#include "qdsvpg/ratio/nce.hpp"

namespace qdsvpg {

/// One estimator per ordered pair (i, j), i != j, of an n-member ensemble.
class EstimatorBank {
 public:
  EstimatorBank(const EstimatorConfig& cfg, const Environment& env, std::size_t n, Rng& rng)
      : cfg_(cfg), n_(n), pairs_(n * n) {
    cfg.validate();
    if (n == 0) throw ContractError("EstimatorBank: empty ensemble");
    if (cfg.kind == EstimatorKind::None || n == 1) return;
    const std::size_t sa_dim = env.feature_dim() + env.action_space().encoding_dim();
    if (cfg.kind == EstimatorKind::NCE) nce_ = std::make_shared<NceModels>(n, sa_dim, cfg, rng);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        std::unique_ptr<RatioEstimator>& slot = pairs_[i * n + j];
        switch (cfg.kind) {
          case EstimatorKind::Oracle: slot = std::make_unique<OracleEstimator>(i, j, env); break;
          case EstimatorKind::NCE: slot = std::make_unique<NceEstimator>(i, j, nce_); break;
          case EstimatorKind::DualDICE: slot = std::make_unique<DualDiceEstimator>(i, j, sa_dim, cfg, rng); break;
          case EstimatorKind::ValueDICE: slot = std::make_unique<ValueDiceEstimator>(i, j, sa_dim, cfg, rng); break;
          case EstimatorKind::GenDICE: slot = std::make_unique<GenDiceEstimator>(i, j, sa_dim, cfg, rng); break;
          case EstimatorKind::None: break;
        }
      }
  }

  EstimatorKind kind() const { return cfg_.kind; }
  std::size_t size() const { return n_; }
  bool active() const { return cfg_.kind != EstimatorKind::None && n_ > 1; }

  const RatioEstimator& pair(std::size_t i, std::size_t j) const {
    if (i >= n_ || j >= n_ || !pairs_[i * n_ + j])
      throw ContractError("EstimatorBank: no estimator for pair (" + std::to_string(i) + "," + std::to_string(j) + ")");
    return *pairs_[i * n_ + j];
  }

  std::vector<double> zeta(std::size_t i, std::size_t j, const DenseArray& sa) const { return pair(i, j).evaluate(sa); }

  /// batches[j] must carry an a' annotation for every member, in member order.
  void update(std::span<const RolloutBatch> batches, std::span<const PolicyParams> policies, Rng& rng) {
    if (!active()) return;
    if (batches.size() != n_ || policies.size() != n_) throw ContractError("EstimatorBank: one batch and policy per member");
    switch (cfg_.kind) {
      case EstimatorKind::Oracle:
        for (std::size_t i = 0; i < n_; ++i)
          for (std::size_t j = 0; j < n_; ++j)
            if (i != j) static_cast<OracleEstimator&>(*pairs_[i * n_ + j]).refresh(policies[i], policies[j]);
        return;
      case EstimatorKind::NCE: {
        std::vector<const RolloutBatch*> ptrs;
        for (const RolloutBatch& b : batches) ptrs.push_back(&b);
        nce_->update(ptrs, cfg_.steps, rng);
        return;
      }
      default:
        for (std::size_t i = 0; i < n_; ++i)
          for (std::size_t j = 0; j < n_; ++j) {
            if (i == j) continue;
            try {
              pairs_[i * n_ + j]->update(batches[j], cfg_.steps, rng);
            } catch (const Error& e) {
              throw NumericError(to_string(cfg_.kind) + " estimator for pair (" + std::to_string(i) + "," +
                                 std::to_string(j) + ") failed: " + e.what());
            }
          }
    }
  }

  Json diagnostics(std::span<const RolloutBatch> batches) const {
    Json out = Json::object();
    if (!active()) return out;
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j)
        if (i != j) {
          Json d = pairs_[i * n_ + j]->diagnostics(batches[j]);
          if (!d.empty()) out[std::to_string(i) + "," + std::to_string(j)] = std::move(d);
        }
    return out;
  }

  Json to_json() const {
    Json j{{"kind", to_string(cfg_.kind)}, {"pairs", Json::object()}};
    if (nce_) j["nce"] = nce_->to_json();
    for (std::size_t a = 0; a < n_; ++a)
      for (std::size_t b = 0; b < n_; ++b)
        if (pairs_[a * n_ + b]) j["pairs"][std::to_string(a) + "," + std::to_string(b)] = pairs_[a * n_ + b]->to_json();
    return j;
  }

  void load(const Json& j) {
    if (estimator_kind_from_string(j.at("kind").get<std::string>()) != cfg_.kind)
      throw ConfigError("checkpoint: estimator kind mismatch");
    if (nce_) nce_->load(j.at("nce"));
    for (std::size_t a = 0; a < n_; ++a)
      for (std::size_t b = 0; b < n_; ++b)
        if (pairs_[a * n_ + b]) pairs_[a * n_ + b]->load(j.at("pairs").at(std::to_string(a) + "," + std::to_string(b)));
  }

 private:
  EstimatorConfig cfg_;
  std::size_t n_;
  std::vector<std::unique_ptr<RatioEstimator>> pairs_;
  std::shared_ptr<NceModels> nce_;
};

}  // namespace qdsvpg

#endif  // QDSVPG_RATIO_BANK_HPP
