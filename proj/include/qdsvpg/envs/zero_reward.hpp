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

#ifndef QDSVPG_ENVS_ZERO_REWARD_HPP
#define QDSVPG_ENVS_ZERO_REWARD_HPP

#include <algorithm>
#include <memory>
#include <optional>

#include "qdsvpg/envs/environment.hpp"
#include "qdsvpg/envs/tabular_mdp.hpp"

namespace qdsvpg {

/// Wrapper returning reward 0 on every step; dynamics and RNG use are unchanged.
class ZeroRewardEnv final : public Environment {
 public:
  explicit ZeroRewardEnv(std::shared_ptr<const Environment> base) : base_(std::move(base)) {
    if (const TabularMDP* m = base_->tabular()) {
      zeroed_ = *m;
      std::fill(zeroed_->reward.begin(), zeroed_->reward.end(), 0.0);
      zeroed_->name = m->name + "+zero_reward";
    }
  }

  std::string name() const override { return base_->name() + "+zero_reward"; }
  std::size_t feature_dim() const override { return base_->feature_dim(); }
  ActionSpace action_space() const override { return base_->action_space(); }
  double gamma() const override { return base_->gamma(); }
  std::size_t horizon() const override { return base_->horizon(); }
  State reset(Rng& rng) const override { return base_->reset(rng); }

  StepResult step(const State& state, const Action& action, Rng& rng) const override {
    StepResult r = base_->step(state, action, rng);
    r.reward = 0.0;
    return r;
  }

  void features(const State& state, std::span<double> out) const override { base_->features(state, out); }
  using Environment::features;
  std::vector<double> position(const State& state) const override { return base_->position(state); }
  double displacement(const State& from, const Action& action, const State& to) const override {
    return base_->displacement(from, action, to);
  }
  const TabularMDP* tabular() const override { return zeroed_ ? &*zeroed_ : nullptr; }

  const Environment& base() const { return *base_; }

 private:
  std::shared_ptr<const Environment> base_;
  std::optional<TabularMDP> zeroed_;
};

inline std::shared_ptr<const Environment> zero_reward(std::shared_ptr<const Environment> env) {
  return std::make_shared<ZeroRewardEnv>(std::move(env));
}

}  // namespace qdsvpg

#endif  // QDSVPG_ENVS_ZERO_REWARD_HPP
