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

#ifndef QDSVPG_CORE_ADAM_HPP
#define QDSVPG_CORE_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qdsvpg/core/errors.hpp"

namespace qdsvpg {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double learning_rate) : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}
};

/// One bias-corrected Adam descent step on `params` using loss gradient `grads`.
inline void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (grads.size() != params.size() || state.m.size() != params.size())
    throw ShapeError("adam_step: gradient size " + std::to_string(grads.size()) + " vs parameter size " +
                     std::to_string(params.size()));
  for (std::size_t k = 0; k < grads.size(); ++k)
    if (!std::isfinite(grads[k]))
      throw NumericError("adam_step: non-finite gradient at index " + std::to_string(k));
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * grads[k];
    state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * grads[k] * grads[k];
    const double mhat = state.m[k] / c1;
    const double vhat = state.v[k] / c2;
    params[k] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
  }
}

}  // namespace qdsvpg

#endif  // QDSVPG_CORE_ADAM_HPP
