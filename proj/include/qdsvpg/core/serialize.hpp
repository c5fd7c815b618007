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

#ifndef QDSVPG_CORE_SERIALIZE_HPP
#define QDSVPG_CORE_SERIALIZE_HPP

#include <string>
#include <vector>

#include "json.hpp"
#include "qdsvpg/core/adam.hpp"
#include "qdsvpg/core/errors.hpp"
#include "qdsvpg/core/mlp.hpp"

namespace qdsvpg {

using Json = nlohmann::json;

// Doubles are written with round-trip precision, so a load restores every bit.

inline Json to_json(const MlpArchitecture& a) {
  return Json{{"input_dim", a.input_dim}, {"hidden_layers", a.hidden_layers}, {"width", a.width},
              {"output_dim", a.output_dim}, {"head", to_string(a.head)}, {"bias", a.bias}};
}

inline MlpArchitecture architecture_from_json(const Json& j) {
  MlpArchitecture a;
  a.input_dim = j.at("input_dim").get<std::size_t>();
  a.hidden_layers = j.at("hidden_layers").get<std::size_t>();
  a.width = j.at("width").get<std::size_t>();
  a.output_dim = j.at("output_dim").get<std::size_t>();
  a.head = output_head_from_string(j.at("head").get<std::string>());
  a.bias = j.at("bias").get<bool>();
  return a;
}

inline Json to_json(const MlpParams& p) { return Json{{"arch", to_json(p.arch)}, {"params", p.flat()}}; }

/// Restores parameters into `p`, whose architecture must match the stored one.
inline void load_json(MlpParams& p, const Json& j) {
  if (architecture_from_json(j.at("arch")) != p.arch) throw ConfigError("checkpoint: network architecture mismatch");
  p.set_flat(j.at("params").get<std::vector<double>>());
}

inline Json to_json(const AdamState& s) {
  return Json{{"m", s.m}, {"v", s.v}, {"step", s.step}, {"lr", s.lr},
              {"beta1", s.beta1}, {"beta2", s.beta2}, {"epsilon", s.epsilon}};
}

inline void load_json(AdamState& s, const Json& j) {
  std::vector<double> m = j.at("m").get<std::vector<double>>(), v = j.at("v").get<std::vector<double>>();
  if (m.size() != s.m.size() || v.size() != s.v.size()) throw ConfigError("checkpoint: optimizer state size mismatch");
  s.m = std::move(m);
  s.v = std::move(v);
  s.step = j.at("step").get<std::uint64_t>();
  s.lr = j.at("lr").get<double>();
  s.beta1 = j.at("beta1").get<double>();
  s.beta2 = j.at("beta2").get<double>();
  s.epsilon = j.at("epsilon").get<double>();
}

}  // namespace qdsvpg

#endif  // QDSVPG_CORE_SERIALIZE_HPP
