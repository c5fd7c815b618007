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

#ifndef QDSVPG_CORE_MLP_HPP
#define QDSVPG_CORE_MLP_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "qdsvpg/core/dense_array.hpp"
#include "qdsvpg/core/errors.hpp"
#include "qdsvpg/core/random.hpp"
#include "qdsvpg/core/tape.hpp"

namespace qdsvpg {

enum class OutputHead { Identity, Exponential, Softmax };

inline std::string to_string(OutputHead h) {
  switch (h) {
    case OutputHead::Identity: return "identity";
    case OutputHead::Exponential: return "exponential";
    case OutputHead::Softmax: return "softmax";
  }
  return "identity";
}

inline OutputHead output_head_from_string(const std::string& s) {
  if (s == "identity") return OutputHead::Identity;
  if (s == "exponential") return OutputHead::Exponential;
  if (s == "softmax") return OutputHead::Softmax;
  throw ConfigError("unknown output head '" + s + "'");
}

/// Pre-activation clamp of the exponential head.
inline constexpr double kExpHeadClamp = 30.0;

struct MlpArchitecture {
  std::size_t input_dim = 1;
  std::size_t hidden_layers = 2;
  std::size_t width = 64;
  std::size_t output_dim = 1;
  OutputHead head = OutputHead::Identity;
  bool bias = true;

  /// (fan_in, fan_out) per affine layer.
  std::vector<std::pair<std::size_t, std::size_t>> layer_dims() const {
    std::vector<std::pair<std::size_t, std::size_t>> dims;
    std::size_t in = input_dim;
    for (std::size_t l = 0; l < hidden_layers; ++l) {
      dims.emplace_back(in, width);
      in = width;
    }
    dims.emplace_back(in, output_dim);
    return dims;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto [in, out] : layer_dims()) n += in * out + (bias ? out : 0);
    return n;
  }

  friend bool operator==(const MlpArchitecture&, const MlpArchitecture&) = default;
};

struct MlpLayer {
  DenseArray weight;  // [fan_in, fan_out]
  DenseArray bias;    // [1, fan_out], empty when the architecture has no bias
};

struct MlpParams {
  MlpArchitecture arch;
  std::vector<MlpLayer> layers;

  std::vector<double> flat() const {
    std::vector<double> out;
    out.reserve(arch.parameter_count());
    for (const MlpLayer& l : layers) {
      out.insert(out.end(), l.weight.values().begin(), l.weight.values().end());
      out.insert(out.end(), l.bias.values().begin(), l.bias.values().end());
    }
    return out;
  }

  void set_flat(std::span<const double> values) {
    if (values.size() != arch.parameter_count())
      throw ShapeError("MlpParams::set_flat: expected " + std::to_string(arch.parameter_count()) +
                       " values, got " + std::to_string(values.size()));
    std::size_t k = 0;
    for (MlpLayer& l : layers) {
      for (double& v : l.weight.values()) v = values[k++];
      for (double& v : l.bias.values()) v = values[k++];
    }
  }
};

namespace detail {

inline DenseArray orthogonal(std::size_t rows, std::size_t cols, Rng& rng, double gain) {
  const std::size_t big = std::max(rows, cols), small = std::min(rows, cols);
  Eigen::MatrixXd g(big, small);
  for (Eigen::Index r = 0; r < g.rows(); ++r)
    for (Eigen::Index c = 0; c < g.cols(); ++c) g(r, c) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  // Sign fix makes the draw uniform over the orthogonal group.
  const Eigen::MatrixXd rmat = qr.matrixQR();
  for (Eigen::Index c = 0; c < q.cols(); ++c)
    if (rmat(c, c) < 0.0) q.col(c) *= -1.0;
  DenseArray w = DenseArray::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) w(r, c) = gain * (rows >= cols ? q(r, c) : q(c, r));
  return w;
}

}  // namespace detail

/// Orthogonal hidden layers, zero output layer, zero biases.
inline MlpParams make_mlp(const MlpArchitecture& arch, Rng& rng, double hidden_gain = 1.0) {
  if (arch.input_dim == 0 || arch.output_dim == 0) throw ShapeError("make_mlp: zero input or output dim");
  if (arch.hidden_layers > 0 && arch.width == 0) throw ShapeError("make_mlp: zero hidden width");
  MlpParams p{arch, {}};
  const auto dims = arch.layer_dims();
  for (std::size_t l = 0; l < dims.size(); ++l) {
    auto [in, out] = dims[l];
    MlpLayer layer;
    const bool output = l + 1 == dims.size();
    layer.weight = output ? DenseArray::matrix(in, out, 0.0) : detail::orthogonal(in, out, rng, hidden_gain);
    layer.bias = arch.bias ? DenseArray::matrix(1, out, 0.0) : DenseArray();
    p.layers.push_back(std::move(layer));
  }
  return p;
}

namespace detail {

inline void apply_head_inplace(RowMajorMatrix& z, OutputHead head) {
  switch (head) {
    case OutputHead::Identity: break;
    case OutputHead::Exponential:
      z = z.array().max(-kExpHeadClamp).min(kExpHeadClamp).exp().matrix();
      break;
    case OutputHead::Softmax:
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double mx = z.row(r).maxCoeff();
        z.row(r) = (z.row(r).array() - mx).exp().matrix();
        z.row(r) /= z.row(r).sum();
      }
      break;
  }
}

}  // namespace detail

/// Plain evaluation. `input` is [batch, input_dim].
inline DenseArray mlp_forward(const MlpParams& params, const DenseArray& input) {
  if (input.rank() != 2 || input.cols() != params.arch.input_dim)
    throw ShapeError("mlp_forward: input " + DenseArray::shape_string(input.shape()) +
                     " does not match input dim " + std::to_string(params.arch.input_dim));
  RowMajorMatrix h = input.as_matrix();
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const MlpLayer& layer = params.layers[l];
    RowMajorMatrix z = h * layer.weight.as_matrix();
    if (params.arch.bias) z.rowwise() += layer.bias.as_matrix().row(0);
    if (l + 1 < params.layers.size()) z = z.array().tanh().matrix();
    h = std::move(z);
  }
  detail::apply_head_inplace(h, params.arch.head);
  DenseArray out = DenseArray::matrix(static_cast<std::size_t>(h.rows()), static_cast<std::size_t>(h.cols()));
  out.as_matrix() = h;
  return out;
}

/// Parameters of one network registered on a tape.
struct MlpVars {
  std::vector<Var> weights;
  std::vector<Var> biases;

  std::vector<double> flat_gradient(const Tape& tape) const {
    std::vector<double> g;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      const DenseArray gw = tape.grad_of(weights[l]);
      g.insert(g.end(), gw.values().begin(), gw.values().end());
      if (l < biases.size()) {
        const DenseArray gb = tape.grad_of(biases[l]);
        g.insert(g.end(), gb.values().begin(), gb.values().end());
      }
    }
    return g;
  }
};

inline MlpVars register_mlp(Tape& tape, const MlpParams& params) {
  MlpVars vars;
  for (const MlpLayer& l : params.layers) {
    vars.weights.push_back(tape.parameter(l.weight));
    if (params.arch.bias) vars.biases.push_back(tape.parameter(l.bias));
  }
  return vars;
}

/// Pre-head output (logits) on a tape.
inline Var mlp_logits(const MlpArchitecture& arch, const MlpVars& vars, Var input) {
  const DenseArray& x = input.tape->value(input);
  if (x.rank() != 2 || x.cols() != arch.input_dim)
    throw ShapeError("mlp_forward: input " + DenseArray::shape_string(x.shape()) +
                     " does not match input dim " + std::to_string(arch.input_dim));
  Var h = input;
  for (std::size_t l = 0; l < vars.weights.size(); ++l) {
    Var z = ad::matmul(h, vars.weights[l]);
    if (arch.bias) z = ad::add_row(z, vars.biases[l]);
    h = (l + 1 < vars.weights.size()) ? ad::tanh(z) : z;
  }
  return h;
}

/// Head-activated output on a tape.
inline Var mlp_forward(const MlpArchitecture& arch, const MlpVars& vars, Var input) {
  Var z = mlp_logits(arch, vars, input);
  switch (arch.head) {
    case OutputHead::Identity: return z;
    case OutputHead::Exponential: return ad::exp(ad::clamp(z, -kExpHeadClamp, kExpHeadClamp));
    case OutputHead::Softmax: return ad::softmax_rows(z);
  }
  return z;
}

}  // namespace qdsvpg

#endif  // QDSVPG_CORE_MLP_HPP
