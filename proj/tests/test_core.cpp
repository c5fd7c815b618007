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

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "qdsvpg/core/adam.hpp"
#include "qdsvpg/core/dense_array.hpp"
#include "qdsvpg/core/mlp.hpp"
#include "qdsvpg/core/random.hpp"
#include "qdsvpg/core/tape.hpp"

namespace qdsvpg {
namespace {

DenseArray random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  DenseArray m = DenseArray::matrix(r, c);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

// Straight-line re-evaluation with explicit loops, independent of Eigen.
std::vector<double> reference_forward(const MlpParams& p, const std::vector<double>& x) {
  std::vector<double> h = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const MlpLayer& layer = p.layers[l];
    std::vector<double> z(layer.weight.cols(), 0.0);
    for (std::size_t o = 0; o < z.size(); ++o) {
      double acc = p.arch.bias ? layer.bias(0, o) : 0.0;
      for (std::size_t i = 0; i < h.size(); ++i) acc += h[i] * layer.weight(i, o);
      z[o] = l + 1 < p.layers.size() ? std::tanh(acc) : acc;
    }
    h = z;
  }
  if (p.arch.head == OutputHead::Exponential)
    for (double& v : h) v = std::exp(std::clamp(v, -30.0, 30.0));
  return h;
}

void randomize(MlpParams& p, Rng& rng, double scale) {
  std::vector<double> flat = p.flat();
  for (double& v : flat) v = scale * rng.normal();
  p.set_flat(flat);
}

TEST(DenseArray, ShapeMismatchThrows) {
  EXPECT_THROW(DenseArray({2, 3}, std::vector<double>(5, 0.0)), ShapeError);
  DenseArray a({2, 3}, 1.5);
  EXPECT_EQ(a.size(), 6u);
  EXPECT_EQ(a(1, 2), 1.5);
}

TEST(MlpForward, ZeroWeightsGiveZero) {
  Rng rng(1);
  MlpParams p = make_mlp({3, 2, 8, 2, OutputHead::Identity, true}, rng);
  std::vector<double> flat(p.arch.parameter_count(), 0.0);
  p.set_flat(flat);
  DenseArray out = mlp_forward(p, random_matrix(4, 3, rng));
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(MlpForward, IdentityLayer) {
  Rng rng(2);
  MlpParams p = make_mlp({3, 0, 0, 3, OutputHead::Identity, true}, rng);
  for (std::size_t k = 0; k < 3; ++k) p.layers[0].weight(k, k) = 1.0;
  DenseArray x = random_matrix(5, 3, rng);
  EXPECT_EQ(mlp_forward(p, x), x);
}

TEST(MlpForward, MatchesLoopReference) {
  Rng rng(3);
  for (OutputHead head : {OutputHead::Identity, OutputHead::Exponential}) {
    MlpParams p = make_mlp({4, 2, 7, 3, head, true}, rng);
    randomize(p, rng, 0.7);
    DenseArray x = random_matrix(6, 4, rng);
    DenseArray y = mlp_forward(p, x);
    for (std::size_t r = 0; r < 6; ++r) {
      std::vector<double> row(x.values().begin() + static_cast<long>(r * 4),
                              x.values().begin() + static_cast<long>(r * 4 + 4));
      std::vector<double> ref = reference_forward(p, row);
      for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(y(r, c), ref[c], 1e-12);
    }
  }
}

TEST(MlpForward, DimensionMismatchThrows) {
  Rng rng(4);
  MlpParams p = make_mlp({3, 1, 4, 1, OutputHead::Identity, true}, rng);
  EXPECT_THROW(mlp_forward(p, DenseArray::matrix(2, 4)), ShapeError);
}

TEST(MlpForward, SoftmaxHeadIsDistribution) {
  Rng rng(5);
  MlpParams p = make_mlp({3, 2, 8, 5, OutputHead::Softmax, true}, rng);
  randomize(p, rng, 2.0);
  DenseArray y = mlp_forward(p, random_matrix(10, 3, rng, 3.0));
  for (std::size_t r = 0; r < 10; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      EXPECT_GE(y(r, c), 0.0);
      total += y(r, c);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(MlpForward, Deterministic) {
  Rng rng(6);
  MlpParams p = make_mlp({3, 2, 16, 2, OutputHead::Identity, true}, rng);
  randomize(p, rng, 0.5);
  DenseArray x = random_matrix(7, 3, rng);
  EXPECT_EQ(mlp_forward(p, x), mlp_forward(p, x));
}

TEST(MlpArchitecture, ParameterCount) {
  MlpArchitecture a{5, 2, 64, 3, OutputHead::Identity, true};
  EXPECT_EQ(a.parameter_count(), 5u * 64 + 64 + 64 * 64 + 64 + 64 * 3 + 3);
  Rng rng(7);
  EXPECT_EQ(make_mlp(a, rng).flat().size(), a.parameter_count());
}

TEST(Tape, SquareGradient) {
  Tape t;
  Var x = t.parameter(DenseArray::scalar(3.0));
  auto g = t.backward(ad::sum(ad::square(x)));
  EXPECT_DOUBLE_EQ(g[0][0], 6.0);
}

TEST(Tape, UnrelatedParameterHasZeroGradient) {
  Tape t;
  Var x = t.parameter(DenseArray::scalar(2.0));
  Var y = t.parameter(DenseArray::matrix(2, 2, 1.0));
  auto g = t.backward(ad::sum(ad::exp(x)));
  EXPECT_NEAR(g[0][0], std::exp(2.0), 1e-12);
  for (double v : g[1].values()) EXPECT_EQ(v, 0.0);
  (void)y;
}

TEST(Tape, NonScalarLossThrows) {
  Tape t;
  Var x = t.parameter(DenseArray::matrix(2, 1, 1.0));
  EXPECT_THROW(t.backward(ad::square(x)), ContractError);
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

// Central finite differences over one scalar function of a single input matrix.
template <typename Build>
void check_primitive(Build build, std::size_t rows, std::size_t cols, Rng& rng, double lo = -2.0, double hi = 2.0) {
  DenseArray x = DenseArray::matrix(rows, cols);
  for (double& v : x.values()) v = rng.uniform(lo, hi);
  Tape t;
  Var xv = t.parameter(x);
  std::vector<double> analytic = t.flat_gradient(build(xv));
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double h = 1e-5;
    DenseArray xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    Tape tp, tm;
    const double fp = tp.value(build(tp.constant(xp))).scalar_value();
    const double fm = tm.value(build(tm.constant(xm))).scalar_value();
    EXPECT_LT(relative_error(analytic[k], (fp - fm) / (2.0 * h)), 1e-4) << "coordinate " << k;
  }
}

TEST(Tape, PrimitivesMatchFiniteDifferences) {
  Rng rng(11);
  const DenseArray w = random_matrix(3, 2, rng);
  const DenseArray row = random_matrix(1, 2, rng);
  const DenseArray other = random_matrix(4, 3, rng);
  const std::vector<double> weights{0.1, 0.5, 0.2, 0.9};
  const std::vector<double> mask_values{1.0, 0.0, 1.0, 1.0};
  for (int trial = 0; trial < 100; ++trial) {
    check_primitive([&](Var x) { return ad::sum(ad::tanh(x)); }, 4, 3, rng);
    check_primitive([&](Var x) { return ad::sum(ad::softplus(ad::scale(x, 20.0))); }, 4, 3, rng);
    check_primitive([&](Var x) { return ad::sum(ad::exp(x)); }, 4, 3, rng);
    check_primitive([&](Var x) { return ad::sum(ad::log(x)); }, 4, 3, rng, 0.2, 3.0);
    check_primitive([&](Var x) { return ad::mean(ad::square(x)); }, 4, 3, rng);
    check_primitive([&](Var x) { return ad::sum(ad::mul(x, x.tape->constant(other))); }, 4, 3, rng);
    check_primitive([&](Var x) { return ad::sum(ad::square(ad::matmul(x, x.tape->constant(w)))); }, 4, 3, rng);
    check_primitive([&](Var x) { return ad::sum(ad::square(ad::add_row(x, x.tape->constant(row)))); }, 4, 2, rng);
    check_primitive([&](Var x) { return ad::sum(ad::pick(ad::log_softmax_rows(x), {0, 2, 1, 2})); }, 4, 3, rng);
    check_primitive([&](Var x) { return ad::sum(ad::square(ad::softmax_rows(x))); }, 4, 3, rng);
    check_primitive([&](Var x) { return ad::weighted_mean(ad::square(x), weights); }, 4, 1, rng);
    check_primitive([&](Var x) { return ad::weighted_log_mean_exp(x, weights); }, 4, 1, rng);
    check_primitive([&](Var x) { return ad::sum(ad::square(ad::row_sum(x))); }, 4, 3, rng);
    check_primitive([&](Var x) { return ad::sum(ad::mask(ad::square(x), mask_values)); }, 4, 1, rng);
    check_primitive([&](Var x) { return ad::sum(ad::sub(ad::scale(x, 3.0), ad::shift(ad::square(x), 1.0))); }, 2, 2, rng);
  }
}

TEST(Tape, MlpGradientMatchesFiniteDifferences) {
  Rng rng(12);
  MlpParams p = make_mlp({3, 2, 6, 2, OutputHead::Identity, true}, rng);
  randomize(p, rng, 0.6);
  const DenseArray x = random_matrix(5, 3, rng);
  auto loss = [&](const MlpParams& q) {
    Tape t;
    MlpVars vars = register_mlp(t, q);
    Var y = mlp_forward(q.arch, vars, t.constant(x));
    Var l = ad::mean(ad::square(ad::shift(y, -0.3)));
    return std::make_pair(t.value(l).scalar_value(), (t.run_backward(l), vars.flat_gradient(t)));
  };
  const auto [value, grad] = loss(p);
  (void)value;
  std::vector<double> flat = p.flat();
  for (std::size_t k = 0; k < flat.size(); ++k) {
    const double h = 1e-5;
    MlpParams qp = p, qm = p;
    std::vector<double> fp = flat, fm = flat;
    fp[k] += h;
    fm[k] -= h;
    qp.set_flat(fp);
    qm.set_flat(fm);
    const double fd = (loss(qp).first - loss(qm).first) / (2.0 * h);
    EXPECT_LT(relative_error(grad[k], fd), 1e-4) << "parameter " << k;
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  AdamState s(3, 0.1);
  std::vector<double> p{1.0, -2.0, 3.0};
  const std::vector<double> before = p;
  adam_step(s, p, std::vector<double>(3, 0.0));
  EXPECT_EQ(p, before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  AdamState s(3, 0.01);
  std::vector<double> p{0.0, 0.0, 0.0};
  adam_step(s, p, std::vector<double>{2.0, -0.5, 10.0});
  EXPECT_NEAR(p[0], -0.01, 1e-8);
  EXPECT_NEAR(p[1], 0.01, 1e-8);
  EXPECT_NEAR(p[2], -0.01, 1e-8);
}

TEST(Adam, NonFiniteGradientReportsIndex) {
  AdamState s(3, 0.01);
  std::vector<double> p(3, 0.0);
  try {
    adam_step(s, p, std::vector<double>{0.0, std::nan(""), 1.0});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos);
  }
}

TEST(Adam, QuadraticBowlDecreases) {
  AdamState s(4, 0.05);
  std::vector<double> p{1.0, -2.0, 0.5, 3.0};
  auto loss = [](const std::vector<double>& q) {
    double l = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) l += (k + 1.0) * q[k] * q[k];
    return l;
  };
  std::vector<double> history;
  for (int step = 0; step < 100; ++step) {
    std::vector<double> g(4);
    for (std::size_t k = 0; k < 4; ++k) g[k] = 2.0 * (k + 1.0) * p[k];
    adam_step(s, p, g);
    history.push_back(loss(p));
  }
  double first = 0.0, last = 0.0;
  for (int k = 0; k < 10; ++k) {
    first += history[k];
    last += history[90 + k];
  }
  EXPECT_LT(last, first);
  EXPECT_LT(history.back(), loss({1.0, -2.0, 0.5, 3.0}));
}

TEST(Rng, SerializeRoundTrip) {
  Rng a(42);
  for (int k = 0; k < 10; ++k) a.normal();
  Rng b;
  b.deserialize(a.serialize());
  for (int k = 0; k < 10; ++k) EXPECT_EQ(a.next_u64(), b.next_u64());
}

}  // namespace
}  // namespace qdsvpg
