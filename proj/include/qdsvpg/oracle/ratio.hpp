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

#ifndef QDSVPG_ORACLE_RATIO_HPP
#define QDSVPG_ORACLE_RATIO_HPP

#include <cmath>
#include <string>
#include <vector>

#include "qdsvpg/core/dense_array.hpp"
#include "qdsvpg/core/errors.hpp"
#include "qdsvpg/divergence/kinds.hpp"
#include "qdsvpg/oracle/occupancy.hpp"

namespace qdsvpg {

/// zeta[s][a] = rho_i / rho_j, with cells unvisited by both set to 1.
struct RatioTable {
  DenseArray zeta;
  bool zero_over_zero_is_one = true;

  double operator()(std::size_t s, std::size_t a) const { return zeta(s, a); }
};

inline void require_same_support_shape(const OccupancyMeasure& a, const OccupancyMeasure& b, const char* op) {
  if (!a.rho.same_shape(b.rho))
    throw ShapeError(std::string(op) + ": measures have shapes " + DenseArray::shape_string(a.rho.shape()) + " and " +
                     DenseArray::shape_string(b.rho.shape()));
}

inline RatioTable exact_ratio(const OccupancyMeasure& rho_i, const OccupancyMeasure& rho_j) {
  require_same_support_shape(rho_i, rho_j, "exact_ratio");
  RatioTable out{DenseArray::matrix(rho_i.n_states(), rho_i.n_actions()), true};
  std::string bad;
  std::size_t n_bad = 0;
  for (std::size_t s = 0; s < rho_i.n_states(); ++s)
    for (std::size_t a = 0; a < rho_i.n_actions(); ++a) {
      const double p = rho_i(s, a), q = rho_j(s, a);
      if (q > 0.0) {
        out.zeta(s, a) = p / q;
      } else if (p == 0.0) {
        out.zeta(s, a) = 1.0;
      } else {
        if (n_bad++ < 16) bad += " (" + std::to_string(s) + "," + std::to_string(a) + ")";
      }
    }
  if (n_bad > 0)
    throw SupportError("exact_ratio: rho_j = 0 < rho_i on " + std::to_string(n_bad) + " cell(s):" + bad);
  return out;
}

/// D(P, Q) by direct summation of the per-cell integrand.
inline DivergenceEstimate exact_divergence(FDivergenceKind kind, const OccupancyMeasure& p, const OccupancyMeasure& q) {
  require_same_support_shape(p, q, "exact_divergence");
  double total = 0.0;
  for (std::size_t k = 0; k < p.rho.size(); ++k) {
    const double term = divergence_integrand(kind, p.rho[k], q.rho[k]);
    if (std::isinf(term)) return DivergenceEstimate::infinity();
    total += term;
  }
  return DivergenceEstimate::finite(std::max(0.0, total));
}

/// Same value through the generator: sum_x P(x) f(Q(x) / P(x)), cells with P = 0 contributing their limit.
inline DivergenceEstimate generator_divergence(FDivergenceKind kind, const OccupancyMeasure& p, const OccupancyMeasure& q) {
  require_same_support_shape(p, q, "generator_divergence");
  const RatioTable zeta = exact_ratio(q, p);
  double total = 0.0;
  for (std::size_t s = 0; s < p.n_states(); ++s)
    for (std::size_t a = 0; a < p.n_actions(); ++a)
      if (p(s, a) > 0.0) total += p(s, a) * generator_f(kind, zeta(s, a));
  return DivergenceEstimate::finite(std::max(0.0, total));
}

}  // namespace qdsvpg

#endif  // QDSVPG_ORACLE_RATIO_HPP
