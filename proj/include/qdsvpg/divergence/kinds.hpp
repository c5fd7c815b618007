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

#ifndef QDSVPG_DIVERGENCE_KINDS_HPP
#define QDSVPG_DIVERGENCE_KINDS_HPP

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "qdsvpg/core/errors.hpp"

namespace qdsvpg {

enum class FDivergenceKind {
  JS,
  TriangularDiscrimination,
  SquaredHellinger,
  TotalVariation,
  KL,
  ReverseKL,
  SymmetricKL,
};

inline constexpr std::array<FDivergenceKind, 7> kAllDivergenceKinds = {
    FDivergenceKind::JS,        FDivergenceKind::TriangularDiscrimination, FDivergenceKind::SquaredHellinger,
    FDivergenceKind::TotalVariation, FDivergenceKind::KL,                 FDivergenceKind::ReverseKL,
    FDivergenceKind::SymmetricKL};

inline std::string to_string(FDivergenceKind k) {
  switch (k) {
    case FDivergenceKind::JS: return "JS";
    case FDivergenceKind::TriangularDiscrimination: return "TD";
    case FDivergenceKind::SquaredHellinger: return "Hellinger";
    case FDivergenceKind::TotalVariation: return "TV";
    case FDivergenceKind::KL: return "KL";
    case FDivergenceKind::ReverseKL: return "RKL";
    case FDivergenceKind::SymmetricKL: return "KLS";
  }
  return "?";
}

/// Accepts the short names above plus a few long spellings.
inline FDivergenceKind divergence_kind_from_string(const std::string& s) {
  if (s == "JS" || s == "js") return FDivergenceKind::JS;
  if (s == "TD" || s == "td" || s == "TriangularDiscrimination") return FDivergenceKind::TriangularDiscrimination;
  if (s == "Hellinger" || s == "hellinger" || s == "SquaredHellinger") return FDivergenceKind::SquaredHellinger;
  if (s == "TV" || s == "tv" || s == "TotalVariation") return FDivergenceKind::TotalVariation;
  if (s == "KL" || s == "kl") return FDivergenceKind::KL;
  if (s == "RKL" || s == "rkl" || s == "ReverseKL") return FDivergenceKind::ReverseKL;
  if (s == "KLS" || s == "kls" || s == "SymmetricKL") return FDivergenceKind::SymmetricKL;
  throw ConfigError("unknown divergence kind '" + s + "'");
}

/// Whether exp(-D/T) is a positive-definite kernel for this divergence.
inline bool kernel_is_pd(FDivergenceKind k) {
  switch (k) {
    case FDivergenceKind::JS:
    case FDivergenceKind::TriangularDiscrimination:
    case FDivergenceKind::SquaredHellinger:
    case FDivergenceKind::TotalVariation: return true;
    default: return false;
  }
}

inline bool is_symmetric(FDivergenceKind k) { return k != FDivergenceKind::KL && k != FDivergenceKind::ReverseKL; }

// Generators follow the convention D(P, Q) = sum_x P(x) f(Q(x) / P(x)), under
// which each f below reproduces the matching integral in divergence_integrand().
inline double generator_f(FDivergenceKind kind, double u) {
  if (std::isnan(u) || u < 0.0) throw DomainError("generator_f: u must be non-negative, got " + std::to_string(u));
  const double ln2 = std::numbers::ln2;
  switch (kind) {
    case FDivergenceKind::JS:
      if (u == 0.0) return 0.5 * ln2;
      return 0.5 * u * std::log(u) - 0.5 * (1.0 + u) * std::log(0.5 * (1.0 + u));
    case FDivergenceKind::TriangularDiscrimination: return (u - 1.0) * (u - 1.0) / (u + 1.0);
    case FDivergenceKind::SquaredHellinger: {
      const double r = std::sqrt(u) - 1.0;
      return r * r;
    }
    case FDivergenceKind::TotalVariation: return 0.5 * std::abs(u - 1.0);
    case FDivergenceKind::KL:
      if (u == 0.0) throw DomainError("generator_f: KL generator is unbounded at u = 0");
      return -std::log(u);
    case FDivergenceKind::ReverseKL: return u == 0.0 ? 0.0 : u * std::log(u);
    case FDivergenceKind::SymmetricKL:
      if (u == 0.0) throw DomainError("generator_f: KLS generator is unbounded at u = 0");
      return (u - 1.0) * std::log(u);
  }
  return 0.0;
}

/// A divergence value, or an explicit infinity.
struct DivergenceEstimate {
  double value = 0.0;
  bool infinite = false;
  std::size_t samples_i = 0;
  std::size_t samples_j = 0;

  static DivergenceEstimate finite(double v, std::size_t ni = 0, std::size_t nj = 0) { return {v, false, ni, nj}; }
  static DivergenceEstimate infinity() { return {std::numeric_limits<double>::infinity(), true, 0, 0}; }
};

// Per-cell integrand of D(P, Q) at masses p = P(x), q = Q(x). Returns +inf
// when the cell breaks absolute continuity for the KL family.
inline double divergence_integrand(FDivergenceKind kind, double p, double q) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  auto xlogy = [](double x, double y) { return x == 0.0 ? 0.0 : x * std::log(y); };
  switch (kind) {
    case FDivergenceKind::JS: {
      const double m = p + q;
      if (m == 0.0) return 0.0;
      return 0.5 * xlogy(p, 2.0 * p / m) + 0.5 * xlogy(q, 2.0 * q / m);
    }
    case FDivergenceKind::TriangularDiscrimination: {
      const double m = p + q;
      return m == 0.0 ? 0.0 : (p - q) * (p - q) / m;
    }
    case FDivergenceKind::SquaredHellinger: {
      const double r = std::sqrt(p) - std::sqrt(q);
      return r * r;
    }
    case FDivergenceKind::TotalVariation: return 0.5 * std::abs(p - q);
    case FDivergenceKind::KL:
      if (p == 0.0) return 0.0;
      if (q == 0.0) return inf;
      return p * std::log(p / q);
    case FDivergenceKind::ReverseKL:
      if (q == 0.0) return 0.0;
      if (p == 0.0) return inf;
      return q * std::log(q / p);
    case FDivergenceKind::SymmetricKL:
      if (p == 0.0 && q == 0.0) return 0.0;
      if (p == 0.0 || q == 0.0) return inf;
      return (p - q) * std::log(p / q);
  }
  return 0.0;
}

}  // namespace qdsvpg

#endif  // QDSVPG_DIVERGENCE_KINDS_HPP
