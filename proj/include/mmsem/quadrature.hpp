#pragma once

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "mmsem/errors.hpp"

namespace mmsem {

/// Value and first derivative of a Legendre polynomial.
struct LegendreValue {
  double value;
  double derivative;
};

/// Evaluates L_n and L_n' at xi with the three-term recurrence.
inline LegendreValue legendre_eval(int n, double xi) {
  if (n < 0) throw UsageError("legendre_eval: degree must be nonnegative");
  double p_prev = 1.0, p = xi;
  double d_prev = 0.0, d = 1.0;
  if (n == 0) return {1.0, 0.0};
  for (int k = 1; k < n; ++k) {
    const double p_next = ((2.0 * k + 1.0) * xi * p - k * p_prev) / (k + 1.0);
    const double d_next = d_prev + (2.0 * k + 1.0) * p;
    p_prev = p;
    p = p_next;
    d_prev = d;
    d = d_next;
  }
  return {p, d};
}

/// Gauss-Lobatto-Legendre rule with N+1 points on [-1, 1].
///
/// Nodes are the roots of (1 - xi^2) L_N'(xi); the rule integrates polynomials
/// up to degree 2N-1 exactly.
struct QuadratureRule {
  int degree = 0;
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const noexcept { return nodes.size(); }
};

namespace detail {
constexpr int kNewtonMaxIterations = 100;
constexpr double kNewtonTolerance = 1e-15;
}  // namespace detail

/// Builds the GLL rule for polynomial degree N >= 1.
///
/// Interior nodes come from Newton iteration on L_N' seeded with the
/// Chebyshev-Gauss-Lobatto points. Only the left half is solved; the right half
/// is mirrored so the rule is exactly symmetric.
inline QuadratureRule gll_rule(int N) {
  if (N < 1) throw UsageError("gll_rule: degree must be at least 1");
  QuadratureRule rule;
  rule.degree = N;
  rule.nodes.assign(N + 1, 0.0);
  rule.weights.assign(N + 1, 0.0);
  rule.nodes.front() = -1.0;
  rule.nodes.back() = 1.0;

  const double nn1 = static_cast<double>(N) * (N + 1);
  for (int i = 1; 2 * i < N; ++i) {
    double x = -std::cos(std::numbers::pi * i / N);
    bool converged = false;
    for (int it = 0; it < detail::kNewtonMaxIterations; ++it) {
      const auto [L, dL] = legendre_eval(N, x);
      // L'' from the Legendre equation; x is strictly interior.
      const double d2L = (2.0 * x * dL - nn1 * L) / (1.0 - x * x);
      const double dx = dL / d2L;
      x -= dx;
      if (std::abs(dx) <= detail::kNewtonTolerance) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      // Stagnation at round-off is acceptable; only a large residual is fatal.
      const auto [L, dL] = legendre_eval(N, x);
      if (std::abs(dL) > 1e-10 * nn1) throw ConvergenceError("gll_rule: Newton iteration did not converge");
    }
    rule.nodes[i] = x;
    rule.nodes[N - i] = -x;
  }
  // even N has a node at the origin
  if (N % 2 == 0) rule.nodes[N / 2] = 0.0;

  for (int i = 0; 2 * i <= N; ++i) {
    const double L = legendre_eval(N, rule.nodes[i]).value;
    const double w = 2.0 / (nn1 * L * L);
    rule.weights[i] = w;
    rule.weights[N - i] = w;
  }
  return rule;
}

/// Maps a rule from [-1, 1] onto [a, b]; weights are scaled by (b - a) / 2.
inline QuadratureRule map_rule(const QuadratureRule& rule, double a, double b) {
  QuadratureRule mapped = rule;
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  for (std::size_t k = 0; k < rule.size(); ++k) {
    mapped.nodes[k] = mid + half * rule.nodes[k];
    mapped.weights[k] = half * rule.weights[k];
  }
  return mapped;
}

}  // namespace mmsem
