#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmsem/errors.hpp"
#include "mmsem/quadrature.hpp"

namespace mmsem {

/// Lagrange polynomials on a fixed node set, evaluated in barycentric form,
/// together with the edge polynomials derived from them.
///
/// Edge polynomial eps_i (1 <= i <= N) is minus the running sum of Lagrange
/// derivatives, eps_i = -sum_{k<i} l_k'. Its integral over [x_{j-1}, x_j] is
/// delta_ij, and l_i' = eps_i - eps_{i+1} with eps_0 = eps_{N+1} = 0.
class LagrangeBasis {
 public:
  explicit LagrangeBasis(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.size() < 2) throw UsageError("LagrangeBasis: need at least two nodes");
    const std::size_t n = nodes_.size();
    bary_.assign(n, 1.0);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) {
        if (k != j) bary_[j] *= nodes_[j] - nodes_[k];
      }
      if (bary_[j] == 0.0) throw UsageError("LagrangeBasis: nodes must be distinct");
      bary_[j] = 1.0 / bary_[j];
    }
  }

  int degree() const noexcept { return static_cast<int>(nodes_.size()) - 1; }
  std::span<const double> nodes() const noexcept { return nodes_; }

  /// l_i(xi).
  double value(int i, double xi) const {
    check_nodal(i);
    const std::size_t n = nodes_.size();
    double denom = 0.0, numer = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double diff = xi - nodes_[j];
      if (diff == 0.0) return static_cast<int>(j) == i ? 1.0 : 0.0;
      const double t = bary_[j] / diff;
      denom += t;
      if (static_cast<int>(j) == i) numer = t;
    }
    return numer / denom;
  }

  /// dl_i/dxi.
  double derivative(int i, double xi) const {
    check_nodal(i);
    const std::size_t n = nodes_.size();
    for (std::size_t m = 0; m < n; ++m) {
      if (xi == nodes_[m]) return diff_entry(static_cast<int>(m), i);
    }
    // Product rule on w_i prod_{k != i} (xi - x_k). Division free, so it stays
    // accurate next to a node where barycentric difference quotients cancel.
    std::vector<double> factors;
    factors.reserve(n - 1);
    for (std::size_t k = 0; k < n; ++k) {
      if (static_cast<int>(k) != i) factors.push_back(xi - nodes_[k]);
    }
    const std::size_t m = factors.size();
    std::vector<double> suffix(m + 1, 1.0);
    for (std::size_t k = m; k-- > 0;) suffix[k] = suffix[k + 1] * factors[k];
    double prefix = 1.0, sum = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      sum += prefix * suffix[k + 1];
      prefix *= factors[k];
    }
    return bary_[i] * sum;
  }

  /// eps_i(xi), 1 <= i <= N.
  double edge(int i, double xi) const {
    if (i < 1 || i > degree()) {
      throw UsageError("edge index " + std::to_string(i) + " outside [1, " + std::to_string(degree()) + "]");
    }
    double sum = 0.0;
    for (int k = 0; k < i; ++k) sum -= derivative(k, xi);
    return sum;
  }

 private:
  void check_nodal(int i) const {
    if (i < 0 || i > degree()) {
      throw UsageError("Lagrange index " + std::to_string(i) + " outside [0, " + std::to_string(degree()) + "]");
    }
  }

  // Entry (m, i) of the nodal differentiation matrix, i.e. l_i'(x_m).
  double diff_entry(int m, int i) const {
    if (m != i) return (bary_[i] / bary_[m]) / (nodes_[m] - nodes_[i]);
    double s = 0.0;
    for (int k = 0; k <= degree(); ++k) {
      if (k != m) s -= (bary_[k] / bary_[m]) / (nodes_[m] - nodes_[k]);
    }
    return s;
  }

  std::vector<double> nodes_;
  std::vector<double> bary_;
};

inline double lagrange_eval(std::span<const double> nodes, int i, double xi) {
  return LagrangeBasis({nodes.begin(), nodes.end()}).value(i, xi);
}

inline double lagrange_deriv(std::span<const double> nodes, int i, double xi) {
  return LagrangeBasis({nodes.begin(), nodes.end()}).derivative(i, xi);
}

inline double edge_eval(std::span<const double> nodes, int i, double xi) {
  return LagrangeBasis({nodes.begin(), nodes.end()}).edge(i, xi);
}

/// Degree-N basis built on the GLL nodes.
inline LagrangeBasis gll_basis(int N) { return LagrangeBasis(gll_rule(N).nodes); }

/// Nodal and edge polynomials of one degree tabulated at a point set.
/// Rows index basis functions, columns index points.
struct BasisSet {
  int degree = 0;
  std::vector<double> nodes;
  std::vector<double> points;
  Eigen::MatrixXd lagrange;        // (N+1) x Q
  Eigen::MatrixXd lagrange_deriv;  // (N+1) x Q
  Eigen::MatrixXd edge;            // N x Q, row k holds eps_{k+1}
};

inline BasisSet tabulate(int degree, std::span<const double> points) {
  if (degree < 1) throw UsageError("tabulate: degree must be at least 1");
  const LagrangeBasis basis = gll_basis(degree);
  const auto Q = static_cast<Eigen::Index>(points.size());
  BasisSet set;
  set.degree = degree;
  set.nodes.assign(basis.nodes().begin(), basis.nodes().end());
  set.points.assign(points.begin(), points.end());
  set.lagrange.resize(degree + 1, Q);
  set.lagrange_deriv.resize(degree + 1, Q);
  set.edge.resize(degree, Q);
  for (Eigen::Index q = 0; q < Q; ++q) {
    const double xi = points[q];
    double running = 0.0;
    for (int i = 0; i <= degree; ++i) {
      set.lagrange(i, q) = basis.value(i, xi);
      const double d = basis.derivative(i, xi);
      set.lagrange_deriv(i, q) = d;
      if (i < degree) {
        running -= d;
        set.edge(i, q) = running;
      }
    }
  }
  return set;
}

}  // namespace mmsem
