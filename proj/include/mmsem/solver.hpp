#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <lapacke.h>

#include "mmsem/assembly.hpp"
#include "mmsem/mesh.hpp"
#include "mmsem/problem.hpp"
#include "mmsem/topology.hpp"

namespace mmsem {

/// Shape of the block-diagonal factor D from a symmetric-indefinite factorization.
struct PivotReport {
  int one_by_one = 0;
  int two_by_two = 0;
  double min_abs = 0.0;  // smallest |eigenvalue| over the pivot blocks
  double max_abs = 0.0;
};

struct SolutionFields {
  Eigen::VectorXd flux;      // all n_q fluxes, prescribed ones included
  Eigen::VectorXd pressure;  // n_p
  double gauge_multiplier = 0.0;
  double residual = 0.0;     // relative algebraic residual
  PivotReport pivots;
  std::string method;
};

inline constexpr int kDenseSolveLimit = 20000;
/// Pivot blocks smaller than this fraction of the largest one mean the system is singular.
inline constexpr double kSingularPivotRatio = 1e-13;

namespace detail {

inline double inf_norm(const Eigen::SparseMatrix<double>& A) {
  Eigen::VectorXd rows = Eigen::VectorXd::Zero(A.rows());
  for (int k = 0; k < A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it) rows(it.row()) += std::abs(it.value());
  return rows.size() ? rows.maxCoeff() : 0.0;
}

inline double relative_residual(const SaddleSystem& sys, const Eigen::VectorXd& x) {
  const Eigen::VectorXd r = sys.matrix * x - sys.rhs;
  const double denom = inf_norm(sys.matrix) * x.lpNorm<Eigen::Infinity>() + sys.rhs.lpNorm<Eigen::Infinity>();
  return denom > 0.0 ? r.lpNorm<Eigen::Infinity>() / denom : r.lpNorm<Eigen::Infinity>();
}

inline SolutionFields unpack(const SaddleSystem& sys, const Eigen::VectorXd& x) {
  SolutionFields out;
  out.flux = Eigen::VectorXd::Zero(sys.n_q);
  for (int r = 0; r < sys.n_flux_free(); ++r) out.flux(sys.free_flux[r]) = x(r);
  for (std::size_t k = 0; k < sys.prescribed_flux.size(); ++k) out.flux(sys.prescribed_flux[k]) = sys.prescribed_values[k];
  out.pressure = x.segment(sys.pressure_offset(), sys.n_p);
  if (sys.has_gauge) out.gauge_multiplier = x(sys.dimension() - 1);
  out.residual = relative_residual(sys, x);
  return out;
}

// Bunch-Kaufman factorization (LAPACK dsytrf, lower triangle) and solve.
inline Eigen::VectorXd solve_bunch_kaufman(const SaddleSystem& sys, PivotReport& report) {
  const lapack_int n = sys.dimension();
  Eigen::MatrixXd A = Eigen::MatrixXd(sys.matrix);
  std::vector<lapack_int> ipiv(n);
  lapack_int info = LAPACKE_dsytrf(LAPACK_COL_MAJOR, 'L', n, A.data(), n, ipiv.data());
  if (info < 0) throw SolverError("dsytrf rejected argument", -info);
  if (info > 0) throw SolverError("symmetric-indefinite factorization hit an exactly zero pivot", info - 1);

  report = {};
  report.min_abs = std::numeric_limits<double>::infinity();
  std::ptrdiff_t weakest = 0;
  for (lapack_int k = 0; k < n;) {
    double block_min, block_max;
    if (ipiv[k] > 0) {
      block_min = block_max = std::abs(A(k, k));
      ++report.one_by_one;
      ++k;
    } else {
      const double a = A(k, k), b = A(k + 1, k), d = A(k + 1, k + 1);
      const double mean = 0.5 * (a + d), rad = std::hypot(0.5 * (a - d), b);
      block_min = std::min(std::abs(mean - rad), std::abs(mean + rad));
      block_max = std::max(std::abs(mean - rad), std::abs(mean + rad));
      ++report.two_by_two;
      k += 2;
    }
    if (block_min < report.min_abs) {
      report.min_abs = block_min;
      weakest = k - 1;
    }
    report.max_abs = std::max(report.max_abs, block_max);
  }
  if (n > 0 && report.min_abs <= kSingularPivotRatio * report.max_abs) {
    throw SolverError("saddle-point system is numerically singular (missing pressure gauge?)", weakest);
  }

  Eigen::VectorXd x = sys.rhs;
  info = LAPACKE_dsytrs(LAPACK_COL_MAJOR, 'L', n, 1, A.data(), n, ipiv.data(), x.data(), n);
  if (info != 0) throw SolverError("dsytrs failed", info);
  return x;
}

}  // namespace detail

/// Direct solve: dense Bunch-Kaufman up to kDenseSolveLimit unknowns, sparse LU beyond.
inline SolutionFields solve_saddle(const SaddleSystem& sys) {
  if (sys.dimension() <= kDenseSolveLimit) {
    PivotReport report;
    const Eigen::VectorXd x = detail::solve_bunch_kaufman(sys, report);
    SolutionFields out = detail::unpack(sys, x);
    out.pivots = report;
    out.method = "bunch-kaufman";
    return out;
  }
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(sys.matrix);
  if (lu.info() != Eigen::Success) throw SolverError("sparse LU failed: " + lu.lastErrorMessage(), -1);
  const Eigen::VectorXd x = lu.solve(sys.rhs);
  SolutionFields out = detail::unpack(sys, x);
  out.method = "sparse-lu";
  return out;
}

/// General dense LU with partial pivoting; an independent route for cross-checks.
inline SolutionFields solve_saddle_lu(const SaddleSystem& sys) {
  const Eigen::MatrixXd A(sys.matrix);
  const Eigen::VectorXd x = A.partialPivLu().solve(sys.rhs);
  SolutionFields out = detail::unpack(sys, x);
  out.method = "partial-pivot-lu";
  return out;
}

struct MassBalance {
  double residual = 0.0;     // max |E q - phi_hat|
  double source_norm = 0.0;  // max |phi_hat|

  bool holds(double tol = 1e-11) const { return residual <= tol * std::max(1.0, source_norm); }
};

/// Compares the net outflow E q of every sub-volume with phi_hat, where
/// M phi_hat = f element by element.
inline MassBalance mass_balance(const IncidenceMatrix& E, const SaddleSystem& sys, const SolutionFields& fields) {
  const std::vector<double> q(fields.flux.data(), fields.flux.data() + fields.flux.size());
  const std::vector<double> outflow = E.apply(q);
  const Eigen::LLT<Eigen::MatrixXd> llt(sys.volume_mass);
  const int nb = sys.pressure_block;
  MassBalance mb;
  for (int off = 0; off < sys.n_p; off += nb) {
    const Eigen::VectorXd phi_hat = llt.solve(sys.source.segment(off, nb));
    for (int k = 0; k < nb; ++k) {
      mb.residual = std::max(mb.residual, std::abs(outflow[off + k] - phi_hat(k)));
      mb.source_norm = std::max(mb.source_norm, std::abs(phi_hat(k)));
    }
  }
  return mb;
}

struct VelocitySample {
  double x = 0.0;
  double y = 0.0;
  double ux = 0.0;
  double uy = 0.0;
};

/// u = K^{-1} q at the given reference points of every element.
inline std::vector<VelocitySample> velocity_from_flux(const ProblemSpec& spec, const Mesh& mesh, const DofMap& dofs,
                                                      const SolutionFields& fields, std::span<const Point2> ref_points) {
  const LagrangeBasis basis = gll_basis(mesh.degree);
  const std::span<const double> q(fields.flux.data(), static_cast<std::size_t>(fields.flux.size()));
  if (q.size() != static_cast<std::size_t>(dofs.n_q())) throw UsageError("velocity_from_flux: flux length mismatch");
  std::vector<VelocitySample> out;
  out.reserve(ref_points.size() * mesh.element_count());
  for (int id = 0; id < mesh.element_count(); ++id) {
    const ElementIndex e = mesh.element(id);
    for (const Point2& r : ref_points) {
      const Point2 p = map_to_physical(mesh, e, r);
      const Point2 pk = sample_point(mesh, e, r, spec.permeability.discontinuous());
      const Tensor2 kinv = checked_inverse(spec.permeability.evaluate(pk.x, pk.y), pk.x, pk.y);
      const Vector2 qv(evaluate_field(mesh, dofs, basis, q, Field::flux_x, id, r),
                       evaluate_field(mesh, dofs, basis, q, Field::flux_y, id, r));
      const Vector2 u = kinv * qv;
      out.push_back({p.x, p.y, u.x(), u.y()});
    }
  }
  return out;
}

}  // namespace mmsem
