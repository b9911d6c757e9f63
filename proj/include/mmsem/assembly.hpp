#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mmsem/basis.hpp"
#include "mmsem/mesh.hpp"
#include "mmsem/problem.hpp"
#include "mmsem/quadrature.hpp"
#include "mmsem/topology.hpp"

namespace mmsem {

/// Quadrature sizes are points per direction; 0 selects the default.
struct AssemblyOptions {
  int mass_points = 0;    // default N + 2 (exact through degree 2N + 1)
  int source_points = 0;  // default max(N + 4, 16)
  bool pressure_gauge = true;
  double compatibility_tolerance = 1e-10;

  int mass_points_for(int N) const { return mass_points > 0 ? mass_points : N + 2; }
  int source_points_for(int N) const { return source_points > 0 ? source_points : std::max(N + 4, 16); }
};

/// GLL rule with the given number of points.
inline QuadratureRule rule_with_points(int points) {
  if (points < 2) throw UsageError("quadrature needs at least two points per direction");
  return gll_rule(points - 1);
}

inline Point2 sample_point(const Mesh& mesh, ElementIndex e, Point2 ref, bool interior) {
  return interior ? map_interior(mesh, e, ref) : map_to_physical(mesh, e, ref);
}

/// Flux mass matrix of one element under the K^{-1}-weighted inner product.
/// Local ordering follows DofMap: x-fluxes, then y-fluxes.
inline Eigen::MatrixXd mass_matrix_flux(const Mesh& mesh, ElementIndex e, const PermeabilityField& K,
                                        const QuadratureRule& quad) {
  check_element(mesh, e);
  const int N = mesh.degree;
  const int nx = (N + 1) * N;
  const int n = 2 * nx;
  const BasisSet tab = tabulate(N, quad.nodes);
  const double sx = 2.0 / mesh.dy();  // x-flux density scale
  const double sy = 2.0 / mesh.dx();
  const double jac = mesh.jacobian();
  const auto Q = static_cast<int>(quad.size());

  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  std::vector<double> v(n);
  for (int qy = 0; qy < Q; ++qy) {
    for (int qx = 0; qx < Q; ++qx) {
      const Point2 p = sample_point(mesh, e, {quad.nodes[qx], quad.nodes[qy]}, K.discontinuous());
      const Tensor2 kinv = checked_inverse(K.evaluate(p.x, p.y), p.x, p.y);
      const double w = quad.weights[qx] * quad.weights[qy] * jac;
      // Only one vector component is nonzero per basis function.
      for (int i = 0; i <= N; ++i)
        for (int j = 1; j <= N; ++j) v[DofMap::local_qx(N, i, j)] = tab.lagrange(i, qx) * tab.edge(j - 1, qy) * sx;
      for (int i = 1; i <= N; ++i)
        for (int j = 0; j <= N; ++j) v[DofMap::local_qy(N, i, j)] = tab.edge(i - 1, qx) * tab.lagrange(j, qy) * sy;
      const double cxx = w * kinv(0, 0), cxy = w * kinv(0, 1), cyy = w * kinv(1, 1);
      for (int a = 0; a < n; ++a) {
        const bool ax = a < nx;
        for (int b = a; b < n; ++b) {
          const bool bx = b < nx;
          const double c = ax ? (bx ? cxx : cxy) : (bx ? cxy : cyy);
          M(a, b) += c * (v[a] * v[b]);
        }
      }
    }
  }
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < a; ++b) M(a, b) = M(b, a);
  return M;
}

/// Pairing of the volume-density basis with the pressure basis. Jacobians
/// cancel, so the matrix depends on N only.
inline Eigen::MatrixXd mass_matrix_volume(int N, const QuadratureRule& quad) {
  if (N < 1) throw UsageError("mass_matrix_volume: degree must be at least 1");
  const BasisSet tab = tabulate(N, quad.nodes);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(N, N);
  for (std::size_t q = 0; q < quad.size(); ++q)
    for (int i = 0; i < N; ++i)
      for (int k = 0; k < N; ++k) gram(i, k) += quad.weights[q] * (tab.edge(i, q) * tab.edge(k, q));
  Eigen::MatrixXd M(N * N, N * N);
  for (int j = 1; j <= N; ++j)
    for (int i = 1; i <= N; ++i)
      for (int l = 1; l <= N; ++l)
        for (int k = 1; k <= N; ++k)
          M(DofMap::local_p(N, i, j), DofMap::local_p(N, k, l)) = gram(i - 1, k - 1) * gram(j - 1, l - 1);
  return M;
}

/// Entry (i, j) is the integral over the element of phi * eps_i * eps_j, the
/// pairing of the source density with pressure test function (i, j).
inline Eigen::VectorXd source_functional(const Mesh& mesh, ElementIndex e, const QuadratureRule& quad,
                                         const ScalarFunction& phi, bool interior = false) {
  check_element(mesh, e);
  const int N = mesh.degree;
  const BasisSet tab = tabulate(N, quad.nodes);
  const double jac = mesh.jacobian();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(N * N);
  for (std::size_t qy = 0; qy < quad.size(); ++qy) {
    for (std::size_t qx = 0; qx < quad.size(); ++qx) {
      const Point2 p = sample_point(mesh, e, {quad.nodes[qx], quad.nodes[qy]}, interior);
      const double w = quad.weights[qx] * quad.weights[qy] * jac * phi(p.x, p.y);
      for (int j = 1; j <= N; ++j)
        for (int i = 1; i <= N; ++i) f(DofMap::local_p(N, i, j)) += w * tab.edge(i - 1, qx) * tab.edge(j - 1, qy);
    }
  }
  return f;
}

/// Integral of each pressure basis function over an element.
inline Eigen::VectorXd pressure_basis_integrals(const Mesh& mesh, const QuadratureRule& quad) {
  const int N = mesh.degree;
  const BasisSet tab = tabulate(N, quad.nodes);
  Eigen::VectorXd line = Eigen::VectorXd::Zero(N);
  for (std::size_t q = 0; q < quad.size(); ++q)
    for (int i = 0; i < N; ++i) line(i) += quad.weights[q] * tab.edge(i, q);
  Eigen::VectorXd w(N * N);
  for (int j = 1; j <= N; ++j)
    for (int i = 1; i <= N; ++i) w(DofMap::local_p(N, i, j)) = mesh.jacobian() * line(i - 1) * line(j - 1);
  return w;
}

/// Point on a domain side at arc coordinate s (y for left/right, x for bottom/top).
inline Point2 side_point(const Rectangle& d, Side side, double s) {
  switch (side) {
    case Side::left: return {d.x_min, s};
    case Side::right: return {d.x_max, s};
    case Side::bottom: return {s, d.y_min};
    case Side::top: return {s, d.y_max};
  }
  return {};
}

/// Outward flux through one boundary sub-edge.
inline double boundary_sub_edge_flux(const Rectangle& domain, const BoundaryDof& dof, const ScalarFunction& normal_flux,
                                     const QuadratureRule& quad) {
  const QuadratureRule r = map_rule(quad, dof.arc_begin, dof.arc_end);
  double total = 0.0;
  for (std::size_t q = 0; q < r.size(); ++q) {
    const Point2 p = side_point(domain, dof.side, r.nodes[q]);
    total += r.weights[q] * normal_flux(p.x, p.y);
  }
  return total;
}

/// Boundary term of integration by parts for test flux `dof`: the integral of
/// pbar * (tau . n) along the element edge carrying the dof.
inline double boundary_pressure_functional(const Mesh& mesh, const BoundaryDof& dof, const ScalarFunction& pbar,
                                           const QuadratureRule& quad) {
  const LagrangeBasis basis = gll_basis(mesh.degree);
  const ElementIndex e = mesh.element(dof.element);
  const bool vertical = dof.side == Side::left || dof.side == Side::right;
  const double origin = vertical ? mesh.domain.y_min + e.ey * mesh.dy() : mesh.domain.x_min + e.ex * mesh.dx();
  const double half = 0.5 * (vertical ? mesh.dy() : mesh.dx());
  double total = 0.0;
  for (std::size_t q = 0; q < quad.size(); ++q) {
    const double t = quad.nodes[q];
    const Point2 p = side_point(mesh.domain, dof.side, origin + half * (t + 1.0));
    // density scale 2/h times arc Jacobian h/2 leaves the reference integral
    total += quad.weights[q] * pbar(p.x, p.y) * basis.edge(dof.sub_edge, t);
  }
  return outward_sign(dof.side) * total;
}

/// Reduced symmetric saddle-point system
///   [ M_K       s E^T M ] [q]   [ s b ]
///   [ s M E     0       ] [p] = [ s f ]
/// over the free fluxes and all pressures, with prescribed fluxes moved to the
/// right-hand side and an optional mean-pressure multiplier appended last.
struct SaddleSystem {
  Eigen::SparseMatrix<double> matrix;
  Eigen::VectorXd rhs;

  int n_q = 0;  // all flux unknowns
  int n_p = 0;
  std::vector<int> free_flux;          // reduced row -> global flux index
  std::vector<int> reduced_of_flux;    // global flux index -> reduced row or -1
  std::vector<int> prescribed_flux;    // global flux indices fixed by boundary data
  std::vector<double> prescribed_values;
  bool has_gauge = false;
  double sign = 1.0;

  Eigen::VectorXd source;        // global source functional f, length n_p
  Eigen::MatrixXd volume_mass;   // element pressure pairing matrix (same for all elements)
  int pressure_block = 0;        // N * N
  double compatibility_residual = 0.0;

  int n_flux_free() const noexcept { return static_cast<int>(free_flux.size()); }
  int dimension() const noexcept { return n_flux_free() + n_p + (has_gauge ? 1 : 0); }
  int pressure_offset() const noexcept { return n_flux_free(); }
};

/// Largest |A - A^T| entry; zero for a bitwise symmetric matrix.
inline double symmetry_defect(const Eigen::SparseMatrix<double>& A) {
  const Eigen::SparseMatrix<double> At = A.transpose();
  const Eigen::SparseMatrix<double> D = A - At;
  double m = 0.0;
  for (int k = 0; k < D.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(D, k); it; ++it) m = std::max(m, std::abs(it.value()));
  return m;
}

inline void check_layer_alignment(const ProblemSpec& spec, const Mesh& mesh) {
  if (mesh.elements_y % spec.elements_y_multiple != 0) {
    throw UsageError(spec.name + ": elements_y must be a multiple of " + std::to_string(spec.elements_y_multiple));
  }
  for (double yb : spec.permeability.y_breaks) {
    const double t = (yb - mesh.domain.y_min) / mesh.dy();
    if (std::abs(t - std::round(t)) > 1e-10) {
      throw UsageError(spec.name + ": permeability jump at y = " + std::to_string(yb) + " is not on an element edge");
    }
  }
}

inline SaddleSystem assemble(const ProblemSpec& spec, const Mesh& mesh, const DofMap& dofs, const IncidenceMatrix& E,
                             const AssemblyOptions& options = {}) {
  check_layer_alignment(spec, mesh);
  if (E.rows != dofs.n_p || E.cols != dofs.n_q()) throw UsageError("assemble: incidence matrix does not match DofMap");
  const int N = mesh.degree;
  const int nq = dofs.n_q();
  const int np = dofs.n_p;
  const double s = sign_factor(spec.sign);
  const QuadratureRule mass_rule = rule_with_points(options.mass_points_for(N));
  const QuadratureRule source_rule = rule_with_points(options.source_points_for(N));
  const bool interior = spec.permeability.discontinuous();

  SaddleSystem sys;
  sys.n_q = nq;
  sys.n_p = np;
  sys.sign = s;
  sys.pressure_block = N * N;
  sys.volume_mass = mass_matrix_volume(N, mass_rule);
  sys.source = Eigen::VectorXd::Zero(np);

  // Boundary data: prescribed fluxes and the pressure boundary functional.
  std::vector<double> flux_value(nq, 0.0);
  std::vector<char> prescribed(nq, 0);
  std::vector<double> pressure_load(nq, 0.0);
  double boundary_outflow = 0.0, outflow_scale = 0.0;
  for (const BoundaryDof& dof : dofs.boundary_dofs) {
    const BoundaryCondition& bc = spec.bc(dof.side);
    if (bc.kind == BoundaryKind::flux) {
      const double out = boundary_sub_edge_flux(mesh.domain, dof, bc.value, source_rule);
      boundary_outflow += out;
      outflow_scale += std::abs(out);
      flux_value[dof.index] = outward_sign(dof.side) * out;
      prescribed[dof.index] = 1;
    } else {
      pressure_load[dof.index] += boundary_pressure_functional(mesh, dof, bc.value, source_rule);
    }
  }

  // Element source functionals, and the total source they represent
  // (pairing with the constant pressure whose coefficients are c_i c_j).
  const auto& ref_nodes = gll_rule(N).nodes;
  std::vector<double> c(N);
  for (int i = 1; i <= N; ++i) c[i - 1] = ref_nodes[i] - ref_nodes[i - 1];
  double total_source = 0.0;
  for (int id = 0; id < mesh.element_count(); ++id) {
    const Eigen::VectorXd f = source_functional(mesh, mesh.element(id), source_rule, spec.source, interior);
    for (int j = 1; j <= N; ++j) {
      for (int i = 1; i <= N; ++i) {
        const int lp = DofMap::local_p(N, i, j);
        sys.source(dofs.element_pressure[id][lp]) = f(lp);
        total_source += f(lp) * c[i - 1] * c[j - 1];
      }
    }
  }

  if (spec.all_flux()) {
    sys.compatibility_residual = std::abs(total_source - boundary_outflow);
    const double scale = std::max({1.0, std::abs(total_source), outflow_scale});
    if (sys.compatibility_residual > options.compatibility_tolerance * scale) {
      throw IllPosedError(spec.name + ": source integral " + std::to_string(total_source) +
                          " does not match boundary outflow " + std::to_string(boundary_outflow));
    }
  }

  sys.reduced_of_flux.assign(nq, -1);
  for (int g = 0; g < nq; ++g) {
    if (prescribed[g]) {
      sys.prescribed_flux.push_back(g);
      sys.prescribed_values.push_back(flux_value[g]);
    } else {
      sys.reduced_of_flux[g] = static_cast<int>(sys.free_flux.size());
      sys.free_flux.push_back(g);
    }
  }
  const int nf = sys.n_flux_free();
  sys.has_gauge = options.pressure_gauge && spec.all_flux();
  const int dim = sys.dimension();
  sys.rhs = Eigen::VectorXd::Zero(dim);
  for (int g = 0; g < nq; ++g)
    if (!prescribed[g]) sys.rhs(sys.reduced_of_flux[g]) += s * pressure_load[g];
  for (int p = 0; p < np; ++p) sys.rhs(nf + p) = s * sys.source(p);

  // Element contributions in element order. Each global entry and its mirror
  // receive identical summands in identical order.
  std::vector<Eigen::Triplet<double>> triplets;
  const int nl = dofs.local_flux_count();
  const int npl = dofs.local_pressure_count();
  triplets.reserve(static_cast<std::size_t>(mesh.element_count()) * (nl * nl + 2 * 4 * npl * npl));
  auto add = [&](int row_full, int col_full, double v) {
    // full index: flux g in [0, nq), pressure p at nq + p
    const int r = row_full < nq ? sys.reduced_of_flux[row_full] : nf + (row_full - nq);
    if (r < 0) return;
    if (col_full < nq && prescribed[col_full]) {
      sys.rhs(r) -= v * flux_value[col_full];
      return;
    }
    const int cidx = col_full < nq ? sys.reduced_of_flux[col_full] : nf + (col_full - nq);
    triplets.emplace_back(r, cidx, v);
  };

  // local incidence: for pressure (i,j) the four flux columns and signs
  for (int id = 0; id < mesh.element_count(); ++id) {
    const Eigen::MatrixXd MK = mass_matrix_flux(mesh, mesh.element(id), spec.permeability, mass_rule);
    const auto& flux = dofs.element_flux[id];
    const auto& pres = dofs.element_pressure[id];
    for (int a = 0; a < nl; ++a)
      for (int b = 0; b < nl; ++b) add(flux[a], flux[b], MK(a, b));

    // G = E_e^T M, nonzero only in rows of fluxes touching this element.
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(nl, npl);
    for (int j = 1; j <= N; ++j) {
      for (int i = 1; i <= N; ++i) {
        const int r = DofMap::local_p(N, i, j);
        const std::array<std::pair<int, double>, 4> row = {{{DofMap::local_qx(N, i, j), 1.0},
                                                            {DofMap::local_qx(N, i - 1, j), -1.0},
                                                            {DofMap::local_qy(N, i, j), 1.0},
                                                            {DofMap::local_qy(N, i, j - 1), -1.0}}};
        for (const auto& [lf, sgn] : row) G.row(lf) += sgn * sys.volume_mass.row(r);
      }
    }
    for (int a = 0; a < nl; ++a) {
      for (int p = 0; p < npl; ++p) {
        const double v = s * G(a, p);
        if (v == 0.0) continue;
        add(flux[a], nq + pres[p], v);
        add(nq + pres[p], flux[a], v);
      }
    }
  }

  if (sys.has_gauge) {
    const Eigen::VectorXd w = pressure_basis_integrals(mesh, mass_rule);
    const int g = dim - 1;
    for (int id = 0; id < mesh.element_count(); ++id) {
      for (int p = 0; p < npl; ++p) {
        const int r = nf + dofs.element_pressure[id][p];
        triplets.emplace_back(r, g, w(p));
        triplets.emplace_back(g, r, w(p));
      }
    }
    sys.rhs(g) = spec.pressure_integral;
  }

  sys.matrix.resize(dim, dim);
  sys.matrix.setFromTriplets(triplets.begin(), triplets.end());
  return sys;
}

}  // namespace mmsem
