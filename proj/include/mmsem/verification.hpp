#pragma once

#include <chrono>
#include <cmath>
#include <ctime>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mmsem/assembly.hpp"
#include "mmsem/mesh.hpp"
#include "mmsem/problem.hpp"
#include "mmsem/solver.hpp"
#include "mmsem/topology.hpp"

namespace mmsem {

using ElementField = std::function<double(int element, Point2 ref)>;

/// L2 norm of (numerical - exact) over the mesh with an n-point GLL rule per
/// direction. `interior` samples the exact field from inside each element.
inline double l2_error(const Mesh& mesh, const ElementField& numerical, const ScalarFunction& exact, int points,
                       bool interior = false) {
  const QuadratureRule quad = rule_with_points(points);
  double sum = 0.0;
  for (int id = 0; id < mesh.element_count(); ++id) {
    const ElementIndex e = mesh.element(id);
    double local = 0.0;
    for (std::size_t qy = 0; qy < quad.size(); ++qy) {
      for (std::size_t qx = 0; qx < quad.size(); ++qx) {
        const Point2 r{quad.nodes[qx], quad.nodes[qy]};
        const Point2 p = sample_point(mesh, e, r, interior);
        const double d = numerical(id, r) - exact(p.x, p.y);
        local += quad.weights[qx] * quad.weights[qy] * d * d;
      }
    }
    sum += local * mesh.jacobian();
  }
  return std::sqrt(sum);
}

/// Integral of a per-element field over the mesh.
inline double integrate(const Mesh& mesh, const ElementField& f, int points) {
  const QuadratureRule quad = rule_with_points(points);
  double sum = 0.0;
  for (int id = 0; id < mesh.element_count(); ++id) {
    double local = 0.0;
    for (std::size_t qy = 0; qy < quad.size(); ++qy)
      for (std::size_t qx = 0; qx < quad.size(); ++qx)
        local += quad.weights[qx] * quad.weights[qy] * f(id, {quad.nodes[qx], quad.nodes[qy]});
    sum += local * mesh.jacobian();
  }
  return sum;
}

inline double integrate(const Rectangle& d, const ScalarFunction& f, int points) {
  const QuadratureRule qx = map_rule(rule_with_points(points), d.x_min, d.x_max);
  const QuadratureRule qy = map_rule(rule_with_points(points), d.y_min, d.y_max);
  double sum = 0.0;
  for (std::size_t j = 0; j < qy.size(); ++j)
    for (std::size_t i = 0; i < qx.size(); ++i) sum += qx.weights[i] * qy.weights[j] * f(qx.nodes[i], qy.nodes[j]);
  return sum;
}

/// Numerical field of one expansion as an ElementField.
inline ElementField field_view(const Mesh& mesh, const DofMap& dofs, const Eigen::VectorXd& coefficients, Field field,
                               double shift = 0.0) {
  if (static_cast<std::size_t>(coefficients.size()) != expected_length(dofs, field)) {
    throw UsageError("field_view: coefficient vector length mismatch");
  }
  auto basis = std::make_shared<const LagrangeBasis>(gll_basis(mesh.degree));
  const std::span<const double> c(coefficients.data(), static_cast<std::size_t>(coefficients.size()));
  return [&mesh, &dofs, basis, c, field, shift](int id, Point2 r) {
    return evaluate_field(mesh, dofs, *basis, c, field, id, r) + shift;
  };
}

// ---------------------------------------------------------------------------
// Benchmark problems

/// Anisotropic manufactured solution on [-1,1]^2: K = [[2,1],[1,2]],
/// p = exp(xy), q = s K grad p, phi = div q, flux data on every side.
inline ProblemSpec manufactured_case(DarcySign sign = DarcySign::paper, Rectangle domain = {-1.0, 1.0, -1.0, 1.0}) {
  const double s = sign_factor(sign);
  Tensor2 K;
  K << 2.0, 1.0, 1.0, 2.0;
  ProblemSpec spec;
  spec.name = "manufactured";
  spec.domain = domain;
  spec.sign = sign;
  spec.permeability = PermeabilityField::constant(K);
  spec.source = [s](double x, double y) { return s * 2.0 * (1.0 + x * x + x * y + y * y) * std::exp(x * y); };
  spec.exact = ExactSolution{
      [](double x, double y) { return std::exp(x * y); },
      [s](double x, double y) {
        const double e = std::exp(x * y);
        return Vector2(s * (2.0 * y + x) * e, s * (y + 2.0 * x) * e);
      }};
  for (Side side : kSides) spec.use_exact_boundary(side, BoundaryKind::flux);
  spec.pressure_integral = integrate(domain, spec.exact->pressure, 40);
  return spec;
}

/// Layer permeability on the unit square: 0.3 for y <= 1/3, 0.7 up to 2/3, 0.5 above.
inline double layer_alpha(double y) {
  if (y <= 1.0 / 3.0) return 0.3;
  if (y <= 2.0 / 3.0) return 0.7;
  return 0.5;
}

/// Layered medium on [0,1]^2 driven by a unit pressure drop from left to right,
/// with no flow through top and bottom. Exact: p linear in x, u = (1, 0),
/// q = (alpha(y), 0).
inline ProblemSpec layered_case(DarcySign sign = DarcySign::paper) {
  ProblemSpec spec;
  spec.name = "layered";
  spec.domain = {0.0, 1.0, 0.0, 1.0};
  spec.elements_y_multiple = 3;
  spec.sign = sign;
  spec.permeability = {[](double, double y) { return Tensor2(layer_alpha(y) * Tensor2::Identity()); },
                       {1.0 / 3.0, 2.0 / 3.0}};
  // flow runs toward +x in both conventions
  const bool paper = sign == DarcySign::paper;
  spec.exact = ExactSolution{[paper](double x, double) { return paper ? x : 1.0 - x; },
                             [](double, double y) { return Vector2(layer_alpha(y), 0.0); }};
  spec.use_exact_boundary(Side::left, BoundaryKind::pressure);
  spec.use_exact_boundary(Side::right, BoundaryKind::pressure);
  spec.bc(Side::bottom) = {BoundaryKind::flux, [](double, double) { return 0.0; }};
  spec.bc(Side::top) = {BoundaryKind::flux, [](double, double) { return 0.0; }};
  return spec;
}

/// Constant K with exact linear pressure p = a + b x + c y and flux data on all sides.
inline ProblemSpec linear_case(const Tensor2& K, double a, double b, double c, DarcySign sign = DarcySign::paper,
                               Rectangle domain = {-1.0, 1.0, -1.0, 1.0}) {
  const double s = sign_factor(sign);
  const Vector2 q = s * K * Vector2(b, c);
  ProblemSpec spec;
  spec.name = "linear";
  spec.domain = domain;
  spec.sign = sign;
  spec.permeability = PermeabilityField::constant(K);
  spec.exact = ExactSolution{[a, b, c](double x, double y) { return a + b * x + c * y; },
                             [q](double, double) { return q; }};
  for (Side side : kSides) spec.use_exact_boundary(side, BoundaryKind::flux);
  spec.pressure_integral = integrate(domain, spec.exact->pressure, 4);
  return spec;
}

// ---------------------------------------------------------------------------
// Single solves and studies

struct SolveResult {
  Mesh mesh;
  DofMap dofs;
  IncidenceMatrix incidence;
  SaddleSystem system;
  SolutionFields fields;
  MassBalance balance;
  double symmetry = 0.0;  // max |A - A^T|
  std::optional<double> pressure_error;
  std::optional<double> flux_error;
};

struct ErrorOptions {
  int points = 0;  // default N + 4
  int points_for(int N) const { return points > 0 ? points : N + 4; }
};

/// L2 errors of pressure and flux against the exact solution. When a gauge
/// fixed the pressure constant, the numerical pressure is shifted to the exact mean.
inline std::pair<double, double> solution_errors(const ProblemSpec& spec, const SolveResult& r,
                                                 const ErrorOptions& opts = {}) {
  if (!spec.exact) throw UsageError(spec.name + ": no exact solution available for error norms");
  const int pts = opts.points_for(r.mesh.degree);
  const bool interior = spec.permeability.discontinuous();
  double shift = 0.0;
  if (r.system.has_gauge) {
    const double exact_int = integrate(
        r.mesh,
        [&](int id, Point2 ref) {
          const Point2 p = sample_point(r.mesh, r.mesh.element(id), ref, interior);
          return spec.exact->pressure(p.x, p.y);
        },
        pts);
    const double num_int = integrate(r.mesh, field_view(r.mesh, r.dofs, r.fields.pressure, Field::pressure), pts);
    shift = (exact_int - num_int) / r.mesh.domain.area();
  }
  const double ep =
      l2_error(r.mesh, field_view(r.mesh, r.dofs, r.fields.pressure, Field::pressure, shift), spec.exact->pressure,
               pts, interior);
  const VectorFunction q = spec.exact->flux;
  const double ex = l2_error(r.mesh, field_view(r.mesh, r.dofs, r.fields.flux, Field::flux_x),
                             [&](double x, double y) { return q(x, y).x(); }, pts, interior);
  const double ey = l2_error(r.mesh, field_view(r.mesh, r.dofs, r.fields.flux, Field::flux_y),
                             [&](double x, double y) { return q(x, y).y(); }, pts, interior);
  return {ep, std::hypot(ex, ey)};
}

inline SolveResult run_case(const ProblemSpec& spec, int mx, int my, int N, const AssemblyOptions& options = {},
                            const ErrorOptions& error_options = {}) {
  auto [mesh, dofs] = build_mesh(spec.domain, mx, my, N);
  IncidenceMatrix E = incidence_div(mesh, dofs);
  SaddleSystem sys = assemble(spec, mesh, dofs, E, options);
  SolutionFields fields = solve_saddle(sys);
  SolveResult r{mesh, std::move(dofs), std::move(E), std::move(sys), std::move(fields), {}, 0.0, {}, {}};
  r.balance = mass_balance(r.incidence, r.system, r.fields);
  r.symmetry = symmetry_defect(r.system.matrix);
  if (spec.exact) {
    const auto [ep, eq] = solution_errors(spec, r, error_options);
    r.pressure_error = ep;
    r.flux_error = eq;
  }
  return r;
}

enum class StudyMode { h, p };

inline const char* mode_name(StudyMode m) { return m == StudyMode::h ? "h" : "p"; }

struct ConvergenceRow {
  int elements = 0;  // elements per direction
  int degree = 0;
  int dofs = 0;      // flux + pressure unknowns
  double pressure_error = 0.0;
  double flux_error = 0.0;
  /// h mode: log(e_prev/e) / log(h_prev/h) within one degree.
  /// p mode: log(e_prev/e) / (N - N_prev), the exponential decay rate per degree.
  std::optional<double> observed_rate;
  double mass_balance = 0.0;
  double mass_balance_scale = 0.0;
  double symmetry = 0.0;
};

struct ConvergenceReport {
  std::string case_name;
  StudyMode mode = StudyMode::h;
  std::vector<ConvergenceRow> rows;
  std::string sign;
  std::string mass_quadrature;
  std::string source_quadrature;
  std::string error_quadrature;
  std::string timestamp;
  std::optional<std::string> failure;  // set when a solve aborted the study
};

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

/// h mode: every degree against every mesh count (square M x M meshes).
/// p mode: every mesh count against every degree.
/// A failing solve stops the study and leaves the rows gathered so far.
inline ConvergenceReport convergence_study(const ProblemSpec& spec, StudyMode mode, const std::vector<int>& degrees,
                                           const std::vector<int>& mesh_counts, const AssemblyOptions& options = {},
                                           const ErrorOptions& error_options = {}) {
  if (degrees.empty() || mesh_counts.empty()) throw UsageError("convergence_study: empty refinement list");
  ConvergenceReport report;
  report.case_name = spec.name;
  report.mode = mode;
  report.sign = sign_name(spec.sign);
  report.mass_quadrature = options.mass_points > 0 ? std::to_string(options.mass_points) + " GLL" : "N+2 GLL";
  report.source_quadrature =
      options.source_points > 0 ? std::to_string(options.source_points) + " GLL" : "max(N+4,16) GLL";
  report.error_quadrature = error_options.points > 0 ? std::to_string(error_options.points) + " GLL" : "N+4 GLL";
  report.timestamp = utc_timestamp();

  auto one = [&](int M, int N, const ConvergenceRow* prev) {
    const int my = M;
    const SolveResult r = run_case(spec, M, my, N, options, error_options);
    ConvergenceRow row;
    row.elements = M;
    row.degree = N;
    row.dofs = r.dofs.n_q() + r.dofs.n_p;
    row.pressure_error = r.pressure_error.value_or(0.0);
    row.flux_error = r.flux_error.value_or(0.0);
    row.mass_balance = r.balance.residual;
    row.mass_balance_scale = r.balance.source_norm;
    row.symmetry = r.symmetry;
    if (prev && prev->pressure_error > 0.0 && row.pressure_error > 0.0) {
      const double ratio = std::log(prev->pressure_error / row.pressure_error);
      row.observed_rate = mode == StudyMode::h
                              ? ratio / std::log(static_cast<double>(M) / prev->elements)
                              : ratio / (N - prev->degree);
    }
    report.rows.push_back(row);
  };

  try {
    if (mode == StudyMode::h) {
      for (int N : degrees) {
        for (std::size_t k = 0; k < mesh_counts.size(); ++k) {
          const ConvergenceRow* prev = k > 0 ? &report.rows.back() : nullptr;
          one(mesh_counts[k], N, prev);
        }
      }
    } else {
      for (int M : mesh_counts) {
        for (std::size_t k = 0; k < degrees.size(); ++k) {
          const ConvergenceRow* prev = k > 0 ? &report.rows.back() : nullptr;
          one(M, degrees[k], prev);
        }
      }
    }
  } catch (const std::exception& e) {
    report.failure = e.what();
  }
  return report;
}

}  // namespace mmsem
