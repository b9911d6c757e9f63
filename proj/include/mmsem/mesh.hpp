#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mmsem/basis.hpp"
#include "mmsem/errors.hpp"

namespace mmsem {

struct Rectangle {
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;

  double width() const noexcept { return x_max - x_min; }
  double height() const noexcept { return y_max - y_min; }
  double area() const noexcept { return width() * height(); }
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct ElementIndex {
  int ex = 0;
  int ey = 0;
};

/// Uniform tensor-product tessellation of a rectangle into congruent elements,
/// each carrying a degree-N mimetic basis.
struct Mesh {
  Rectangle domain;
  int elements_x = 1;
  int elements_y = 1;
  int degree = 1;

  double dx() const noexcept { return domain.width() / elements_x; }
  double dy() const noexcept { return domain.height() / elements_y; }
  /// Constant Jacobian determinant of the affine element map.
  double jacobian() const noexcept { return 0.25 * dx() * dy(); }
  int element_count() const noexcept { return elements_x * elements_y; }
  int element_id(ElementIndex e) const noexcept { return e.ey * elements_x + e.ex; }
  ElementIndex element(int id) const noexcept { return {id % elements_x, id / elements_x}; }
};

enum class Side { left = 0, right = 1, bottom = 2, top = 3 };

inline constexpr std::array<Side, 4> kSides = {Side::left, Side::right, Side::bottom, Side::top};

inline const char* side_name(Side s) {
  switch (s) {
    case Side::left: return "left";
    case Side::right: return "right";
    case Side::bottom: return "bottom";
    case Side::top: return "top";
  }
  return "?";
}

/// Outward normal orientation of a side relative to the coordinate axis: -1 for
/// left and bottom, +1 for right and top.
inline double outward_sign(Side s) { return (s == Side::left || s == Side::bottom) ? -1.0 : 1.0; }

/// A flux unknown lying on the domain boundary.
struct BoundaryDof {
  int index = 0;  // global flux index
  Side side = Side::left;
  int element = 0;
  int sub_edge = 1;       // 1..N along the element edge
  double arc_begin = 0.0;  // physical coordinate along the side
  double arc_end = 0.0;
};

/// Global numbering of flux and pressure unknowns.
///
/// x-fluxes q^x_{ij} (i = 0..N, j = 1..N) are numbered by (global vertical
/// line, global row); y-fluxes q^y_{ij} (i = 1..N, j = 0..N) follow, numbered by
/// (global horizontal line, global column). Fluxes on shared element edges get
/// one index. Pressures are numbered element by element.
///
/// Element-local flux order: x-fluxes at i * N + (j - 1), then y-fluxes at
/// (N + 1) * N + j * N + (i - 1). Local pressure order: (j - 1) * N + (i - 1).
struct DofMap {
  int degree = 1;
  int n_qx = 0;
  int n_qy = 0;
  int n_p = 0;
  std::vector<std::vector<int>> element_flux;      // local flux -> global flux
  std::vector<std::vector<int>> element_pressure;  // local pressure -> global pressure
  std::vector<BoundaryDof> boundary_dofs;

  int n_q() const noexcept { return n_qx + n_qy; }
  int local_flux_count() const noexcept { return 2 * (degree + 1) * degree; }
  int local_pressure_count() const noexcept { return degree * degree; }

  static int local_qx(int N, int i, int j) { return i * N + (j - 1); }
  static int local_qy(int N, int i, int j) { return (N + 1) * N + j * N + (i - 1); }
  static int local_p(int N, int i, int j) { return (j - 1) * N + (i - 1); }
};

inline void validate_mesh(const Rectangle& domain, int mx, int my, int N) {
  if (!(domain.x_min < domain.x_max) || !(domain.y_min < domain.y_max)) {
    throw UsageError("build_mesh: degenerate domain rectangle");
  }
  if (mx < 1) throw UsageError("build_mesh: elements_x must be positive");
  if (my < 1) throw UsageError("build_mesh: elements_y must be positive");
  if (N < 1) throw UsageError("build_mesh: degree must be at least 1");
}

struct MeshAndDofs {
  Mesh mesh;
  DofMap dofs;
};

inline MeshAndDofs build_mesh(const Rectangle& domain, int mx, int my, int N) {
  validate_mesh(domain, mx, my, N);
  Mesh mesh{domain, mx, my, N};
  DofMap dofs;
  dofs.degree = N;
  const int cols = mx * N;  // global sub-columns
  const int rows = my * N;  // global sub-rows
  dofs.n_qx = (cols + 1) * rows;
  dofs.n_qy = cols * (rows + 1);
  dofs.n_p = mesh.element_count() * N * N;
  dofs.element_flux.resize(mesh.element_count());
  dofs.element_pressure.resize(mesh.element_count());

  const double dx = mesh.dx(), dy = mesh.dy();
  const auto nodes = gll_rule(N).nodes;

  for (int id = 0; id < mesh.element_count(); ++id) {
    const auto [ex, ey] = mesh.element(id);
    auto& flux = dofs.element_flux[id];
    flux.assign(dofs.local_flux_count(), -1);
    for (int i = 0; i <= N; ++i) {
      for (int j = 1; j <= N; ++j) {
        const int line = ex * N + i;
        const int row = ey * N + (j - 1);
        flux[DofMap::local_qx(N, i, j)] = line * rows + row;
      }
    }
    for (int j = 0; j <= N; ++j) {
      for (int i = 1; i <= N; ++i) {
        const int line = ey * N + j;
        const int col = ex * N + (i - 1);
        flux[DofMap::local_qy(N, i, j)] = dofs.n_qx + line * cols + col;
      }
    }
    auto& pres = dofs.element_pressure[id];
    pres.resize(dofs.local_pressure_count());
    for (int k = 0; k < dofs.local_pressure_count(); ++k) pres[k] = id * N * N + k;

    auto add_boundary = [&](Side side, int local, int sub_edge) {
      const double edge_origin = (side == Side::left || side == Side::right)
                                          ? domain.y_min + ey * dy
                                          : domain.x_min + ex * dx;
      const double half = 0.5 * ((side == Side::left || side == Side::right) ? dy : dx);
      dofs.boundary_dofs.push_back({flux[local], side, id, sub_edge,
                                    edge_origin + half * (nodes[sub_edge - 1] + 1.0),
                                    edge_origin + half * (nodes[sub_edge] + 1.0)});
    };
    for (int j = 1; j <= N; ++j) {
      if (ex == 0) add_boundary(Side::left, DofMap::local_qx(N, 0, j), j);
      if (ex == mx - 1) add_boundary(Side::right, DofMap::local_qx(N, N, j), j);
    }
    for (int i = 1; i <= N; ++i) {
      if (ey == 0) add_boundary(Side::bottom, DofMap::local_qy(N, i, 0), i);
      if (ey == my - 1) add_boundary(Side::top, DofMap::local_qy(N, i, N), i);
    }
  }
  return {mesh, std::move(dofs)};
}

inline void check_element(const Mesh& mesh, ElementIndex e) {
  if (e.ex < 0 || e.ex >= mesh.elements_x || e.ey < 0 || e.ey >= mesh.elements_y) {
    throw UsageError("element (" + std::to_string(e.ex) + ", " + std::to_string(e.ey) + ") out of range");
  }
}

/// Affine map from the reference square [-1, 1]^2 to element e.
inline Point2 map_to_physical(const Mesh& mesh, ElementIndex e, Point2 ref) {
  check_element(mesh, e);
  return {mesh.domain.x_min + (e.ex + 0.5 * (ref.x + 1.0)) * mesh.dx(),
          mesh.domain.y_min + (e.ey + 0.5 * (ref.y + 1.0)) * mesh.dy()};
}

/// Same map, with reference points pulled a few ulps toward the element center.
/// Piecewise data evaluated there takes its value from the element interior
/// even on element edges.
inline Point2 map_interior(const Mesh& mesh, ElementIndex e, Point2 ref) {
  constexpr double shrink = 1.0 - 1e-13;
  return map_to_physical(mesh, e, {ref.x * shrink, ref.y * shrink});
}

enum class Field { flux_x, flux_y, pressure, divergence };

struct FieldSample {
  int element = 0;
  double x = 0.0;
  double y = 0.0;
  double value = 0.0;
};

/// Pointwise value of one expansion inside element `id` at reference point
/// (xi, eta), with the Piola-type scalings that make flux coefficients equal to
/// sub-edge fluxes: x-flux density carries 2/dy, y-flux density 2/dx and the
/// divergence density 4/(dx dy). Pressure is the unscaled eps x eps expansion.
inline double evaluate_field(const Mesh& mesh, const DofMap& dofs, const LagrangeBasis& basis,
                             std::span<const double> coefficients, Field field, int id, Point2 ref) {
  const int N = mesh.degree;
  std::vector<double> l(N + 1), ex(N + 1, 0.0), ey(N + 1, 0.0), lx(N + 1);
  for (int i = 0; i <= N; ++i) {
    l[i] = basis.value(i, ref.y);
    lx[i] = basis.value(i, ref.x);
  }
  for (int i = 1; i <= N; ++i) {
    ex[i] = basis.edge(i, ref.x);
    ey[i] = basis.edge(i, ref.y);
  }
  const auto& flux = dofs.element_flux[id];
  double sum = 0.0;
  switch (field) {
    case Field::flux_x:
      for (int i = 0; i <= N; ++i)
        for (int j = 1; j <= N; ++j) sum += coefficients[flux[DofMap::local_qx(N, i, j)]] * lx[i] * ey[j];
      return sum * 2.0 / mesh.dy();
    case Field::flux_y:
      for (int i = 1; i <= N; ++i)
        for (int j = 0; j <= N; ++j) sum += coefficients[flux[DofMap::local_qy(N, i, j)]] * ex[i] * l[j];
      return sum * 2.0 / mesh.dx();
    case Field::pressure: {
      const auto& pres = dofs.element_pressure[id];
      for (int i = 1; i <= N; ++i)
        for (int j = 1; j <= N; ++j) sum += coefficients[pres[DofMap::local_p(N, i, j)]] * ex[i] * ey[j];
      return sum;
    }
    case Field::divergence:
      for (int i = 1; i <= N; ++i) {
        for (int j = 1; j <= N; ++j) {
          const double net = coefficients[flux[DofMap::local_qx(N, i, j)]] -
                             coefficients[flux[DofMap::local_qx(N, i - 1, j)]] +
                             coefficients[flux[DofMap::local_qy(N, i, j)]] -
                             coefficients[flux[DofMap::local_qy(N, i, j - 1)]];
          sum += net * ex[i] * ey[j];
        }
      }
      return sum * 4.0 / (mesh.dx() * mesh.dy());
  }
  return sum;
}

inline std::size_t expected_length(const DofMap& dofs, Field field) {
  return field == Field::pressure ? static_cast<std::size_t>(dofs.n_p) : static_cast<std::size_t>(dofs.n_q());
}

/// Samples a field at the same reference points in every element, element by
/// element in id order.
inline std::vector<FieldSample> reconstruct(const Mesh& mesh, const DofMap& dofs, std::span<const double> coefficients,
                                            Field field, std::span<const Point2> ref_points) {
  if (coefficients.size() != expected_length(dofs, field)) {
    throw UsageError("reconstruct: coefficient vector has length " + std::to_string(coefficients.size()) +
                     ", expected " + std::to_string(expected_length(dofs, field)));
  }
  const LagrangeBasis basis = gll_basis(mesh.degree);
  std::vector<FieldSample> out;
  out.reserve(ref_points.size() * mesh.element_count());
  for (int id = 0; id < mesh.element_count(); ++id) {
    for (const Point2& r : ref_points) {
      const Point2 p = map_to_physical(mesh, mesh.element(id), r);
      out.push_back({id, p.x, p.y, evaluate_field(mesh, dofs, basis, coefficients, field, id, r)});
    }
  }
  return out;
}

/// Tensor grid of the n-point GLL nodes on the reference square, xi fastest.
inline std::vector<Point2> gll_grid(int points_per_direction) {
  if (points_per_direction < 2) throw UsageError("gll_grid: need at least two points per direction");
  const auto nodes = gll_rule(points_per_direction - 1).nodes;
  std::vector<Point2> grid;
  grid.reserve(nodes.size() * nodes.size());
  for (double eta : nodes)
    for (double xi : nodes) grid.push_back({xi, eta});
  return grid;
}

}  // namespace mmsem
