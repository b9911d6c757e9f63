#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmsem/errors.hpp"
#include "mmsem/mesh.hpp"

namespace mmsem {

using Tensor2 = Eigen::Matrix2d;
using Vector2 = Eigen::Vector2d;
using ScalarFunction = std::function<double(double x, double y)>;
using VectorFunction = std::function<Vector2(double x, double y)>;

/// Sign of the velocity/pressure relation. `paper` is u = grad p (so q = K grad p);
/// `physical` is the conventional u = -grad p.
enum class DarcySign { paper, physical };

inline double sign_factor(DarcySign s) { return s == DarcySign::paper ? 1.0 : -1.0; }

inline const char* sign_name(DarcySign s) { return s == DarcySign::paper ? "paper" : "physical"; }

/// Symmetric positive definite permeability K(x, y).
///
/// `y_breaks` lists horizontal lines across which K may jump. They must coincide
/// with element edges; K is then sampled from the element interior.
struct PermeabilityField {
  std::function<Tensor2(double x, double y)> evaluate;
  std::vector<double> y_breaks;

  bool discontinuous() const noexcept { return !y_breaks.empty(); }

  static PermeabilityField constant(const Tensor2& K) {
    return {[K](double, double) { return K; }, {}};
  }
};

/// Checks symmetry and positive definiteness of K at (x, y) and returns K^{-1}.
/// The inverse is built from the symmetrized off-diagonal so it is exactly symmetric.
inline Tensor2 checked_inverse(const Tensor2& K, double x, double y) {
  if (std::abs(K(0, 1) - K(1, 0)) > 1e-14 * std::max(1.0, K.cwiseAbs().maxCoeff())) {
    throw MaterialError("permeability is not symmetric", x, y);
  }
  const double off = 0.5 * (K(0, 1) + K(1, 0));
  const double det = K(0, 0) * K(1, 1) - off * off;
  if (!(K(0, 0) > 0.0) || !(det > 0.0)) throw MaterialError("permeability is not positive definite", x, y);
  Tensor2 inv;
  inv(0, 0) = K(1, 1) / det;
  inv(1, 1) = K(0, 0) / det;
  inv(0, 1) = inv(1, 0) = -off / det;
  return inv;
}

enum class BoundaryKind { flux, pressure };

/// One condition per domain side. `value` is the outward normal flux q.n for
/// `flux` and the pressure trace for `pressure`, as a function of the boundary point.
struct BoundaryCondition {
  BoundaryKind kind = BoundaryKind::flux;
  ScalarFunction value = [](double, double) { return 0.0; };
};

struct ExactSolution {
  ScalarFunction pressure;
  VectorFunction flux;
};

struct ProblemSpec {
  std::string name;
  Rectangle domain;
  /// elements_y must be a multiple of this (layer alignment).
  int elements_y_multiple = 1;
  PermeabilityField permeability;
  ScalarFunction source = [](double, double) { return 0.0; };
  std::array<BoundaryCondition, 4> boundary;  // indexed by Side
  DarcySign sign = DarcySign::paper;
  std::optional<ExactSolution> exact;
  /// Target for the integral of pressure over the domain when no pressure
  /// condition fixes the constant.
  double pressure_integral = 0.0;

  const BoundaryCondition& bc(Side s) const { return boundary[static_cast<int>(s)]; }
  BoundaryCondition& bc(Side s) { return boundary[static_cast<int>(s)]; }

  bool all_flux() const {
    for (const auto& b : boundary)
      if (b.kind != BoundaryKind::flux) return false;
    return true;
  }

  /// Replaces the condition on a side with data taken from the exact solution.
  void use_exact_boundary(Side side, BoundaryKind kind) {
    if (!exact) throw UsageError(name + ": boundary override needs an exact solution");
    auto& b = bc(side);
    b.kind = kind;
    if (kind == BoundaryKind::pressure) {
      b.value = exact->pressure;
    } else {
      const VectorFunction q = exact->flux;
      const bool vertical = side == Side::left || side == Side::right;
      const double s = outward_sign(side);
      b.value = [q, vertical, s](double x, double y) {
        const Vector2 v = q(x, y);
        return s * (vertical ? v.x() : v.y());
      };
    }
  }
};

}  // namespace mmsem
