#include <cmath>

#include <gtest/gtest.h>

#include "mmsem/solver.hpp"
#include "mmsem/verification.hpp"

namespace mmsem {
namespace {

struct Built {
  MeshAndDofs md;
  IncidenceMatrix E;
  SaddleSystem sys;
};

Built build(const ProblemSpec& spec, int mx, int my, int N, AssemblyOptions opts = {}) {
  Built b{build_mesh(spec.domain, mx, my, N), {}, {}};
  b.E = incidence_div(b.md.mesh, b.md.dofs);
  b.sys = assemble(spec, b.md.mesh, b.md.dofs, b.E, opts);
  return b;
}

TEST(SolveSaddle, ZeroRightHandSide) {
  Built b = build(manufactured_case(), 2, 2, 3);
  b.sys.rhs.setZero();
  const SolutionFields s = solve_saddle(b.sys);
  EXPECT_EQ(s.pressure.cwiseAbs().maxCoeff(), 0.0);
  for (int g : b.sys.free_flux) EXPECT_EQ(s.flux(g), 0.0);
}

TEST(SolveSaddle, ResidualAndMassBalance) {
  const Built b = build(manufactured_case(), 3, 2, 3);
  const SolutionFields s = solve_saddle(b.sys);
  EXPECT_EQ(s.method, "bunch-kaufman");
  EXPECT_LE(s.residual, 1e-10);
  EXPECT_GT(s.pivots.one_by_one + 2 * s.pivots.two_by_two, 0);
  EXPECT_EQ(s.pivots.one_by_one + 2 * s.pivots.two_by_two, b.sys.dimension());
  const MassBalance mb = mass_balance(b.E, b.sys, s);
  EXPECT_TRUE(mb.holds()) << mb.residual;
}

TEST(SolveSaddle, BunchKaufmanAgreesWithLu) {
  for (const ProblemSpec& spec : {manufactured_case(), layered_case()}) {
    const Built b = build(spec, 3, 3, 3);
    const SolutionFields bk = solve_saddle(b.sys);
    const SolutionFields lu = solve_saddle_lu(b.sys);
    const double scale = std::max(bk.flux.cwiseAbs().maxCoeff(), bk.pressure.cwiseAbs().maxCoeff());
    EXPECT_LE((bk.flux - lu.flux).cwiseAbs().maxCoeff(), 1e-10 * scale);
    EXPECT_LE((bk.pressure - lu.pressure).cwiseAbs().maxCoeff(), 1e-10 * scale);
  }
}

TEST(SolveSaddle, Deterministic) {
  const Built b = build(manufactured_case(), 2, 3, 4);
  const SolutionFields s1 = solve_saddle(b.sys), s2 = solve_saddle(b.sys);
  EXPECT_EQ(s1.flux, s2.flux);
  EXPECT_EQ(s1.pressure, s2.pressure);
}

TEST(SolveSaddle, MissingGaugeReportsSingularSystem) {
  AssemblyOptions opts;
  opts.pressure_gauge = false;
  const Built b = build(manufactured_case(), 2, 2, 2, opts);
  EXPECT_FALSE(b.sys.has_gauge);
  try {
    solve_saddle(b.sys);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_GE(e.pivot(), 0);
    EXPECT_LT(e.pivot(), b.sys.dimension());
  }
}

TEST(SolveSaddle, RefinementReducesPressureError) {
  const ProblemSpec spec = manufactured_case();
  const SolveResult coarse = run_case(spec, 2, 2, 3);
  const SolveResult fine = run_case(spec, 4, 4, 3);
  EXPECT_LT(*fine.pressure_error, *coarse.pressure_error);
}

TEST(SolveSaddle, IncompatibleDataNeverReachesSolver) {
  ProblemSpec spec = manufactured_case();
  spec.source = [](double, double) { return 0.0; };
  EXPECT_THROW(run_case(spec, 2, 2, 2), IllPosedError);
}

TEST(Velocity, IdentityPermeabilityReturnsFlux) {
  const ProblemSpec spec = linear_case(Tensor2::Identity(), 0.0, 0.3, -0.7);
  const SolveResult r = run_case(spec, 2, 2, 2);
  const auto grid = gll_grid(3);
  const auto u = velocity_from_flux(spec, r.mesh, r.dofs, r.fields, grid);
  const std::span<const double> q(r.fields.flux.data(), r.fields.flux.size());
  const auto qx = reconstruct(r.mesh, r.dofs, q, Field::flux_x, grid);
  const auto qy = reconstruct(r.mesh, r.dofs, q, Field::flux_y, grid);
  ASSERT_EQ(u.size(), qx.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    EXPECT_NEAR(u[k].ux, qx[k].value, 1e-15);
    EXPECT_NEAR(u[k].uy, qy[k].value, 1e-15);
  }
}

TEST(Velocity, AnisotropicInverse) {
  Tensor2 K;
  K << 2.0, 1.0, 1.0, 2.0;
  ProblemSpec spec = linear_case(K, 0.0, 0.0, 0.0);
  const auto [m, d] = build_mesh(spec.domain, 1, 1, 2);
  // uniform q = (1, 0): each x sub-edge flux equals its physical length
  SolutionFields f;
  f.flux = Eigen::VectorXd::Zero(d.n_q());
  const auto nodes = gll_rule(2).nodes;
  for (int i = 0; i <= 2; ++i)
    for (int j = 1; j <= 2; ++j) f.flux(d.element_flux[0][DofMap::local_qx(2, i, j)]) = 0.5 * m.dy() * (nodes[j] - nodes[j - 1]);
  const std::vector<Point2> pts{{0.0, 0.0}, {0.5, -0.25}};
  for (const auto& u : velocity_from_flux(spec, m, d, f, pts)) {
    EXPECT_NEAR(u.ux, 2.0 / 3.0, 1e-14);
    EXPECT_NEAR(u.uy, -1.0 / 3.0, 1e-14);
  }
}

TEST(Velocity, SingularMaterial) {
  ProblemSpec spec = linear_case(Tensor2::Identity(), 0.0, 1.0, 0.0);
  const SolveResult r = run_case(spec, 1, 1, 1);
  spec.permeability = PermeabilityField::constant(Tensor2::Zero());
  const std::vector<Point2> pts{{0.0, 0.0}};
  EXPECT_THROW(velocity_from_flux(spec, r.mesh, r.dofs, r.fields, pts), MaterialError);
}

}  // namespace
}  // namespace mmsem
