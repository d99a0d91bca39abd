#include <gtest/gtest.h>

#include <cmath>

#include "lsnn/diff_ops.hpp"
#include "lsnn/problems.hpp"

using namespace lsnn;

TEST(DirectionalDerivative, ExactForLinearFunctions) {
  ScalarField v = [](const Point& x) { return 2.0 * x(0) - 3.0 * x(1) + 1.0; };
  VectorField beta = [](const Point&) { return make_point({0.6, 0.8}); };
  EXPECT_NEAR(directional_derivative(v, make_point({0.5, 0.5}), beta, 0.01), 2.0 * 0.6 - 3.0 * 0.8, 1e-12);
  EXPECT_THROW(directional_derivative(v, make_point({0.5, 0.5}), beta, 0.0), ParameterError);
}

TEST(DirectionalDerivative, SecondOrderTermIsOrderTau) {
  ScalarField v = [](const Point& x) { return x(0) * x(0); };
  VectorField beta = [](const Point&) { return make_point({1.0, 0.0}); };
  // (x^2 - (x - t)^2) / t = 2x - t.
  EXPECT_NEAR(directional_derivative(v, make_point({0.5, 0.0}), beta, 0.1), 1.0 - 0.1, 1e-13);
}

TEST(InflowDerivative, UsesBoundaryDataAtExit) {
  const BoxDomain box = BoxDomain::make({0, 0}, {1, 1});
  ScalarField v = [](const Point& x) { return x(0) + 10.0; };
  ScalarField g = [](const Point& x) { return 100.0 + x(1); };
  VectorField beta = [](const Point&) { return make_point({1.0, 0.0}); };
  const auto r = directional_derivative_inflow(v, make_point({0.02, 0.3}), beta, g, box, 0.001, 0.05);
  EXPECT_TRUE(r.used_inflow);
  EXPECT_NEAR(r.tau, 0.02, 1e-15);
  EXPECT_NEAR(r.exit(0), 0.0, 1e-15);
  EXPECT_NEAR(r.value, (10.02 - 100.3) / 0.02, 1e-9);
  // Exit beyond max_tau: plain difference with the fallback step.
  const auto s = directional_derivative_inflow(v, make_point({0.5, 0.3}), beta, g, box, 0.001, 0.05);
  EXPECT_FALSE(s.used_inflow);
  EXPECT_NEAR(s.value, 1.0, 1e-9);
}

TEST(RayExit, AxisAndDiagonal) {
  const BoxDomain box = BoxDomain::make({0, 0}, {1, 1});
  EXPECT_NEAR(ray_exit_distance(box, make_point({0.3, 0.4}), make_point({-1.0, 0.0})), 0.3, 1e-15);
  const double s = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(ray_exit_distance(box, make_point({0.3, 0.4}), make_point({-s, -s})), 0.3 * std::sqrt(2.0), 1e-14);
}

TEST(Divergence, ExactForLinearFluxWithMidpointRule) {
  // F = (3x + y, x - 2y, t + x): div = 3 - 2 + 1.
  VectorField F = [](const Point& x) { return make_point({3.0 * x(0) + x(1), x(0) - 2.0 * x(1), x(2) + x(0)}); };
  Cell c;
  c.lo = make_point({0.1, 0.2, 0.0});
  c.hi = make_point({0.3, 0.25, 0.1});
  EXPECT_NEAR(discrete_divergence(F, c, QuadRule{}), 2.0, 1e-11);
}

TEST(Divergence, QuadraticFluxAveragesTheDivergence) {
  // F = (x^2, 0): (1/|K|) int_K 2x = x_lo + x_hi.
  VectorField F = [](const Point& x) { return make_point({x(0) * x(0), 0.0}); };
  Cell c;
  c.lo = make_point({0.2, 0.0});
  c.hi = make_point({0.5, 1.0});
  EXPECT_NEAR(discrete_divergence(F, c, QuadRule{}), 0.7, 1e-13);
}

TEST(Divergence, NetworkWithSubstitution) {
  // Constant network u = 0.3 for f(u) = u^4/4: divergence is zero without
  // substitution, and substituting u = 1 on the lower time face gives (0.3 - 1) / h_t.
  auto rp = problem_riemann_quartic();
  NetworkParams p = NetworkParams::zeros({2, {1}});
  p.linear(0) = 0.3;
  Cell c;
  c.lo = make_point({0.0, 0.0});
  c.hi = make_point({0.1, 0.05});
  EXPECT_NEAR(discrete_divergence_nn(p, rp.problem.flux, c, QuadRule{}), 0.0, 1e-14);
  std::vector<FaceSubstitution> subs{{Face{1, 0}, [](const Point&) { return 1.0; }}};
  EXPECT_NEAR(discrete_divergence_nn(p, rp.problem.flux, c, QuadRule{}, subs), (0.3 - 1.0) / 0.05, 1e-12);
  // Corner cell: both the inflow face x = lo and the initial face are replaced.
  subs.push_back({Face{0, 0}, [](const Point&) { return 1.0; }});
  const double expect = (0.25 * std::pow(0.3, 4) - 0.25) / 0.1 + (0.3 - 1.0) / 0.05;
  EXPECT_NEAR(discrete_divergence_nn(p, rp.problem.flux, c, QuadRule{}, subs), expect, 1e-12);
}

TEST(DiffConfig, DefaultTauIsTenthOfMinStep) {
  const auto m = build_uniform_mesh(BoxDomain::make({0, 0}, {1, 1}), std::vector<double>{0.1, 0.05});
  DiffConfig d;
  EXPECT_NEAR(d.resolve_tau(m), 0.005, 1e-15);
  d.tau = 0.02;
  EXPECT_EQ(d.resolve_tau(m), 0.02);
}
