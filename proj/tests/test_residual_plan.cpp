#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lsnn/least_squares.hpp"
#include "lsnn/optimize.hpp"
#include "lsnn/problems.hpp"

using namespace lsnn;

namespace {

// Linear advection u_x = 0 on (0,1)^2 with beta = (1,0), gamma = 0.
LinearProblem transport_x(ScalarField g) {
  LinearProblem p;
  p.domain = BoxDomain::make({0, 0}, {1, 1});
  p.beta = [](const Point&) { return make_point({1.0, 0.0}); };
  p.gamma = [](const Point&) { return 0.0; };
  p.f = [](const Point&) { return 0.0; };
  p.g = std::move(g);
  return p;
}

NetworkParams affine_net(double c0, double cx, double cy) {
  // u = c0 + cx relu(x + 2) + cy relu(y + 2) - 2 cx - 2 cy, affine on the unit square.
  NetworkParams p = NetworkParams::zeros({2, {2}});
  p.layers[0].weights << 1.0, 0.0, 0.0, 1.0;
  p.layers[0].biases << 2.0, 2.0;
  p.linear << c0 - 2.0 * cx - 2.0 * cy, cx, cy;
  return p;
}

}  // namespace

TEST(PlanBuilder, DeduplicatesPoints) {
  PlanBuilder B(2);
  const int a = B.point(make_point({0.1, 0.2}));
  const int b = B.point(make_point({0.1 + 1e-13, 0.2}));
  const int c = B.point(make_point({0.1, 0.25}));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(LinearPlan, ExactSolutionHasZeroResidual) {
  // u = 1 + y solves u_x = 0 with g = 1 + y.
  const LinearProblem lp = transport_x([](const Point& x) { return 1.0 + x(1); });
  const auto mesh = classify_faces(build_uniform_mesh(lp.domain, 0.1), lp);
  const FunctionalValue v = functional_linear(affine_net(1.0, 0.0, 1.0), lp, mesh, DiffConfig{}, 1.0);
  EXPECT_LT(v.total, 1e-26);
  EXPECT_EQ(mesh.inflow_faces.size(), 10u);
}

TEST(LinearPlan, ResidualOfAffineFunctionIsItsDerivative) {
  const LinearProblem lp = transport_x([](const Point&) { return 0.0; });
  const auto mesh = classify_faces(build_uniform_mesh(lp.domain, 0.1), lp);
  DiffConfig d;
  d.inflow_substitution = false;
  const Eigen::VectorXd R = residuals_linear(affine_net(0.0, 2.0, 0.0), lp, mesh, d);
  ASSERT_EQ(R.size(), 100);
  for (Eigen::Index q = 0; q < R.size(); ++q) EXPECT_NEAR(R(q), 2.0, 1e-9);
  // Functional = sum |K| 2^2 = 4, plus penalty of u = 2x on x = 0 which is zero.
  EXPECT_NEAR(functional_linear(affine_net(0.0, 2.0, 0.0), lp, mesh, d, 1.0).total, 4.0, 1e-9);
}

TEST(LinearPlan, ExitVariantUsesInflowData) {
  // Cells touching x = 0 use (u(x) - g) / dist: with u = 5 and g = 0 the residual is 5 / 0.05.
  const LinearProblem lp = transport_x([](const Point&) { return 0.0; });
  const auto mesh = classify_faces(build_uniform_mesh(lp.domain, 0.1), lp);
  const ResidualPlan plan = build_plan_linear(lp, mesh, DiffConfig{});
  EXPECT_EQ(plan.exit_rows, 10);
  EXPECT_NEAR(plan.tau, 0.01, 1e-15);
  PlanObjective obj(plan);
  obj.value(affine_net(5.0, 0.0, 0.0));
  const Eigen::VectorXd& R = obj.last_residuals();
  int hits = 0;
  for (Eigen::Index q = 0; q < plan.num_rows(); ++q) {
    if (plan.kind[q] == RowKind::Interior && plan.anchor[q](0) < 0.1) {
      EXPECT_NEAR(R(q), 5.0 / 0.05, 1e-9);
      ++hits;
    }
  }
  EXPECT_EQ(hits, 10);
}

TEST(LinearPlan, PenaltyWeightScalesInflowRows) {
  const LinearProblem lp = transport_x([](const Point&) { return 1.0; });
  const auto mesh = classify_faces(build_uniform_mesh(lp.domain, 0.1), lp);
  DiffConfig d;
  d.inflow_substitution = false;
  const NetworkParams zero = NetworkParams::zeros({2, {2}});
  // u = 0 against g = 1 on the inflow edge of length 1.
  EXPECT_NEAR(functional_linear(zero, lp, mesh, d, 1.0).inflow_penalty, 1.0, 1e-12);
  EXPECT_NEAR(functional_linear(zero, lp, mesh, d, 3.0).inflow_penalty, 3.0, 1e-12);
  EXPECT_EQ(functional_linear(zero, lp, mesh, d, 0.0).inflow_penalty, 0.0);
}

TEST(HclPlan, ConstantStateIsConserved) {
  auto rp = problem_riemann_quartic();
  HCLProblem hp = time_block(rp.problem, 0.0, 0.2);
  hp.g = hp.u0 = [](const Point&) { return 0.7; };
  const auto mesh = classify_faces(build_uniform_mesh(hp.spacetime, 0.05), hp);
  NetworkParams p = NetworkParams::zeros({2, {3}});
  p.linear(0) = 0.7;
  const FunctionalValue v = functional_hcl(p, hp, mesh, DiffConfig{});
  EXPECT_LT(v.total, 1e-24);
  p.linear(0) = 0.5;
  const FunctionalValue w = functional_hcl(p, hp, mesh, DiffConfig{});
  EXPECT_GT(w.interior, 0.0);
  // Penalties: (0.2)^2 times the measure of E_- (0.2) and E_0 (2).
  EXPECT_NEAR(w.inflow_penalty, 0.04 * 0.2, 1e-12);
  EXPECT_NEAR(w.initial_penalty, 0.04 * 2.0, 1e-12);
}

TEST(HclPlan, InteriorSubdivisionsGiveOneRowPerControlVolume) {
  auto rp = problem_riemann_quartic();
  HCLProblem hp = time_block(rp.problem, 0.0, 0.2);
  auto mesh = classify_faces(build_uniform_mesh(hp.spacetime, 0.1), hp);
  set_interior_subdivisions(mesh, {2, 3, 1, 1});
  const ResidualPlan plan = build_plan_hcl(hp, mesh, DiffConfig{});
  int interior = 0;
  for (auto k : plan.kind) interior += k == RowKind::Interior;
  EXPECT_EQ(interior, 40 * 6);
  EXPECT_FALSE(plan.is_linear());
}

TEST(PlanGradient, MatchesFiniteDifferencesForNonlinearFlux) {
  auto rp = problem_riemann_quartic();
  HCLProblem hp = time_block(rp.problem, 0.0, 0.2);
  const auto mesh = classify_faces(build_uniform_mesh(hp.spacetime, 0.1), hp);
  const ResidualPlan plan = build_plan_hcl(hp, mesh, DiffConfig{});
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Eigen::VectorXd u(plan.num_points());
  for (Eigen::Index j = 0; j < u.size(); ++j) u(j) = U(rng);
  const Eigen::VectorXd du = plan_point_gradient(plan, u, plan_residuals(plan, u));
  const double h = 1e-6;
  for (Eigen::Index j = 0; j < u.size(); j += 7) {
    Eigen::VectorXd up = u, um = u;
    up(j) += h;
    um(j) -= h;
    const double fd = (plan_functional(plan, plan_residuals(plan, up)).total -
                       plan_functional(plan, plan_residuals(plan, um)).total) / (2 * h);
    EXPECT_NEAR(du(j), fd, 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Functional, PerCellIndicatorSquaresSumToInterior) {
  auto p61 = problem_advection_6_1();
  const auto mesh = classify_faces(build_uniform_mesh(p61.problem.domain, 0.1), p61.problem);
  const FunctionalValue v = functional_linear(affine_net(0.3, 1.0, -0.5), p61.problem, mesh, DiffConfig{}, 1.0);
  EXPECT_EQ(v.per_cell.size(), 100);
  EXPECT_NEAR(v.per_cell.squaredNorm(), v.interior, 1e-12 * v.interior);
  EXPECT_NEAR(v.total, v.interior + v.inflow_penalty + v.initial_penalty, 1e-14);
}

TEST(Metrics, RelativeL2AndGrid) {
  const EvalGrid g = make_midpoint_grid(BoxDomain::make({0, 0}, {1, 2}), 0.5);
  EXPECT_EQ(g.points.cols(), 8);
  EXPECT_NEAR(g.weights.sum(), 2.0, 1e-15);
  Eigen::VectorXd exact = Eigen::VectorXd::Constant(8, 2.0), approx = Eigen::VectorXd::Constant(8, 1.5);
  EXPECT_NEAR(relative_L2(approx, exact, g.weights), 0.25, 1e-15);
}

TEST(Metrics, GraphNormAndLossRatio) {
  const LinearProblem lp = transport_x([](const Point& x) { return 1.0 + x(1); });
  const auto mesh = classify_faces(build_uniform_mesh(lp.domain, 0.1), lp);
  const EvalGrid g = make_midpoint_grid(lp.domain, 0.05);
  ScalarField exact = [](const Point& x) { return 1.0 + x(1); };
  EXPECT_LT(graph_norm_error(affine_net(1.0, 0.0, 1.0), exact, lp, g, 0.01), 1e-12);
  // Error e = 0.1 x: ||e||^2 = 0.01/3, ||e_x||^2 = 0.01; ||u||^2 = 7/3, u_x = 0.
  const double ge = graph_norm_error(affine_net(1.0, 0.1, 1.0), exact, lp, g, 0.01);
  EXPECT_NEAR(ge, std::sqrt((0.01 / 3.0 + 0.01) / (7.0 / 3.0)), 1e-4);
  DiffConfig d;
  d.tau = 0.01;
  EXPECT_LT(loss_ratio(affine_net(1.0, 0.0, 1.0), lp, mesh, d), 1e-10);
}
