#pragma once

#include <cmath>
#include <fstream>
#include <vector>

#include "lsnn/batch.hpp"
#include "lsnn/diff_ops.hpp"
#include "lsnn/residual_plan.hpp"

namespace lsnn {

// Interior residuals D_{beta,tau}u + gamma u - f at the quadrature points, in mesh order.
inline Eigen::VectorXd residuals_linear(const NetworkParams& params, const LinearProblem& problem,
                                        const IntegrationMesh& mesh, const DiffConfig& cfg) {
  DiffConfig c = cfg;
  c.penalty_weight = 0.0;
  PlanObjective obj(build_plan_linear(problem, mesh, c));
  obj.value(params);
  return obj.last_residuals();
}

inline FunctionalValue functional_linear(const NetworkParams& params, const LinearProblem& problem,
                                         const IntegrationMesh& mesh, const DiffConfig& cfg, double penalty_weight) {
  DiffConfig c = cfg;
  c.penalty_weight = penalty_weight;
  PlanObjective obj(build_plan_linear(problem, mesh, c));
  return obj.value(params);
}

inline FunctionalValue functional_hcl(const NetworkParams& params, const HCLProblem& problem,
                                      const IntegrationMesh& mesh, const DiffConfig& cfg) {
  PlanObjective obj(build_plan_hcl(problem, mesh, cfg));
  return obj.value(params);
}

// Tensor midpoint grid used for error metrics.
struct EvalGrid {
  Eigen::MatrixXd points;  // dim x N
  Eigen::VectorXd weights;
};

inline EvalGrid make_midpoint_grid(const BoxDomain& domain, const std::vector<double>& h) {
  const int d = domain.dim();
  std::array<long, kMaxDim> n{1, 1, 1, 1};
  long total = 1;
  for (int a = 0; a < d; ++a) {
    n[a] = std::max(1L, static_cast<long>(std::ceil(domain.extent(a) / h[a] - 1e-9)));
    total *= n[a];
  }
  EvalGrid g;
  g.points.resize(d, total);
  g.weights = Eigen::VectorXd::Constant(total, domain.volume() / static_cast<double>(total));
  for (long idx = 0; idx < total; ++idx) {
    long rem = idx;
    for (int a = 0; a < d; ++a) {
      const long k = rem % n[a];
      rem /= n[a];
      g.points(a, idx) = domain.lower(a) + domain.extent(a) * (k + 0.5) / static_cast<double>(n[a]);
    }
  }
  return g;
}

inline EvalGrid make_midpoint_grid(const BoxDomain& domain, double h) {
  return make_midpoint_grid(domain, std::vector<double>(domain.dim(), h));
}

inline Eigen::VectorXd sample(const ScalarField& fn, const Eigen::MatrixXd& pts) {
  Eigen::VectorXd v(pts.cols());
  for (Eigen::Index j = 0; j < pts.cols(); ++j) v(j) = fn(Point(pts.col(j)));
  return v;
}

inline Eigen::VectorXd evaluate_batch(const NetworkParams& params, const Eigen::MatrixXd& pts, int threads = 1) {
  BatchEvaluator ev(pts, threads);
  return ev.forward(params);
}

// sqrt(sum w (u - u_hat)^2) / sqrt(sum w u^2).
inline double relative_L2(const Eigen::VectorXd& approx, const Eigen::VectorXd& exact, const Eigen::VectorXd& w) {
  const double num = (w.array() * (exact - approx).array().square()).sum();
  const double den = (w.array() * exact.array().square()).sum();
  return std::sqrt(num) / std::sqrt(den);
}

inline double relative_L2(const NetworkParams& params, const ScalarField& exact, const EvalGrid& grid) {
  return relative_L2(evaluate_batch(params, grid.points), sample(exact, grid.points), grid.weights);
}

namespace detail {

// sum w (e^2 + (D_{beta,tau} e)^2) where the backward step is clipped at the boundary.
inline double graph_norm_sq(const ScalarField& e, const LinearProblem& problem, const EvalGrid& grid, double tau) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < grid.points.cols(); ++j) {
    const Point x = grid.points.col(j);
    const Point b = problem.beta(x);
    const double t = std::min(tau, ray_exit_distance(problem.domain, x, Point(-b)));
    const double ex = e(x);
    const double de = (ex - e(Point(x - t * b))) / t;
    s += grid.weights(j) * (ex * ex + de * de);
  }
  return s;
}

}  // namespace detail

// Relative error in the beta-graph norm sqrt(||e||^2 + ||D_{beta,tau} e||^2).
inline double graph_norm_error(const NetworkParams& params, const ScalarField& exact, const LinearProblem& problem,
                               const EvalGrid& grid, double tau) {
  const ScalarField err = [&](const Point& x) { return exact(x) - evaluate(params, x); };
  return std::sqrt(detail::graph_norm_sq(err, problem, grid, tau) / detail::graph_norm_sq(exact, problem, grid, tau));
}

// L^{1/2}(u; data) / L^{1/2}(u; 0): the functional with the problem data
// against the same functional with f and g set to zero.
inline double loss_ratio(const NetworkParams& params, const LinearProblem& problem, const IntegrationMesh& mesh,
                         const DiffConfig& cfg) {
  LinearProblem zero = problem;
  zero.f = [](const Point&) { return 0.0; };
  zero.g = [](const Point&) { return 0.0; };
  const double with_data = functional_linear(params, problem, mesh, cfg, cfg.penalty_weight).total;
  const double without = functional_linear(params, zero, mesh, cfg, cfg.penalty_weight).total;
  return std::sqrt(with_data / without);
}

}  // namespace lsnn
