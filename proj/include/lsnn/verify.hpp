#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "lsnn/diff_ops.hpp"
#include "lsnn/least_squares.hpp"
#include "lsnn/optimize.hpp"
#include "lsnn/problems.hpp"

namespace lsnn {

struct VerifyCheck {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Exact integral of F_axis(u) over a face of a 1D space-time cell, where u
// jumps from uL (x < s t) to uR along a straight shock through the origin.
inline double riemann_face_integral(const Cell& c, const Face& f, const TotalFlux& flux, double uL, double uR, double s) {
  const double FL = flux.component(f.axis, uL), FR = flux.component(f.axis, uR);
  double lenL = 0.0, len = 0.0;
  if (f.axis == 0) {
    const double x0 = f.side == 0 ? c.lo(0) : c.hi(0);
    const double a = c.lo(1), b = c.hi(1);
    len = b - a;
    // left state where t > x0 / s
    if (s > 0.0) {
      const double tc = x0 / s;
      lenL = std::clamp(b - std::max(a, tc), 0.0, len);
    } else {
      lenL = x0 < 0.0 ? len : 0.0;
    }
  } else {
    const double t0 = f.side == 0 ? c.lo(1) : c.hi(1);
    const double a = c.lo(0), b = c.hi(0);
    len = b - a;
    lenL = std::clamp(s * t0 - a, 0.0, len);
  }
  return lenL * FL + (len - lenL) * FR;
}

// sum_K |K| (div_T F)^2 of the Riemann solution with shock speed s, using exact face integrals.
inline double riemann_divergence_functional(const IntegrationMesh& mesh, const TotalFlux& flux, double s) {
  double total = 0.0;
  for (const auto& c : mesh.cells) {
    const double dv = discrete_divergence(c, [&](const Cell& cc, const Face& f) {
      return riemann_face_integral(cc, f, flux, 1.0, 0.0, s);
    });
    total += c.volume() * dv * dv;
  }
  return total;
}

inline std::vector<VerifyCheck> run_verification(std::uint64_t seed = 7) {
  std::vector<VerifyCheck> out;

  {  // conservation of the exact shock
    auto rp = problem_riemann_quartic();
    const auto block = time_block(rp.problem, 0.0, 0.2);
    const IntegrationMesh mesh = build_uniform_mesh(block.spacetime, 0.01);
    const double exact = riemann_divergence_functional(mesh, rp.problem.flux, 0.25);
    const double wrong = riemann_divergence_functional(mesh, rp.problem.flux, 0.35);
    out.push_back({"RH functional at shock speed 1/4", exact, 1e-6, exact <= 1e-6});
    out.push_back({"RH functional at speed 0.35 (>= 100x the above)", wrong, 100.0 * exact, wrong >= 100.0 * exact});
  }

  {  // analytic vs central-difference gradient
    auto p61 = problem_advection_6_1();
    IntegrationMesh mesh = classify_faces(build_uniform_mesh(p61.problem.domain, 0.1), p61.problem);
    DiffConfig d;
    PlanObjective obj(build_plan_linear(p61.problem, mesh, d));
    InitConfig ic;
    ic.mode = InitMode::Random;
    ic.seed = seed;
    NetworkParams p = init_hidden({2, {10, 10}}, p61.problem.domain, ic);
    Eigen::VectorXd g;
    obj.value_and_grad(p, g);
    const Eigen::VectorXd x0 = p.flatten();
    auto loss = [&](const Eigen::VectorXd& x) { return obj.value(p.with_flat(x)).total; };
    const Eigen::VectorXd fd = fd_gradient(loss, x0, 1e-5);
    const double scale = std::max(1e-3 * g.cwiseAbs().maxCoeff(), 1e-12);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      worst = std::max(worst, std::abs(g(i) - fd(i)) / std::max(std::abs(g(i)), scale));
    }
    out.push_back({"gradient vs central differences (max rel)", worst, 1e-5, worst <= 1e-5});
  }

  {  // Gauss-Newton factorization on a 2-neuron 1D fit
    FitProblem fit = problem_fit_three_kinks();
    IntegrationMesh mesh = build_uniform_mesh(fit.domain, 0.05);
    ResidualPlan plan = build_plan_fit(fit, mesh);
    LinearStructure ls(plan);
    BatchEvaluator ev(plan.points);
    NetworkParams p = NetworkParams::zeros({1, {2}});
    p.layers[0].weights << 1.0, -1.0;
    p.layers[0].biases << -0.3, 0.7;
    p.linear << 0.1, 0.8, -0.5;
    const LayerGN gn = assemble_layer_gn(p, {0, 1}, ls, ev);
    // Brute force: J_q = dR_q / d(b_i, w_i) = c_i H(w_i x + b_i) (1, x).
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(plan.num_rows(), 4);
    for (Eigen::Index q = 0; q < plan.num_rows(); ++q) {
      const double x = plan.points(0, plan.terms[plan.row_start[q]].point);
      for (int i = 0; i < 2; ++i) {
        const double z = p.layers[0].weights(i, 0) * x + p.layers[0].biases(i);
        const double hz = z > 0.0 ? 1.0 : 0.0;
        J(q, 2 * i) = p.linear(i + 1) * hz;
        J(q, 2 * i + 1) = p.linear(i + 1) * hz * x;
      }
    }
    const Eigen::MatrixXd brute = 2.0 * J.transpose() * ls.w.asDiagonal() * J;
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(4, 4);
    for (int i = 0; i < 2; ++i) D.block(2 * i, 2 * i, 2, 2) = gn.Dc(i) * Eigen::Matrix2d::Identity();
    const Eigen::MatrixXd factored = 2.0 * D * gn.H * D;
    const double err = (brute - factored).cwiseAbs().maxCoeff() / brute.cwiseAbs().maxCoeff();
    out.push_back({"GN matrix = 2(D(c) x I) H (D(c) x I) (rel max)", err, 1e-10, err <= 1e-10});
  }

  {  // step function p1 against sqrt(eps/6)
    const double eps = 0.01;
    NetworkParams p1 = build_step_p1(make_point({1.0, 0.0}), 0.5, eps);
    const int n = 4000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = (i + 0.5) / n;
      const double e = (x < 0.5 ? 0.0 : 1.0) - evaluate(p1, make_point({x, 0.5}));
      s += e * e / n;
    }
    const double rel = std::abs(std::sqrt(s) / std::sqrt(eps / 6.0) - 1.0);
    out.push_back({"p1 L2 error vs sqrt(eps/6) (rel)", rel, 0.02, rel <= 0.02});
  }
  return out;
}

}  // namespace lsnn
