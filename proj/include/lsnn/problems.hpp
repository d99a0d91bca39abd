#pragma once

#include <cmath>
#include <string>

#include "lsnn/errors.hpp"
#include "lsnn/geometry.hpp"
#include "lsnn/network.hpp"
#include "lsnn/problem.hpp"

namespace lsnn {

struct ExactSolution {
  ScalarField eval;
  std::string interface_description;
};

inline double shock_speed(const Flux1& flux, double uL, double uR) {
  if (uL == uR) throw ParameterError("shock_speed: uL must differ from uR");
  return (flux(uL) - flux(uR)) / (uL - uR);
}

// Variable-velocity advection-reaction on (0,1)^2, beta = (1, 2x), with a
// discontinuity along y = x^2 + 1/5. The equation is divided by |beta| so the
// field has unit length; f is manufactured from the exact solution.
struct Advection61 {
  LinearProblem problem;
  ExactSolution exact;
};

inline double exact_advection_6_1(double x, double y) {
  const double k = (y < x * x + 0.2) ? 0.0 : 2.0;
  return (y - x * x + k) * std::exp(-x);
}

inline Advection61 problem_advection_6_1(double gamma = 1.0) {
  Advection61 out;
  auto& p = out.problem;
  p.domain = BoxDomain::make({0.0, 0.0}, {1.0, 1.0});
  p.beta = [](const Point& x) {
    const double s = std::sqrt(1.0 + 4.0 * x(0) * x(0));
    return make_point({1.0 / s, 2.0 * x(0) / s});
  };
  p.gamma = [gamma](const Point& x) { return gamma / std::sqrt(1.0 + 4.0 * x(0) * x(0)); };
  // u along (1, 2x) satisfies u_beta = -u branchwise, so f_raw = (gamma - 1) u.
  p.f = [gamma](const Point& x) {
    return (gamma - 1.0) * exact_advection_6_1(x(0), x(1)) / std::sqrt(1.0 + 4.0 * x(0) * x(0));
  };
  // The exact solution restricted to x = 0 and y = 0.
  p.g = [](const Point& x) { return exact_advection_6_1(x(0), x(1)); };
  out.exact.eval = [](const Point& x) { return exact_advection_6_1(x(0), x(1)); };
  out.exact.interface_description = "y = x^2 + 1/5";
  return out;
}

struct ConservationBenchmark {
  HCLProblem problem;
  ExactSolution exact;
  std::vector<double> block_boundaries;
};

// Riemann problem for f(u) = u^4/4 with u_L = 1, u_R = 0: a shock of speed 1/4.
inline ConservationBenchmark problem_riemann_quartic() {
  ConservationBenchmark out;
  auto& p = out.problem;
  p.flux.f = {[](double u) { return 0.25 * u * u * u * u; }};
  p.flux.df = {[](double u) { return u * u * u; }};
  p.spacetime = BoxDomain::make({-1.0, 0.0}, {1.0, 0.4});
  out.exact.eval = [](const Point& x) { return x(0) < 0.25 * x(1) ? 1.0 : 0.0; };
  out.exact.interface_description = "x = t/4";
  p.g = out.exact.eval;
  p.u0 = out.exact.eval;
  out.block_boundaries = {0.0, 0.2, 0.4};
  return out;
}

inline double exact_burgers_2d(double x, double y, double t) {
  if (x < 0.5 - 3.0 * t / 5.0) return y > 0.5 + 3.0 * t / 20.0 ? -0.2 : 0.5;
  if (x < 0.5 - t / 4.0) return y > -8.0 * x / 7.0 + 15.0 / 14.0 - 15.0 * t / 28.0 ? -1.0 : 0.5;
  if (x < 0.5 + t / 2.0) return y > x / 6.0 + 5.0 / 12.0 - 5.0 * t / 24.0 ? -1.0 : 0.5;
  if (x < 0.5 + 4.0 * t / 5.0) {
    const double s = x + t - 0.5;
    return y > x - 5.0 / (18.0 * t) * s * s ? -1.0 : (2.0 * x - 1.0) / (2.0 * t);
  }
  return y > 0.5 - t / 10.0 ? -1.0 : 0.8;
}

// 2D inviscid Burgers, f(u) = (u^2/2, u^2/2), four-state initial data.
inline ConservationBenchmark problem_burgers_2d() {
  ConservationBenchmark out;
  auto& p = out.problem;
  auto half_sq = [](double u) { return 0.5 * u * u; };
  auto ident = [](double u) { return u; };
  p.flux.f = {half_sq, half_sq};
  p.flux.df = {ident, ident};
  p.spacetime = BoxDomain::make({0.0, 0.0, 0.0}, {1.0, 1.0, 0.5});
  out.exact.eval = [](const Point& x) { return exact_burgers_2d(x(0), x(1), x(2)); };
  out.exact.interface_description = "two shocks and a rarefaction fan";
  p.g = out.exact.eval;
  p.u0 = out.exact.eval;
  out.block_boundaries = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  return out;
}

// 1D fit target with kinks at 1/4, 1/2, 3/4.
inline FitProblem problem_fit_three_kinks() {
  FitProblem p;
  p.domain = BoxDomain::make({0.0}, {1.0});
  p.target = [](const Point& x) {
    return relu(x(0) - 0.25) - 2.0 * relu(x(0) - 0.5) + 1.5 * relu(x(0) - 0.75);
  };
  return p;
}

// Restrict a conservation-law problem to the time slab (t0, t1).
inline HCLProblem time_block(const HCLProblem& p, double t0, double t1) {
  HCLProblem out = p;
  const int ta = p.spatial_dim();
  out.spacetime.lower(ta) = t0;
  out.spacetime.upper(ta) = t1;
  out.spacetime.validate();
  return out;
}

}  // namespace lsnn
