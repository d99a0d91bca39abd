#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "lsnn/errors.hpp"
#include "lsnn/geometry.hpp"
#include "lsnn/mesh.hpp"
#include "lsnn/network.hpp"
#include "lsnn/problem.hpp"

namespace lsnn {

struct DiffConfig {
  double tau = 0.0;                   // <= 0 selects h_min / 10 of the mesh
  QuadRule boundary_rule;             // rule for face integrals (div and penalties)
  bool inflow_substitution = true;    // exact-exit variant with g on inflow-adjacent cells
  double penalty_weight = 1.0;        // weight of the inflow penalty (linear problems)

  double resolve_tau(const IntegrationMesh& mesh) const { return tau > 0.0 ? tau : mesh.min_extent() / 10.0; }
};

// (v(x) - v(x - tau beta(x))) / tau.
inline double directional_derivative(const ScalarField& v, const Point& x, const VectorField& beta, double tau) {
  if (!(tau > 0.0)) throw ParameterError("directional_derivative: tau must be positive");
  return (v(x) - v(x - tau * beta(x))) / tau;
}

struct InflowDerivative {
  double value = 0.0;
  double tau = 0.0;
  Point exit;
  bool used_inflow = false;  // false: fell back to the plain difference
};

// Backward step chosen so x_K - tau beta(x_K) lands on the boundary; g replaces v there.
// Falls back to the plain difference with `fallback_tau` if the exit lies farther than `max_tau`.
inline InflowDerivative directional_derivative_inflow(const ScalarField& v, const Point& xk, const VectorField& beta,
                                                      const ScalarField& g, const BoxDomain& domain,
                                                      double fallback_tau = 0.0,
                                                      double max_tau = std::numeric_limits<double>::infinity()) {
  const Point b = beta(xk);
  const double t = ray_exit_distance(domain, xk, Point(-b));
  InflowDerivative out;
  if (t > 0.0 && t <= max_tau) {
    out.tau = t;
    out.exit = xk - t * b;
    out.value = (v(xk) - g(out.exit)) / t;
    out.used_inflow = true;
    return out;
  }
  if (!(fallback_tau > 0.0)) throw ParameterError("directional_derivative_inflow: no boundary exit and no fallback tau");
  out.tau = fallback_tau;
  out.exit = xk - fallback_tau * b;
  out.value = (v(xk) - v(out.exit)) / fallback_tau;
  return out;
}

// Integral of F . n over one face (unsigned, the caller adds the normal sign).
using FaceFluxIntegrator = std::function<double(const Cell&, const Face&)>;

// (1/|K|) sum over faces of the outward flux, with a caller-supplied face integrator.
inline double discrete_divergence(const Cell& cell, const FaceFluxIntegrator& integrate) {
  double s = 0.0;
  for (int a = 0; a < cell.dim(); ++a) {
    for (int side = 0; side < 2; ++side) {
      const Face f{a, side};
      s += f.normal_sign() * integrate(cell, f);
    }
  }
  return s / cell.volume();
}

inline double discrete_divergence(const VectorField& flux_field, const Cell& cell, const QuadRule& rule) {
  return discrete_divergence(cell, [&](const Cell& c, const Face& f) {
    return face_integral(c, f, rule, [&](const Point& x) { return flux_field(x)(f.axis); });
  });
}

struct FaceSubstitution {
  Face face;
  ScalarField data;  // value of u to use on this face (g or u0)
};

// Discrete divergence of F(u) for a network u, with boundary/initial data
// substituted on the listed faces (several faces are allowed on corner cells).
inline double discrete_divergence_nn(const NetworkParams& params, const TotalFlux& flux, const Cell& cell,
                                     const QuadRule& rule, const std::vector<FaceSubstitution>& subs = {}) {
  return discrete_divergence(cell, [&](const Cell& c, const Face& f) {
    const ScalarField* data = nullptr;
    for (const auto& s : subs) {
      if (s.face == f) data = &s.data;
    }
    return face_integral(c, f, rule, [&](const Point& x) {
      const double u = data ? (*data)(x) : evaluate(params, x);
      return flux.component(f.axis, u);
    });
  });
}

}  // namespace lsnn
