#pragma once

#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "lsnn/errors.hpp"
#include "lsnn/geometry.hpp"
#include "lsnn/mesh.hpp"

namespace lsnn {

using Flux1 = std::function<double(double)>;

// Linear advection-reaction: D_beta u + gamma u = f in the domain, u = g on the inflow boundary.
struct LinearProblem {
  BoxDomain domain;
  VectorField beta;  // unit magnitude
  ScalarField gamma;
  ScalarField f;
  ScalarField g;

  // Checks |beta| = 1 on a small lattice of sample points.
  void validate(int samples_per_axis = 5) const {
    domain.validate();
    if (!beta || !gamma || !f || !g) throw ParameterError("LinearProblem: missing field");
    const int d = domain.dim();
    int total = 1;
    for (int a = 0; a < d; ++a) total *= samples_per_axis;
    for (int idx = 0; idx < total; ++idx) {
      Point x(d);
      int rem = idx;
      for (int a = 0; a < d; ++a) {
        x(a) = domain.lower(a) + domain.extent(a) * (rem % samples_per_axis + 0.5) / samples_per_axis;
        rem /= samples_per_axis;
      }
      const Point b = beta(x);
      if (b.size() != d) throw ShapeError("LinearProblem: beta has wrong dimension");
      if (std::abs(b.norm() - 1.0) > 1e-9) throw ParameterError("LinearProblem: beta must have unit magnitude");
    }
  }
};

// Space-time total flux F(u) = (f_1(u), ..., f_d(u), u).
struct TotalFlux {
  std::vector<Flux1> f;
  std::vector<Flux1> df;

  int spatial_dim() const { return static_cast<int>(f.size()); }

  Point operator()(double u) const {
    Point out(spatial_dim() + 1);
    for (int a = 0; a < spatial_dim(); ++a) out(a) = f[a](u);
    out(spatial_dim()) = u;
    return out;
  }

  // Component along axis a of F(u); the last axis is time.
  double component(int axis, double u) const { return axis < spatial_dim() ? f[axis](u) : u; }

  // f'(u) . n_spatial for an axis-aligned normal.
  double characteristic_speed(int axis, double u) const { return axis < spatial_dim() ? df[axis](u) : 1.0; }
};

// Conservation law div F(u) = 0 on space x (t0, t1): the last axis is time.
struct HCLProblem {
  TotalFlux flux;
  ScalarField g;   // inflow data on the spatial boundary (space-time point)
  ScalarField u0;  // data on the lower time face (space-time point, t = t0)
  BoxDomain spacetime;

  int spatial_dim() const { return spacetime.dim() - 1; }

  void validate() const {
    spacetime.validate();
    if (flux.spatial_dim() != spatial_dim() || flux.df.size() != flux.f.size()) {
      throw ShapeError("HCLProblem: flux components do not match spatial dimension");
    }
    if (!g || !u0) throw ParameterError("HCLProblem: missing boundary data");
  }
};

// Plain L2 fit u ~ target; a linear least-squares test problem.
struct FitProblem {
  BoxDomain domain;
  ScalarField target;
};

using ProblemSpec = std::variant<LinearProblem, HCLProblem, FitProblem>;

// Assign E_-, E_0 for the given problem and store the rule on the mesh so refinement can re-derive them.
inline IntegrationMesh classify_faces(IntegrationMesh mesh, const ProblemSpec& problem) {
  if (const auto* lp = std::get_if<LinearProblem>(&problem)) {
    VectorField beta = lp->beta;
    mesh.classifier = [beta](const Cell& c, const Face& f) {
      const Point x = c.face_centroid(f);
      const Point b = beta(x);
      if (b.norm() <= 1e-14) throw DegenerateFaceError("advection field vanishes at a boundary face centroid");
      return f.normal_sign() * b(f.axis) < 0.0 ? FaceClass::Inflow : FaceClass::Other;
    };
  } else if (const auto* hp = std::get_if<HCLProblem>(&problem)) {
    const int time_axis = hp->spatial_dim();
    TotalFlux flux = hp->flux;
    ScalarField g = hp->g;
    mesh.classifier = [=](const Cell& c, const Face& f) {
      if (f.axis == time_axis) return f.side == 0 ? FaceClass::Initial : FaceClass::Other;
      const Point x = c.face_centroid(f);
      const double speed = flux.characteristic_speed(f.axis, g(x));
      return f.normal_sign() * speed < 0.0 ? FaceClass::Inflow : FaceClass::Other;
    };
  } else {
    mesh.classifier = [](const Cell&, const Face&) { return FaceClass::Other; };
  }
  mesh.rebuild_faces();
  return mesh;
}

}  // namespace lsnn
