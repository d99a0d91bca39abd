#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <string>

#include "lsnn/errors.hpp"

namespace lsnn {

// Points live in at most four coordinates (3 space + time); the fixed
// upper bound keeps them off the heap.
inline constexpr int kMaxDim = 4;
using Point = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

using ScalarField = std::function<double(const Point&)>;
using VectorField = std::function<Point(const Point&)>;

inline Point make_point(std::initializer_list<double> values) {
  Point p(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double v : values) p(i++) = v;
  return p;
}

// Axis-aligned box (lower, upper). For space-time problems the last axis is time.
struct BoxDomain {
  Point lower;
  Point upper;

  int dim() const { return static_cast<int>(lower.size()); }

  double extent(int axis) const { return upper(axis) - lower(axis); }

  double volume() const {
    double v = 1.0;
    for (int a = 0; a < dim(); ++a) v *= extent(a);
    return v;
  }

  bool contains(const Point& p, double tol = 0.0) const {
    for (int a = 0; a < dim(); ++a) {
      if (p(a) < lower(a) - tol || p(a) > upper(a) + tol) return false;
    }
    return true;
  }

  void validate() const {
    if (lower.size() != upper.size()) throw ShapeError("BoxDomain: lower/upper size mismatch");
    if (dim() < 1 || dim() > 3) throw ShapeError("BoxDomain: dimension must be 1..3");
    for (int a = 0; a < dim(); ++a) {
      if (!(lower(a) < upper(a))) {
        std::ostringstream os;
        os << "BoxDomain: lower >= upper on axis " << a;
        throw ParameterError(os.str());
      }
    }
  }

  static BoxDomain make(std::initializer_list<double> lo, std::initializer_list<double> hi) {
    BoxDomain d{make_point(lo), make_point(hi)};
    d.validate();
    return d;
  }
};

// Distance along `dir` from `origin` until the ray leaves the closed box.
// Returns +inf when the ray never leaves (dir == 0).
inline double ray_exit_distance(const BoxDomain& box, const Point& origin, const Point& dir) {
  double t_exit = std::numeric_limits<double>::infinity();
  for (int a = 0; a < box.dim(); ++a) {
    if (dir(a) > 0.0) {
      t_exit = std::min(t_exit, (box.upper(a) - origin(a)) / dir(a));
    } else if (dir(a) < 0.0) {
      t_exit = std::min(t_exit, (box.lower(a) - origin(a)) / dir(a));
    }
  }
  return std::max(t_exit, 0.0);
}

// Point where the ray leaves the box, clamped onto it. Round-off (or FMA
// contraction) would otherwise leave it ~1e-18 off the face, and data with a
// branch on the face coordinate would take the wrong side.
inline Point ray_exit_point(const BoxDomain& box, const Point& origin, const Point& dir) {
  const double t = ray_exit_distance(box, origin, dir);
  Point e = origin + t * dir;
  for (int a = 0; a < box.dim(); ++a) {
    const double tol = 1e-12 * std::max(1.0, box.upper(a) - box.lower(a));
    if (e(a) < box.lower(a) + tol) e(a) = box.lower(a);
    if (e(a) > box.upper(a) - tol) e(a) = box.upper(a);
  }
  return e;
}

}  // namespace lsnn
