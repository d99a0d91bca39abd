#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "lsnn/errors.hpp"
#include "lsnn/geometry.hpp"
#include "lsnn/network.hpp"

namespace lsnn {

enum class QuadKind { Midpoint, CompositeTrapezoid, CompositeMidpoint };

inline std::string to_string(QuadKind k) {
  switch (k) {
    case QuadKind::Midpoint: return "midpoint";
    case QuadKind::CompositeTrapezoid: return "composite_trapezoid";
    case QuadKind::CompositeMidpoint: return "composite_midpoint";
  }
  return "?";
}

inline QuadKind quad_kind_from_string(const std::string& s) {
  if (s == "midpoint") return QuadKind::Midpoint;
  if (s == "composite_trapezoid" || s == "trapezoid") return QuadKind::CompositeTrapezoid;
  if (s == "composite_midpoint") return QuadKind::CompositeMidpoint;
  throw ConfigError("unknown quadrature rule '" + s + "'");
}

// Face rule. `subintervals[a]` is the number of pieces along axis a
// (m_hat, n_hat, k_hat for x, y/t, t). Plain Midpoint ignores them.
struct QuadRule {
  QuadKind kind = QuadKind::Midpoint;
  std::array<int, kMaxDim> subintervals{1, 1, 1, 1};

  int pieces(int axis) const { return kind == QuadKind::Midpoint ? 1 : subintervals[axis]; }

  void validate() const {
    for (int s : subintervals) {
      if (s < 1) throw ParameterError("QuadRule: subintervals must be >= 1");
    }
  }

  static QuadRule composite(QuadKind kind, std::initializer_list<int> subs) {
    QuadRule r;
    r.kind = kind;
    int a = 0;
    for (int s : subs) r.subintervals[a++] = s;
    r.validate();
    return r;
  }
};

struct QuadPoint {
  Point x;
  double w = 0.0;
};

// Face descriptor: normal axis and side (0 = lower, 1 = upper).
struct Face {
  int axis = 0;
  int side = 0;
  double normal_sign() const { return side == 0 ? -1.0 : 1.0; }
  bool operator==(const Face&) const = default;
};

enum class FaceClass { Inflow, Initial, Other };

inline std::string to_string(FaceClass c) {
  switch (c) {
    case FaceClass::Inflow: return "inflow";
    case FaceClass::Initial: return "initial";
    case FaceClass::Other: return "other";
  }
  return "?";
}

struct FaceRef {
  int cell = 0;
  Face face;
};

struct Cell {
  Point lo, hi;
  int level = 0;
  std::vector<QuadPoint> quad_points;

  int dim() const { return static_cast<int>(lo.size()); }
  double extent(int a) const { return hi(a) - lo(a); }
  double volume() const {
    double v = 1.0;
    for (int a = 0; a < dim(); ++a) v *= extent(a);
    return v;
  }
  Point centroid() const { return 0.5 * (lo + hi); }
  double diameter() const { return (hi - lo).norm(); }
  double min_extent() const { return (hi - lo).minCoeff(); }

  double face_area(int axis) const {
    double a = 1.0;
    for (int b = 0; b < dim(); ++b) {
      if (b != axis) a *= extent(b);
    }
    return a;
  }

  Point face_centroid(const Face& f) const {
    Point c = centroid();
    c(f.axis) = f.side == 0 ? lo(f.axis) : hi(f.axis);
    return c;
  }

  // Closed-open membership [lo, hi); `upper_closed` marks axes where the cell
  // touches the domain's upper boundary.
  bool contains(const Point& p, const std::array<bool, kMaxDim>& upper_closed) const {
    for (int a = 0; a < dim(); ++a) {
      if (p(a) < lo(a)) return false;
      if (upper_closed[a] ? p(a) > hi(a) : p(a) >= hi(a)) return false;
    }
    return true;
  }
};

// Equal-subdivision boxes of a cell: sub-box midpoints are the interior
// quadrature points, the boxes themselves are their control volumes.
inline std::vector<Cell> control_volumes(const Cell& cell, const std::array<int, kMaxDim>& subs) {
  const int d = cell.dim();
  int total = 1;
  for (int a = 0; a < d; ++a) total *= subs[a];
  std::vector<Cell> out;
  out.reserve(total);
  for (int idx = 0; idx < total; ++idx) {
    Cell sub;
    sub.lo = cell.lo;
    sub.hi = cell.hi;
    sub.level = cell.level;
    int rem = idx;
    for (int a = 0; a < d; ++a) {
      const int k = rem % subs[a];
      rem /= subs[a];
      const double h = cell.extent(a) / subs[a];
      sub.lo(a) = cell.lo(a) + k * h;
      sub.hi(a) = (k + 1 == subs[a]) ? cell.hi(a) : cell.lo(a) + (k + 1) * h;
    }
    out.push_back(std::move(sub));
  }
  return out;
}

// Quadrature nodes on one face of `cell` under `rule`.
inline std::vector<QuadPoint> face_quadrature(const Cell& cell, const Face& face, const QuadRule& rule) {
  const int d = cell.dim();
  std::vector<int> tang;
  for (int a = 0; a < d; ++a) {
    if (a != face.axis) tang.push_back(a);
  }
  // 1D nodes/weights per tangential axis.
  std::vector<std::vector<std::pair<double, double>>> axis_nodes;
  for (int a : tang) {
    const int m = rule.pieces(a);
    const double L = cell.extent(a);
    const double h = L / m;
    std::vector<std::pair<double, double>> nodes;
    if (rule.kind == QuadKind::CompositeTrapezoid) {
      for (int k = 0; k <= m; ++k) {
        const double x = (k == m) ? cell.hi(a) : cell.lo(a) + k * h;
        nodes.emplace_back(x, (k == 0 || k == m) ? 0.5 * h : h);
      }
    } else {
      for (int k = 0; k < m; ++k) nodes.emplace_back(cell.lo(a) + (k + 0.5) * h, h);
    }
    axis_nodes.push_back(std::move(nodes));
  }
  std::vector<QuadPoint> out;
  std::size_t total = 1;
  for (const auto& n : axis_nodes) total *= n.size();
  out.reserve(total);
  for (std::size_t idx = 0; idx < total; ++idx) {
    QuadPoint q;
    q.x = Point(d);
    q.x(face.axis) = face.side == 0 ? cell.lo(face.axis) : cell.hi(face.axis);
    q.w = 1.0;
    std::size_t rem = idx;
    for (std::size_t t = 0; t < tang.size(); ++t) {
      const auto& nodes = axis_nodes[t];
      const auto& [x, w] = nodes[rem % nodes.size()];
      rem /= nodes.size();
      q.x(tang[t]) = x;
      q.w *= w;
    }
    out.push_back(std::move(q));
  }
  return out;
}

inline double cell_integral(const Cell& cell, const std::function<double(const Point&)>& integrand) {
  double s = 0.0;
  for (const auto& q : cell.quad_points) s += q.w * integrand(q.x);
  return s;
}

// Unsigned face integral; the caller applies the outward normal sign.
inline double face_integral(const Cell& cell, const Face& face, const QuadRule& rule,
                            const std::function<double(const Point&)>& integrand) {
  double s = 0.0;
  for (const auto& q : face_quadrature(cell, face, rule)) s += q.w * integrand(q.x);
  return s;
}

// Classifier for boundary faces: (owning cell, face) -> class.
using FaceClassifier = std::function<FaceClass(const Cell&, const Face&)>;

struct IntegrationMesh {
  BoxDomain domain;
  std::vector<Cell> cells;
  std::array<int, kMaxDim> interior_subdivisions{1, 1, 1, 1};
  std::vector<FaceRef> inflow_faces;
  std::vector<FaceRef> initial_faces;
  std::vector<FaceRef> other_faces;
  FaceClassifier classifier;
  std::vector<double> steps;     // uniform build steps actually used
  bool steps_adjusted = false;   // a requested step was shrunk to divide the axis

  int dim() const { return domain.dim(); }

  double total_volume() const {
    double v = 0.0;
    for (const auto& c : cells) v += c.volume();
    return v;
  }

  double min_extent() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& c : cells) m = std::min(m, c.min_extent());
    return m;
  }

  bool on_boundary(const Cell& c, const Face& f) const {
    const double tol = 1e-12 * domain.extent(f.axis);
    return f.side == 0 ? std::abs(c.lo(f.axis) - domain.lower(f.axis)) <= tol
                       : std::abs(c.hi(f.axis) - domain.upper(f.axis)) <= tol;
  }

  // Index of the cell containing p (closed-open, top boundary owned by the last cell); -1 if outside.
  int locate(const Point& p) const {
    std::array<bool, kMaxDim> closed{};
    for (std::size_t i = 0; i < cells.size(); ++i) {
      for (int a = 0; a < dim(); ++a) closed[a] = on_boundary(cells[i], Face{a, 1});
      if (cells[i].contains(p, closed)) return static_cast<int>(i);
    }
    return -1;
  }

  void rebuild_quadrature() {
    for (auto& c : cells) {
      c.quad_points.clear();
      for (const auto& cv : control_volumes(c, interior_subdivisions)) {
        c.quad_points.push_back({cv.centroid(), cv.volume()});
      }
    }
  }

  // Re-derive E_-, E_0 and the remaining boundary faces from the stored classifier.
  void rebuild_faces() {
    inflow_faces.clear();
    initial_faces.clear();
    other_faces.clear();
    for (std::size_t i = 0; i < cells.size(); ++i) {
      for (int a = 0; a < dim(); ++a) {
        for (int s = 0; s < 2; ++s) {
          const Face f{a, s};
          if (!on_boundary(cells[i], f)) continue;
          const FaceClass cls = classifier ? classifier(cells[i], f) : FaceClass::Other;
          const FaceRef ref{static_cast<int>(i), f};
          if (cls == FaceClass::Inflow) {
            inflow_faces.push_back(ref);
          } else if (cls == FaceClass::Initial) {
            initial_faces.push_back(ref);
          } else {
            other_faces.push_back(ref);
          }
        }
      }
    }
  }

  // Inflow/initial faces owned by each cell.
  std::vector<std::vector<std::pair<Face, FaceClass>>> special_face_table() const {
    std::vector<std::vector<std::pair<Face, FaceClass>>> t(cells.size());
    for (const auto& r : inflow_faces) t[r.cell].emplace_back(r.face, FaceClass::Inflow);
    for (const auto& r : initial_faces) t[r.cell].emplace_back(r.face, FaceClass::Initial);
    return t;
  }
};

// Regular grid with per-axis steps. A step that does not divide its axis is
// shrunk to L / ceil(L / h) and the mesh records the adjustment.
inline IntegrationMesh build_uniform_mesh(const BoxDomain& domain, const std::vector<double>& h) {
  domain.validate();
  if (static_cast<int>(h.size()) != domain.dim()) throw ShapeError("build_uniform_mesh: step count != domain dim");
  IntegrationMesh mesh;
  mesh.domain = domain;
  const int d = domain.dim();
  std::array<long, kMaxDim> n{1, 1, 1, 1};
  for (int a = 0; a < d; ++a) {
    if (!(h[a] > 0.0)) throw ParameterError("build_uniform_mesh: step must be positive");
    const double L = domain.extent(a);
    const double ratio = L / h[a];
    const double r = std::round(ratio);
    if (std::abs(ratio - r) <= 1e-9 * std::max(1.0, ratio) && r >= 1.0) {
      n[a] = static_cast<long>(r);
    } else {
      n[a] = static_cast<long>(std::ceil(ratio));
      mesh.steps_adjusted = true;
    }
    mesh.steps.push_back(L / static_cast<double>(n[a]));
  }
  long total = 1;
  for (int a = 0; a < d; ++a) total *= n[a];
  mesh.cells.reserve(total);
  auto coord = [&](int a, long k) {
    if (k == n[a]) return domain.upper(a);
    return domain.lower(a) + domain.extent(a) * static_cast<double>(k) / static_cast<double>(n[a]);
  };
  for (long idx = 0; idx < total; ++idx) {
    Cell c;
    c.lo = Point(d);
    c.hi = Point(d);
    long rem = idx;
    for (int a = 0; a < d; ++a) {
      const long k = rem % n[a];
      rem /= n[a];
      c.lo(a) = coord(a, k);
      c.hi(a) = coord(a, k + 1);
    }
    mesh.cells.push_back(std::move(c));
  }
  mesh.rebuild_quadrature();
  mesh.rebuild_faces();
  return mesh;
}

inline IntegrationMesh build_uniform_mesh(const BoxDomain& domain, double h) {
  return build_uniform_mesh(domain, std::vector<double>(domain.dim(), h));
}

inline void set_interior_subdivisions(IntegrationMesh& mesh, const std::array<int, kMaxDim>& subs) {
  for (int a = 0; a < mesh.dim(); ++a) {
    if (subs[a] < 1) throw ParameterError("interior subdivisions must be >= 1");
  }
  mesh.interior_subdivisions = subs;
  mesh.rebuild_quadrature();
}

// Bisect every marked cell on all axes. Children replace their parent in place.
inline IntegrationMesh refine_cells(const IntegrationMesh& mesh, const std::vector<int>& marked) {
  std::vector<char> flag(mesh.cells.size(), 0);
  for (int i : marked) {
    if (i < 0 || i >= static_cast<int>(mesh.cells.size())) throw ParameterError("refine_cells: index out of range");
    flag[i] = 1;
  }
  IntegrationMesh out = mesh;
  out.cells.clear();
  const int d = mesh.dim();
  for (std::size_t i = 0; i < mesh.cells.size(); ++i) {
    const Cell& c = mesh.cells[i];
    if (!flag[i]) {
      out.cells.push_back(c);
      continue;
    }
    const Point mid = c.centroid();
    for (int k = 0; k < (1 << d); ++k) {
      Cell ch;
      ch.lo = c.lo;
      ch.hi = c.hi;
      ch.level = c.level + 1;
      for (int a = 0; a < d; ++a) {
        if (k & (1 << a)) {
          ch.lo(a) = mid(a);
        } else {
          ch.hi(a) = mid(a);
        }
      }
      out.cells.push_back(std::move(ch));
    }
  }
  out.rebuild_quadrature();
  out.rebuild_faces();
  return out;
}

enum class MarkKind { Bulk, Average };

struct MarkStrategy {
  MarkKind kind = MarkKind::Bulk;
  double theta = 0.5;
};

inline std::vector<int> mark_cells(const Eigen::VectorXd& eta, const MarkStrategy& s) {
  std::vector<int> out;
  const Eigen::Index n = eta.size();
  if (n == 0) return out;
  if (s.kind == MarkKind::Average) {
    const double mean = eta.mean();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (eta(i) >= mean) out.push_back(static_cast<int>(i));
    }
    return out;
  }
  if (!(s.theta > 0.0 && s.theta <= 1.0)) throw ParameterError("mark_cells: bulk theta must lie in (0,1]");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return eta(a) > eta(b); });
  const double target = s.theta * eta.squaredNorm();
  double acc = 0.0;
  for (int i : order) {
    if (acc >= target && !out.empty()) break;
    out.push_back(i);
    acc += eta(i) * eta(i);
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct AqrRound {
  int cells = 0;
  double eta = 0.0;
  std::vector<int> marked;  // cells marked on the previous mesh to produce this one
  bool accepted = false;
};

struct AqrResult {
  IntegrationMesh mesh;
  NetworkParams params;
  std::vector<AqrRound> rounds;  // rounds[0] is the initial mesh
  int accepted_rounds = 0;
  std::vector<IntegrationMesh> meshes;  // every accepted mesh, starting with the initial one
};

using AqrTrain = std::function<NetworkParams(const IntegrationMesh&, const NetworkParams* warm_start)>;
using AqrIndicator = std::function<Eigen::VectorXd(const NetworkParams&, const IntegrationMesh&)>;

// Adaptive quadrature refinement with retraining. Stops when a refinement no
// longer reduces the global estimator by the factor gamma, or after max_rounds.
inline AqrResult aqr(const IntegrationMesh& mesh, const AqrTrain& train, const AqrIndicator& indicator,
                     double gamma, int max_rounds, const MarkStrategy& marking = {}) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ParameterError("aqr: gamma must lie in (0,1)");
  AqrResult res;
  res.mesh = mesh;
  res.params = train(mesh, nullptr);
  Eigen::VectorXd eta_k = indicator(res.params, res.mesh);
  double eta = eta_k.norm();
  res.rounds.push_back({static_cast<int>(mesh.cells.size()), eta, {}, true});
  res.meshes.push_back(res.mesh);
  for (int round = 0; round < max_rounds; ++round) {
    if (!(eta > 1e-14)) break;
    auto marked = mark_cells(eta_k, marking);
    if (marked.empty()) break;
    IntegrationMesh refined = refine_cells(res.mesh, marked);
    NetworkParams p = train(refined, &res.params);
    Eigen::VectorXd eta_new_k = indicator(p, refined);
    const double eta_new = eta_new_k.norm();
    AqrRound r{static_cast<int>(refined.cells.size()), eta_new, std::move(marked), eta_new <= gamma * eta};
    res.rounds.push_back(r);
    if (!r.accepted) break;
    res.mesh = std::move(refined);
    res.params = std::move(p);
    eta_k = std::move(eta_new_k);
    eta = eta_new;
    ++res.accepted_rounds;
    res.meshes.push_back(res.mesh);
  }
  return res;
}

inline void write_mesh_csv(const IntegrationMesh& mesh, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  os.precision(17);
  os << "cell_id,level";
  for (int a = 0; a < mesh.dim(); ++a) os << ",lo_" << a;
  for (int a = 0; a < mesh.dim(); ++a) os << ",hi_" << a;
  os << '\n';
  for (std::size_t i = 0; i < mesh.cells.size(); ++i) {
    const auto& c = mesh.cells[i];
    os << i << ',' << c.level;
    for (int a = 0; a < mesh.dim(); ++a) os << ',' << c.lo(a);
    for (int a = 0; a < mesh.dim(); ++a) os << ',' << c.hi(a);
    os << '\n';
  }
}

inline void write_faces_csv(const IntegrationMesh& mesh, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  os << "cell_id,axis,side,class\n";
  auto dump = [&](const std::vector<FaceRef>& v, FaceClass c) {
    for (const auto& r : v) os << r.cell << ',' << r.face.axis << ',' << r.face.side << ',' << to_string(c) << '\n';
  };
  dump(mesh.inflow_faces, FaceClass::Inflow);
  dump(mesh.initial_faces, FaceClass::Initial);
  dump(mesh.other_faces, FaceClass::Other);
}

}  // namespace lsnn
