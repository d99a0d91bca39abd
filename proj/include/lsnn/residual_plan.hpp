#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "lsnn/batch.hpp"
#include "lsnn/diff_ops.hpp"
#include "lsnn/errors.hpp"
#include "lsnn/mesh.hpp"
#include "lsnn/problem.hpp"

namespace lsnn {

enum class RowKind : std::uint8_t { Interior, Inflow, Initial };

// One contribution alpha * Phi_c(u(p_j)) to a residual row. comp < 0 means
// Phi = u itself; comp >= 0 selects the spatial flux component f_comp.
struct PlanTerm {
  int point = 0;
  int comp = -1;
  double coeff = 0.0;
};

// Every discrete functional here has the form  sum_q w_q R_q^2  with
// R_q = sum_terms alpha Phi_c(u(p_j)) - b_q, where the points p_j, weights,
// data and coefficients depend only on the problem and the mesh.
struct ResidualPlan {
  int dim = 0;
  Eigen::MatrixXd points;        // dim x P, unique evaluation points
  std::vector<int> row_start{0};  // CSR offsets into terms
  std::vector<PlanTerm> terms;
  std::vector<double> weight;
  std::vector<double> rhs;
  std::vector<RowKind> kind;
  std::vector<int> cell;
  std::vector<Point> anchor;     // representative location of each row (diagnostics)
  int num_cells = 0;
  std::vector<Flux1> flux, dflux;  // components referenced by comp >= 0
  double tau = 0.0;                // directional step used (linear plans)
  int exit_rows = 0;               // rows that used the exact-exit inflow variant

  Eigen::Index num_rows() const { return static_cast<Eigen::Index>(weight.size()); }
  Eigen::Index num_points() const { return points.cols(); }

  bool is_linear() const {
    for (const auto& t : terms) {
      if (t.comp >= 0) return false;
    }
    return true;
  }

  // P x Q sparse map from point values to row values (linear plans only).
  Eigen::SparseMatrix<double> point_to_row() const {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(terms.size());
    for (Eigen::Index q = 0; q < num_rows(); ++q) {
      for (int k = row_start[q]; k < row_start[q + 1]; ++k) trip.emplace_back(terms[k].point, q, terms[k].coeff);
    }
    Eigen::SparseMatrix<double> M(num_points(), num_rows());
    M.setFromTriplets(trip.begin(), trip.end());
    return M;
  }
};

class PlanBuilder {
 public:
  explicit PlanBuilder(int dim) { plan_.dim = dim; }

  int point(const Point& x) {
    Key k{};
    for (int a = 0; a < plan_.dim; ++a) k[a] = std::llround(x(a) * kScale);
    auto [it, inserted] = index_.try_emplace(k, static_cast<int>(pts_.size()));
    if (inserted) pts_.push_back(x);
    return it->second;
  }

  void term(int point, int comp, double coeff) { plan_.terms.push_back({point, comp, coeff}); }

  void end_row(double w, double b, RowKind kind, int cell, const Point& anchor) {
    plan_.row_start.push_back(static_cast<int>(plan_.terms.size()));
    plan_.weight.push_back(w);
    plan_.rhs.push_back(b);
    plan_.kind.push_back(kind);
    plan_.cell.push_back(cell);
    plan_.anchor.push_back(anchor);
  }

  ResidualPlan& plan() { return plan_; }

  ResidualPlan finish(int num_cells) {
    plan_.points.resize(plan_.dim, static_cast<Eigen::Index>(pts_.size()));
    for (std::size_t j = 0; j < pts_.size(); ++j) plan_.points.col(static_cast<Eigen::Index>(j)) = pts_[j];
    plan_.num_cells = num_cells;
    return std::move(plan_);
  }

 private:
  static constexpr double kScale = 4294967296.0;  // 2^32
  using Key = std::array<long long, kMaxDim>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      std::size_t h = 1469598103934665603ull;
      for (long long v : k) h = (h ^ static_cast<std::size_t>(v)) * 1099511628211ull;
      return h;
    }
  };
  ResidualPlan plan_;
  std::vector<Point> pts_;
  std::unordered_map<Key, int, KeyHash> index_;
};

// Rows of the linear functional: one per interior quadrature point, plus
// |beta.n|-weighted penalty rows on E_- quadrature points.
inline ResidualPlan build_plan_linear(const LinearProblem& problem, const IntegrationMesh& mesh, const DiffConfig& cfg) {
  const double tau = cfg.resolve_tau(mesh);
  PlanBuilder B(mesh.dim());
  const auto specials = mesh.special_face_table();
  int exit_rows = 0;
  for (std::size_t i = 0; i < mesh.cells.size(); ++i) {
    const Cell& c = mesh.cells[i];
    bool owns_inflow = false;
    for (const auto& s : specials[i]) owns_inflow |= (s.second == FaceClass::Inflow);
    for (const auto& q : c.quad_points) {
      const Point b = problem.beta(q.x);
      const double gam = problem.gamma(q.x);
      const double fx = problem.f(q.x);
      const double t_exit = ray_exit_distance(problem.domain, q.x, Point(-b));
      const int jx = B.point(q.x);
      const bool leaves = t_exit < tau;
      if (cfg.inflow_substitution && (leaves || (owns_inflow && t_exit <= c.diameter()))) {
        const Point e = ray_exit_point(problem.domain, q.x, Point(-b));
        B.term(jx, -1, 1.0 / t_exit + gam);
        B.end_row(q.w, fx + problem.g(e) / t_exit, RowKind::Interior, static_cast<int>(i), q.x);
        ++exit_rows;
      } else {
        const double t = leaves ? t_exit : tau;
        const int jb = B.point(Point(q.x - t * b));
        B.term(jx, -1, 1.0 / t + gam);
        B.term(jb, -1, -1.0 / t);
        B.end_row(q.w, fx, RowKind::Interior, static_cast<int>(i), q.x);
      }
    }
  }
  if (cfg.penalty_weight > 0.0) {
    for (const auto& ref : mesh.inflow_faces) {
      const Cell& c = mesh.cells[ref.cell];
      for (const auto& q : face_quadrature(c, ref.face, cfg.boundary_rule)) {
        const double bn = std::abs(problem.beta(q.x)(ref.face.axis));
        const double w = cfg.penalty_weight * q.w * bn;
        if (w == 0.0) continue;
        B.term(B.point(q.x), -1, 1.0);
        B.end_row(w, problem.g(q.x), RowKind::Inflow, ref.cell, q.x);
      }
    }
  }
  ResidualPlan plan = B.finish(static_cast<int>(mesh.cells.size()));
  plan.tau = tau;
  plan.exit_rows = exit_rows;
  return plan;
}

// Rows of the conservation-law functional: one discrete divergence per
// control volume, plus unweighted penalty rows on E_- and E_0.
inline ResidualPlan build_plan_hcl(const HCLProblem& problem, const IntegrationMesh& mesh, const DiffConfig& cfg) {
  problem.validate();
  const int d = mesh.dim();
  const int time_axis = problem.spatial_dim();
  PlanBuilder B(d);
  const auto specials = mesh.special_face_table();
  for (std::size_t i = 0; i < mesh.cells.size(); ++i) {
    const Cell& c = mesh.cells[i];
    for (const Cell& cv : control_volumes(c, mesh.interior_subdivisions)) {
      const double vol = cv.volume();
      double b = 0.0;
      for (int a = 0; a < d; ++a) {
        for (int side = 0; side < 2; ++side) {
          const Face f{a, side};
          const double sign = f.normal_sign();
          const ScalarField* data = nullptr;
          const bool on_cell_face = side == 0 ? cv.lo(a) == c.lo(a) : cv.hi(a) == c.hi(a);
          if (cfg.inflow_substitution && on_cell_face) {
            for (const auto& s : specials[i]) {
              if (s.first == f) data = s.second == FaceClass::Inflow ? &problem.g : &problem.u0;
            }
          }
          for (const auto& q : face_quadrature(cv, f, cfg.boundary_rule)) {
            const double coeff = sign * q.w / vol;
            if (data) {
              b -= coeff * problem.flux.component(a, (*data)(q.x));
            } else {
              B.term(B.point(q.x), a == time_axis ? -1 : a, coeff);
            }
          }
        }
      }
      B.end_row(vol, b, RowKind::Interior, static_cast<int>(i), cv.centroid());
    }
  }
  auto penalty = [&](const std::vector<FaceRef>& faces, const ScalarField& data, RowKind kind) {
    for (const auto& ref : faces) {
      for (const auto& q : face_quadrature(mesh.cells[ref.cell], ref.face, cfg.boundary_rule)) {
        B.term(B.point(q.x), -1, 1.0);
        B.end_row(q.w, data(q.x), kind, ref.cell, q.x);
      }
    }
  };
  penalty(mesh.inflow_faces, problem.g, RowKind::Inflow);
  penalty(mesh.initial_faces, problem.u0, RowKind::Initial);
  ResidualPlan plan = B.finish(static_cast<int>(mesh.cells.size()));
  plan.flux = problem.flux.f;
  plan.dflux = problem.flux.df;
  return plan;
}

inline ResidualPlan build_plan_fit(const FitProblem& problem, const IntegrationMesh& mesh) {
  PlanBuilder B(mesh.dim());
  for (std::size_t i = 0; i < mesh.cells.size(); ++i) {
    for (const auto& q : mesh.cells[i].quad_points) {
      B.term(B.point(q.x), -1, 1.0);
      B.end_row(q.w, problem.target(q.x), RowKind::Interior, static_cast<int>(i), q.x);
    }
  }
  return B.finish(static_cast<int>(mesh.cells.size()));
}

inline ResidualPlan build_plan(const ProblemSpec& problem, const IntegrationMesh& mesh, const DiffConfig& cfg) {
  if (const auto* lp = std::get_if<LinearProblem>(&problem)) return build_plan_linear(*lp, mesh, cfg);
  if (const auto* hp = std::get_if<HCLProblem>(&problem)) return build_plan_hcl(*hp, mesh, cfg);
  return build_plan_fit(std::get<FitProblem>(problem), mesh);
}

// Split of the functional into its parts; per_cell holds eta_K = sqrt(Q_K(R^2)).
struct FunctionalValue {
  double interior = 0.0;
  double inflow_penalty = 0.0;
  double initial_penalty = 0.0;
  double total = 0.0;
  Eigen::VectorXd per_cell;
};

// Residual rows for the given point values.
inline Eigen::VectorXd plan_residuals(const ResidualPlan& plan, const Eigen::VectorXd& u) {
  const int ncomp = static_cast<int>(plan.flux.size());
  Eigen::MatrixXd phi(ncomp, plan.num_points());
  for (int c = 0; c < ncomp; ++c) {
    for (Eigen::Index j = 0; j < plan.num_points(); ++j) phi(c, j) = plan.flux[c](u(j));
  }
  Eigen::VectorXd R(plan.num_rows());
  for (Eigen::Index q = 0; q < plan.num_rows(); ++q) {
    double s = 0.0;
    for (int k = plan.row_start[q]; k < plan.row_start[q + 1]; ++k) {
      const auto& t = plan.terms[k];
      s += t.coeff * (t.comp < 0 ? u(t.point) : phi(t.comp, t.point));
    }
    R(q) = s - plan.rhs[q];
  }
  return R;
}

inline FunctionalValue plan_functional(const ResidualPlan& plan, const Eigen::VectorXd& R) {
  FunctionalValue v;
  v.per_cell = Eigen::VectorXd::Zero(plan.num_cells);
  for (Eigen::Index q = 0; q < plan.num_rows(); ++q) {
    const double c = plan.weight[q] * R(q) * R(q);
    switch (plan.kind[q]) {
      case RowKind::Interior:
        v.interior += c;
        v.per_cell(plan.cell[q]) += c;
        break;
      case RowKind::Inflow: v.inflow_penalty += c; break;
      case RowKind::Initial: v.initial_penalty += c; break;
    }
  }
  v.per_cell = v.per_cell.cwiseSqrt();
  v.total = v.interior + v.inflow_penalty + v.initial_penalty;
  return v;
}

// d(sum_q w_q R_q^2) / d u(p_j).
inline Eigen::VectorXd plan_point_gradient(const ResidualPlan& plan, const Eigen::VectorXd& u, const Eigen::VectorXd& R) {
  const int ncomp = static_cast<int>(plan.dflux.size());
  Eigen::MatrixXd dphi(ncomp, plan.num_points());
  for (int c = 0; c < ncomp; ++c) {
    for (Eigen::Index j = 0; j < plan.num_points(); ++j) dphi(c, j) = plan.dflux[c](u(j));
  }
  Eigen::VectorXd du = Eigen::VectorXd::Zero(plan.num_points());
  for (Eigen::Index q = 0; q < plan.num_rows(); ++q) {
    const double s = 2.0 * plan.weight[q] * R(q);
    if (s == 0.0) continue;
    for (int k = plan.row_start[q]; k < plan.row_start[q + 1]; ++k) {
      const auto& t = plan.terms[k];
      du(t.point) += s * t.coeff * (t.comp < 0 ? 1.0 : dphi(t.comp, t.point));
    }
  }
  return du;
}

// A residual plan bound to a network evaluator at its points.
class PlanObjective {
 public:
  PlanObjective(ResidualPlan plan, int threads = 1)
      : plan_(std::make_shared<ResidualPlan>(std::move(plan))), eval_(plan_->points, threads) {}

  const ResidualPlan& plan() const { return *plan_; }
  BatchEvaluator& evaluator() { return eval_; }

  FunctionalValue value(const NetworkParams& params) {
    const Eigen::VectorXd& u = eval_.forward(params);
    R_ = plan_residuals(*plan_, u);
    return check(plan_functional(*plan_, R_));
  }

  FunctionalValue value_and_grad(const NetworkParams& params, Eigen::VectorXd& grad) {
    const Eigen::VectorXd& u = eval_.forward(params);
    R_ = plan_residuals(*plan_, u);
    FunctionalValue v = check(plan_functional(*plan_, R_));
    grad = eval_.backward(params, plan_point_gradient(*plan_, u, R_));
    return v;
  }

  const Eigen::VectorXd& last_residuals() const { return R_; }

 private:
  static FunctionalValue check(FunctionalValue v) {
    if (!std::isfinite(v.total)) throw NumericError("non-finite functional value");
    return v;
  }

  std::shared_ptr<ResidualPlan> plan_;
  BatchEvaluator eval_;
  Eigen::VectorXd R_;
};

// CSV of interior residuals at each row's anchor point.
inline void write_residual_csv(const ResidualPlan& plan, const Eigen::VectorXd& R, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  os.precision(17);
  for (int a = 0; a < plan.dim; ++a) os << "x" << a << ',';
  os << "residual\n";
  for (Eigen::Index q = 0; q < plan.num_rows(); ++q) {
    if (plan.kind[q] != RowKind::Interior) continue;
    for (int a = 0; a < plan.dim; ++a) os << plan.anchor[q](a) << ',';
    os << R(q) << '\n';
  }
}

}  // namespace lsnn
