#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "lsnn/batch.hpp"
#include "lsnn/errors.hpp"
#include "lsnn/network.hpp"
#include "lsnn/residual_plan.hpp"

namespace lsnn {

// ---------------------------------------------------------------- linear layer

struct LinearSystem {
  Eigen::MatrixXd A;
  Eigen::VectorXd F;
  double bwb = 0.0;  // sum_q w_q b_q^2, so L(c) = c'Ac - 2F'c + bwb
};

struct TsvdSolution {
  Eigen::VectorXd x;
  int rank = 0;
  double sigma_max = 0.0;
};

// Minimum-norm least-squares solution of M x = rhs with singular values
// below rtol * sigma_max discarded.
inline TsvdSolution tsvd_solve(const Eigen::MatrixXd& M, const Eigen::VectorXd& rhs, double rtol) {
  TsvdSolution out;
  out.x = Eigen::VectorXd::Zero(M.cols());
  if (M.size() == 0 || M.cwiseAbs().maxCoeff() == 0.0) return out;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  out.sigma_max = s(0);
  const double cut = rtol * s(0);
  Eigen::VectorXd utb = svd.matrixU().transpose() * rhs;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cut) {
      utb(i) /= s(i);
      ++out.rank;
    } else {
      utb(i) = 0.0;
    }
  }
  out.x = svd.matrixV() * utb;
  return out;
}

inline TsvdSolution solve_linear(const LinearSystem& sys, double svd_rtol = 1e-10) {
  return tsvd_solve(sys.A, sys.F, svd_rtol);
}

// Precomputed structure of a linear plan: R = (Sigma M)' c - b row-wise.
struct LinearStructure {
  Eigen::SparseMatrix<double> M;  // P x Q
  Eigen::VectorXd w, b;

  explicit LinearStructure(const ResidualPlan& plan) : M(plan.point_to_row()) {
    if (!plan.is_linear()) throw ParameterError("linear structure requested for a nonlinear plan");
    w = Eigen::Map<const Eigen::VectorXd>(plan.weight.data(), plan.num_rows());
    b = Eigen::Map<const Eigen::VectorXd>(plan.rhs.data(), plan.num_rows());
  }
};

// A(Theta) and F(Theta) from the transformed features of every row.
inline LinearSystem assemble_A_F(const NetworkParams& params, const LinearStructure& ls, BatchEvaluator& ev) {
  ev.forward(params);
  const Eigen::MatrixXd S = ev.last_hidden();
  Eigen::MatrixXd Sigma(S.rows() + 1, S.cols());
  Sigma.row(0).setOnes();
  Sigma.bottomRows(S.rows()) = S;
  const Eigen::MatrixXd At = Sigma * ls.M;  // (n+1) x Q
  LinearSystem sys;
  const Eigen::MatrixXd Atw = At * ls.w.asDiagonal();
  sys.A = Atw * At.transpose();
  sys.F = Atw * ls.b;
  sys.bwb = ls.w.dot(ls.b.cwiseProduct(ls.b));
  return sys;
}

inline std::vector<int> active_set(const Eigen::VectorXd& c, double eps_c) {
  std::vector<int> out;
  for (Eigen::Index i = 1; i < c.size(); ++i) {
    if (std::abs(c(i)) >= eps_c) out.push_back(static_cast<int>(i - 1));
  }
  return out;
}

// ---------------------------------------------------------------- layer GN

struct LayerGN {
  Eigen::MatrixXd H;      // m(d+1) x m(d+1)
  Eigen::VectorXd G;      // m(d+1)
  Eigen::VectorXd Dc;     // active linear coefficients c_i
  std::vector<int> active;
  int block = 0;          // d + 1
};

// H = sum_q w_q J_q J_q', G = sum_q w_q R_q J_q with J_q = sum alpha H(p_j) (x) (1, p_j)
// restricted to the active neurons of a shallow network.
inline LayerGN assemble_layer_gn(const NetworkParams& params, const std::vector<int>& active, const LinearStructure& ls,
                                 BatchEvaluator& ev) {
  if (!params.arch.shallow()) throw ParameterError("layer GN requires a shallow network");
  if (active.empty()) throw ParameterError("layer GN requires a nonempty active set");
  const Eigen::VectorXd& u = ev.forward(params);
  const Eigen::MatrixXd Z = ev.first_hidden();
  const Eigen::MatrixXd& X = ev.points();
  const int d = static_cast<int>(X.rows());
  const int blk = d + 1;
  const Eigen::Index m = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd Y(m * blk, X.cols());
  for (Eigen::Index s = 0; s < m; ++s) {
    const auto mask = (Z.row(active[s]).array() > 0.0).cast<double>();
    Y.row(s * blk) = mask.matrix();
    for (int a = 0; a < d; ++a) Y.row(s * blk + 1 + a) = (mask * X.row(a).array()).matrix();
  }
  const Eigen::MatrixXd J = Y * ls.M;  // m(d+1) x Q
  const Eigen::VectorXd R = ls.M.transpose() * u - ls.b;
  LayerGN out;
  out.block = blk;
  out.active = active;
  const Eigen::MatrixXd Jw = J * ls.w.asDiagonal();
  out.H = Jw * J.transpose();
  out.G = Jw * R;
  out.Dc.resize(m);
  for (Eigen::Index s = 0; s < m; ++s) out.Dc(s) = params.linear(active[s] + 1);
  return out;
}

// ---------------------------------------------------------------- line search

struct LineSearchConfig {
  double gamma_cap = 1024.0;  // 2^10
  int golden_iters = 60;
};

struct LineSearchResult {
  double gamma = 0.0;
  double value = 0.0;
  int evaluations = 0;
};

// Minimize phi over gamma >= 0: double gamma from 1 until phi increases
// (capped), then golden-section on [0, gamma_max]. The best sample wins,
// ties go to the smaller recorded gamma (gamma = 0 is sampled first).
inline LineSearchResult line_search(const std::function<double(double)>& phi, const LineSearchConfig& cfg = {}) {
  LineSearchResult best;
  auto probe = [&](double g) {
    const double v = phi(g);
    ++best.evaluations;
    if (v < best.value) {
      best.value = v;
      best.gamma = g;
    }
    return v;
  };
  best.value = phi(0.0);
  best.evaluations = 1;
  double gmax = 1.0;
  double fcur = probe(1.0);
  if (fcur < best.value || fcur == best.value) {
    while (gmax < cfg.gamma_cap) {
      const double fnext = probe(2.0 * gmax);
      gmax *= 2.0;
      if (fnext > fcur) break;
      fcur = fnext;
    }
  }
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = 0.0, b = gmax;
  double x1 = b - r * (b - a), x2 = a + r * (b - a);
  double f1 = probe(x1), f2 = probe(x2);
  for (int it = 0; it < cfg.golden_iters; ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - r * (b - a);
      f1 = probe(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + r * (b - a);
      f2 = probe(x2);
    }
  }
  return best;
}

// ---------------------------------------------------------------- SgGN

struct SgGNConfig {
  double eps_c = 1e-6;
  double svd_rtol = 1e-10;
  int max_iters = 100;
  LineSearchConfig line_search;
};

struct SgGNStepInfo {
  double loss_before = 0.0;
  double loss_after = 0.0;
  double step = 0.0;
  double grad_norm = 0.0;  // norm of G restricted to the active set
  int active = 0;
  int rank = 0;
  bool empty_active = false;
  bool stagnated = false;
  bool kept_old_linear = false;
};

// One structure-guided Gauss-Newton iteration on a shallow network with a linear plan.
inline SgGNStepInfo sggn_step(NetworkParams& params, PlanObjective& obj, const LinearStructure& ls,
                              const SgGNConfig& cfg) {
  if (!params.arch.shallow()) throw ParameterError("SgGN requires a shallow network");
  SgGNStepInfo info;
  info.loss_before = obj.value(params).total;
  info.loss_after = info.loss_before;
  const auto active = active_set(params.linear, cfg.eps_c);
  info.active = static_cast<int>(active.size());
  if (active.empty()) {
    info.empty_active = true;
    return info;
  }
  const LayerGN gn = assemble_layer_gn(params, active, ls, obj.evaluator());
  info.grad_norm = gn.G.norm();
  const TsvdSolution dir = tsvd_solve(gn.H, gn.G, cfg.svd_rtol);
  info.rank = dir.rank;

  auto& L = params.layers.front();
  const int d = params.arch.input_dim;
  Eigen::MatrixXd p_w = Eigen::MatrixXd::Zero(L.weights.rows(), d);
  Eigen::VectorXd p_b = Eigen::VectorXd::Zero(L.weights.rows());
  for (std::size_t s = 0; s < active.size(); ++s) {
    const double inv = 1.0 / gn.Dc(static_cast<Eigen::Index>(s));
    p_b(active[s]) = dir.x(s * gn.block) * inv;
    for (int a = 0; a < d; ++a) p_w(active[s], a) = dir.x(s * gn.block + 1 + a) * inv;
  }
  const NetworkParams base = params;
  NetworkParams trial = params;
  auto phi = [&](double g) {
    trial.layers.front().weights = base.layers.front().weights - g * p_w;
    trial.layers.front().biases = base.layers.front().biases - g * p_b;
    return obj.value(trial).total;
  };
  const LineSearchResult ls_res = line_search(phi, cfg.line_search);
  info.step = ls_res.gamma;
  info.stagnated = ls_res.gamma == 0.0;
  params.layers.front().weights = base.layers.front().weights - ls_res.gamma * p_w;
  params.layers.front().biases = base.layers.front().biases - ls_res.gamma * p_b;
  const double after_r = obj.value(params).total;

  const Eigen::VectorXd old_c = params.linear;
  params.linear = solve_linear(assemble_A_F(params, ls, obj.evaluator()), cfg.svd_rtol).x;
  const double after_c = obj.value(params).total;
  if (after_c > after_r) {
    params.linear = old_c;
    info.kept_old_linear = true;
    info.loss_after = after_r;
  } else {
    info.loss_after = after_c;
  }
  return info;
}

// ---------------------------------------------------------------- Adam

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int iters = 1000;
  std::uint64_t seed = 0;        // echoed only; full-batch Adam draws no random numbers
  double final_lr_factor = 1.0;  // lr decays geometrically to learning_rate * factor
  int history_stride = 1;

  void validate() const {
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) throw ParameterError("Adam: betas must lie in (0,1)");
    if (!(learning_rate > 0.0) || !(epsilon > 0.0)) throw ParameterError("Adam: lr and epsilon must be positive");
    if (iters < 0 || history_stride < 1) throw ParameterError("Adam: bad iteration settings");
    if (!(final_lr_factor > 0.0)) throw ParameterError("Adam: final_lr_factor must be positive");
  }
};

struct HistoryEntry {
  int iter = 0;
  double interior = 0.0;
  double inflow = 0.0;
  double initial = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
  double step_size = 0.0;
};

using Objective = std::function<FunctionalValue(const NetworkParams&, Eigen::VectorXd& grad)>;

// Raised when the loss turns non-finite; carries the last finite state.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, NetworkParams last_good, std::vector<HistoryEntry> history)
      : NumericError(what), last_good(std::move(last_good)), history(std::move(history)) {}
  NetworkParams last_good;
  std::vector<HistoryEntry> history;
};

struct AdamResult {
  NetworkParams params;
  std::vector<HistoryEntry> history;
  FunctionalValue final_value;
};

inline AdamResult adam_minimize(const Objective& objective, const NetworkParams& init, const AdamConfig& cfg) {
  cfg.validate();
  AdamResult res;
  res.params = init;
  Eigen::VectorXd x = init.flatten();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(x.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(x.size());
  Eigen::VectorXd grad;
  const double decay = cfg.iters > 0 ? std::pow(cfg.final_lr_factor, 1.0 / cfg.iters) : 1.0;
  double lr = cfg.learning_rate;
  double b1t = 1.0, b2t = 1.0;
  for (int it = 0; it <= cfg.iters; ++it) {
    FunctionalValue val;
    try {
      val = objective(res.params, grad);
    } catch (const NumericError& e) {
      throw TrainingDiverged(std::string(e.what()) + " at Adam iteration " + std::to_string(it), res.params,
                             res.history);
    }
    if (!grad.allFinite()) {
      throw TrainingDiverged("non-finite gradient at Adam iteration " + std::to_string(it), res.params, res.history);
    }
    const bool last = it == cfg.iters;
    if (it % cfg.history_stride == 0 || last) {
      res.history.push_back(
          {it, val.interior, val.inflow_penalty, val.initial_penalty, val.total, grad.norm(), last ? 0.0 : lr});
    }
    if (last) {
      res.final_value = val;
      break;
    }
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    const double a = lr / (1.0 - b1t);
    const double c2 = 1.0 / (1.0 - b2t);
    x.array() -= a * m.array() / ((v.array() * c2).sqrt() + cfg.epsilon);
    res.params.assign(x);
    lr *= decay;
  }
  return res;
}

// ---------------------------------------------------------------- gradients

inline Eigen::VectorXd analytic_gradient(const NetworkParams& params, PlanObjective& obj) {
  Eigen::VectorXd g;
  obj.value_and_grad(params, g);
  return g;
}

// Central differences, componentwise.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& loss, const Eigen::VectorXd& x,
                                   double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd y = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    y(i) = x(i) + h;
    const double fp = loss(y);
    y(i) = x(i) - h;
    const double fm = loss(y);
    y(i) = x(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

// ---------------------------------------------------------------- initialization

enum class InitMode { Uniform, Random };

struct InitConfig {
  InitMode mode = InitMode::Uniform;
  std::uint64_t seed = 0;
  double noise = 0.1;       // deeper-layer perturbation (uniform mode)
  bool unit_sphere = true;  // rescale first-layer rows to unit norm
  double svd_rtol = 1e-10;
};

namespace detail {

// Directions and per-direction neuron counts for the first layer.
inline std::vector<std::pair<Eigen::VectorXd, int>> first_layer_directions(int n, int d) {
  std::vector<std::pair<Eigen::VectorXd, int>> dirs;
  const int per_axis = n / d;
  for (int a = 0; a < d && per_axis > 0; ++a) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
    e(a) = 1.0;
    dirs.emplace_back(e, per_axis);
  }
  const int rest = n - per_axis * d;
  if (rest > 0) {
    const int patterns = d == 1 ? 1 : (1 << (d - 1));
    std::vector<int> count(patterns, 0);
    for (int k = 0; k < rest; ++k) ++count[k % patterns];
    for (int p = 0; p < patterns; ++p) {
      if (count[p] == 0) continue;
      Eigen::VectorXd v = Eigen::VectorXd::Ones(d);
      for (int a = 1; a < d; ++a) {
        if (p & (1 << (a - 1))) v(a) = -1.0;
      }
      dirs.emplace_back(v / v.norm(), count[p]);
    }
  }
  return dirs;
}

}  // namespace detail

// Hidden layers only (linear layer zero).
inline NetworkParams init_hidden(const NetworkArchitecture& arch, const BoxDomain& domain, const InitConfig& cfg) {
  arch.validate();
  if (domain.dim() != arch.input_dim) throw ShapeError("init: domain dimension != input_dim");
  NetworkParams p = NetworkParams::zeros(arch);
  std::mt19937_64 rng(cfg.seed);
  auto uni = [&](double r) { return std::uniform_real_distribution<double>(-r, r)(rng); };
  const int d = arch.input_dim;
  if (cfg.mode == InitMode::Random) {
    for (int k = 0; k < arch.depth(); ++k) {
      auto& L = p.layers[k];
      const double r = 1.0 / std::sqrt(static_cast<double>(L.weights.cols()));
      for (Eigen::Index i = 0; i < L.weights.rows(); ++i) {
        for (Eigen::Index j = 0; j < L.weights.cols(); ++j) L.weights(i, j) = uni(r);
      }
      for (Eigen::Index i = 0; i < L.biases.size(); ++i) L.biases(i) = uni(r);
    }
    const double r = 1.0 / std::sqrt(static_cast<double>(arch.last_width()));
    for (Eigen::Index i = 0; i < p.linear.size(); ++i) p.linear(i) = uni(r);
    if (cfg.unit_sphere) project_first_layer_to_unit_sphere(p);
    return p;
  }
  // Uniform partition: neurons sharing a direction a cut the box's range of a.x evenly.
  auto& L1 = p.layers.front();
  int row = 0;
  for (const auto& [dir, count] : detail::first_layer_directions(arch.hidden_widths.front(), d)) {
    double lo = 0.0, hi = 0.0;
    for (int a = 0; a < d; ++a) {
      const double u = dir(a) * domain.lower(a), v = dir(a) * domain.upper(a);
      lo += std::min(u, v);
      hi += std::max(u, v);
    }
    for (int j = 1; j <= count; ++j) {
      L1.weights.row(row) = dir.transpose();
      L1.biases(row) = -(lo + (hi - lo) * j / (count + 1.0));
      ++row;
    }
  }
  for (int k = 1; k < arch.depth(); ++k) {
    auto& L = p.layers[k];
    for (Eigen::Index i = 0; i < L.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < L.weights.cols(); ++j) {
        L.weights(i, j) = (i % L.weights.cols() == j ? 1.0 : 0.0) + uni(cfg.noise);
      }
      L.biases(i) = uni(cfg.noise);
    }
  }
  return p;
}

// Optimal linear layer for fixed hidden layers: c = A^+ F on a linear plan.
inline TsvdSolution fit_linear_layer(NetworkParams& params, const ResidualPlan& plan, double svd_rtol, int threads = 1) {
  LinearStructure ls(plan);
  BatchEvaluator ev(plan.points, threads);
  TsvdSolution sol = solve_linear(assemble_A_F(params, ls, ev), svd_rtol);
  params.linear = sol.x;
  return sol;
}

// Hidden layers from the uniform (or random) rule, then the optimal linear
// layer. Linear and fit problems use their own functional; conservation laws
// use an L2 fit of the initial data extended constantly in time.
inline NetworkParams init_uniform(const NetworkArchitecture& arch, const ProblemSpec& problem, const IntegrationMesh& mesh,
                                  const DiffConfig& dcfg, const InitConfig& cfg, int threads = 1) {
  NetworkParams p = init_hidden(arch, mesh.domain, cfg);
  if (const auto* hp = std::get_if<HCLProblem>(&problem)) {
    const int ta = hp->spatial_dim();
    const double t0 = hp->spacetime.lower(ta);
    ScalarField u0 = hp->u0;
    FitProblem fit{mesh.domain, [u0, ta, t0](const Point& x) {
                     Point y = x;
                     y(ta) = t0;
                     return u0(y);
                   }};
    fit_linear_layer(p, build_plan_fit(fit, mesh), cfg.svd_rtol, threads);
  } else {
    fit_linear_layer(p, build_plan(problem, mesh, dcfg), cfg.svd_rtol, threads);
  }
  return p;
}

}  // namespace lsnn
