#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsnn/diff_ops.hpp"
#include "lsnn/errors.hpp"
#include "lsnn/least_squares.hpp"
#include "lsnn/mesh.hpp"
#include "lsnn/network.hpp"
#include "lsnn/optimize.hpp"
#include "lsnn/problems.hpp"
#include "lsnn/residual_plan.hpp"
#include "lsnn/serialization.hpp"

namespace lsnn {

struct AqrSettings {
  double gamma = 0.9;
  int max_rounds = 3;
  std::string marking = "bulk";
  double theta = 0.5;
  int train_iters = 2000;
};

// Full description of one run. Every field is echoed into the report, and the
// echo parses back into an identical config.
struct RunConfig {
  std::string problem = "6.2";
  double gamma = 1.0;  // reaction coefficient of problem 6.1
  std::vector<int> widths{10, 10};
  std::vector<double> h{0.01};
  std::vector<int> interior_subdivisions{1};
  double tau = 0.0;
  std::string rule = "composite_midpoint";
  std::vector<int> subintervals{4};
  bool inflow_substitution = true;
  double penalty_weight = 1.0;
  std::string optimizer = "adam";
  AdamConfig adam;
  SgGNConfig sggn;
  std::string init_mode = "uniform";
  double init_noise = 0.1;
  bool unit_sphere = true;
  std::vector<double> block_boundaries;  // empty: problem default
  int blocks_to_run = 0;                 // 0: all blocks
  std::vector<int> block_iterations;     // empty: optimizer default for every block
  double eval_h = 0.0;                   // 0: half the smallest mesh step
  double grid_h = 0.0;                   // 0: same as eval_h
  AqrSettings aqr;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string output;
};

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key())) throw ConfigError("unknown config key '" + where + "." + it.key() + "'");
  }
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value for '" + where + "." + key + "': " + e.what());
  }
}

template <class T>
std::vector<T> broadcast(const std::vector<T>& v, int dim, const char* what) {
  if (static_cast<int>(v.size()) == dim) return v;
  if (v.size() == 1) return std::vector<T>(dim, v[0]);
  throw ConfigError(std::string(what) + ": expected 1 or " + std::to_string(dim) + " values");
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::read;
  RunConfig c;
  check_keys(j, {"problem", "network", "mesh", "diff", "optimizer", "init", "blocks", "eval", "aqr", "seed", "threads",
                 "output"},
             "config");
  if (j.contains("problem")) {
    const auto& p = j["problem"];
    check_keys(p, {"name", "gamma"}, "problem");
    read(p, "name", c.problem, "problem");
    read(p, "gamma", c.gamma, "problem");
  }
  if (j.contains("network")) {
    check_keys(j["network"], {"widths"}, "network");
    read(j["network"], "widths", c.widths, "network");
  }
  if (j.contains("mesh")) {
    const auto& m = j["mesh"];
    check_keys(m, {"h", "interior_subdivisions"}, "mesh");
    if (m.contains("h") && m["h"].is_number()) {
      c.h = {m["h"].get<double>()};
    } else {
      read(m, "h", c.h, "mesh");
    }
    read(m, "interior_subdivisions", c.interior_subdivisions, "mesh");
  }
  if (j.contains("diff")) {
    const auto& d = j["diff"];
    check_keys(d, {"tau", "rule", "subintervals", "inflow_substitution", "penalty_weight"}, "diff");
    read(d, "tau", c.tau, "diff");
    read(d, "rule", c.rule, "diff");
    read(d, "subintervals", c.subintervals, "diff");
    read(d, "inflow_substitution", c.inflow_substitution, "diff");
    read(d, "penalty_weight", c.penalty_weight, "diff");
  }
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    check_keys(o, {"kind", "adam", "sggn"}, "optimizer");
    read(o, "kind", c.optimizer, "optimizer");
    if (o.contains("adam")) {
      const auto& a = o["adam"];
      check_keys(a, {"learning_rate", "beta1", "beta2", "epsilon", "iters", "final_lr_factor", "history_stride"},
                 "optimizer.adam");
      read(a, "learning_rate", c.adam.learning_rate, "optimizer.adam");
      read(a, "beta1", c.adam.beta1, "optimizer.adam");
      read(a, "beta2", c.adam.beta2, "optimizer.adam");
      read(a, "epsilon", c.adam.epsilon, "optimizer.adam");
      read(a, "iters", c.adam.iters, "optimizer.adam");
      read(a, "final_lr_factor", c.adam.final_lr_factor, "optimizer.adam");
      read(a, "history_stride", c.adam.history_stride, "optimizer.adam");
    }
    if (o.contains("sggn")) {
      const auto& s = o["sggn"];
      check_keys(s, {"eps_c", "svd_rtol", "max_iters", "gamma_cap", "golden_iters"}, "optimizer.sggn");
      read(s, "eps_c", c.sggn.eps_c, "optimizer.sggn");
      read(s, "svd_rtol", c.sggn.svd_rtol, "optimizer.sggn");
      read(s, "max_iters", c.sggn.max_iters, "optimizer.sggn");
      read(s, "gamma_cap", c.sggn.line_search.gamma_cap, "optimizer.sggn");
      read(s, "golden_iters", c.sggn.line_search.golden_iters, "optimizer.sggn");
    }
  }
  if (j.contains("init")) {
    const auto& i = j["init"];
    check_keys(i, {"mode", "noise", "unit_sphere"}, "init");
    read(i, "mode", c.init_mode, "init");
    read(i, "noise", c.init_noise, "init");
    read(i, "unit_sphere", c.unit_sphere, "init");
  }
  if (j.contains("blocks")) {
    const auto& b = j["blocks"];
    check_keys(b, {"boundaries", "run", "iterations"}, "blocks");
    read(b, "boundaries", c.block_boundaries, "blocks");
    read(b, "run", c.blocks_to_run, "blocks");
    read(b, "iterations", c.block_iterations, "blocks");
  }
  if (j.contains("eval")) {
    check_keys(j["eval"], {"h", "grid_h"}, "eval");
    read(j["eval"], "h", c.eval_h, "eval");
    read(j["eval"], "grid_h", c.grid_h, "eval");
  }
  if (j.contains("aqr")) {
    const auto& a = j["aqr"];
    check_keys(a, {"gamma", "max_rounds", "marking", "theta", "train_iters"}, "aqr");
    read(a, "gamma", c.aqr.gamma, "aqr");
    read(a, "max_rounds", c.aqr.max_rounds, "aqr");
    read(a, "marking", c.aqr.marking, "aqr");
    read(a, "theta", c.aqr.theta, "aqr");
    read(a, "train_iters", c.aqr.train_iters, "aqr");
  }
  read(j, "seed", c.seed, "config");
  read(j, "threads", c.threads, "config");
  read(j, "output", c.output, "config");
  return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["problem"] = {{"name", c.problem}, {"gamma", c.gamma}};
  j["network"] = {{"widths", c.widths}};
  j["mesh"] = {{"h", c.h}, {"interior_subdivisions", c.interior_subdivisions}};
  j["diff"] = {{"tau", c.tau},
               {"rule", c.rule},
               {"subintervals", c.subintervals},
               {"inflow_substitution", c.inflow_substitution},
               {"penalty_weight", c.penalty_weight}};
  j["optimizer"] = {{"kind", c.optimizer},
                    {"adam",
                     {{"learning_rate", c.adam.learning_rate},
                      {"beta1", c.adam.beta1},
                      {"beta2", c.adam.beta2},
                      {"epsilon", c.adam.epsilon},
                      {"iters", c.adam.iters},
                      {"final_lr_factor", c.adam.final_lr_factor},
                      {"history_stride", c.adam.history_stride}}},
                    {"sggn",
                     {{"eps_c", c.sggn.eps_c},
                      {"svd_rtol", c.sggn.svd_rtol},
                      {"max_iters", c.sggn.max_iters},
                      {"gamma_cap", c.sggn.line_search.gamma_cap},
                      {"golden_iters", c.sggn.line_search.golden_iters}}}};
  j["init"] = {{"mode", c.init_mode}, {"noise", c.init_noise}, {"unit_sphere", c.unit_sphere}};
  j["blocks"] = {{"boundaries", c.block_boundaries}, {"run", c.blocks_to_run}, {"iterations", c.block_iterations}};
  j["eval"] = {{"h", c.eval_h}, {"grid_h", c.grid_h}};
  j["aqr"] = {{"gamma", c.aqr.gamma},
              {"max_rounds", c.aqr.max_rounds},
              {"marking", c.aqr.marking},
              {"theta", c.aqr.theta},
              {"train_iters", c.aqr.train_iters}};
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["output"] = c.output;
  return j;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

// Canned benchmark configurations. "desk" is sized for one CPU core.
inline RunConfig benchmark_config(const std::string& id, const std::string& scale) {
  if (scale != "desk" && scale != "paper") throw ConfigError("scale must be desk or paper");
  const bool desk = scale == "desk";
  RunConfig c;
  c.problem = id;
  c.adam.history_stride = 100;
  if (id == "6.1") {
    c.widths = desk ? std::vector<int>{20, 20} : std::vector<int>{60, 60};
    c.h = {desk ? 0.02 : 0.01};
    c.rule = "midpoint";
    c.subintervals = {1};
    c.adam.iters = desk ? 20000 : 200000;
    c.adam.learning_rate = 3e-3;
    c.adam.final_lr_factor = 0.03;
  } else if (id == "6.2") {
    c.widths = {10, 10};
    c.h = {0.01};
    c.rule = "composite_midpoint";
    c.subintervals = {4, 4};
    c.adam.iters = 50000;
    // Lower rates leave the shock lagging behind x = t/4.
    c.adam.learning_rate = 1e-2;
    c.adam.final_lr_factor = 0.03;
  } else if (id == "6.3") {
    c.widths = desk ? std::vector<int>{24, 24, 24} : std::vector<int>{48, 48, 48};
    c.h = {desk ? 0.02 : 0.01};
    c.rule = "composite_midpoint";
    c.subintervals = {2, 2, 2};
    c.adam.iters = 30000;
    c.adam.learning_rate = 2e-3;
    c.adam.final_lr_factor = 0.1;
    if (desk) {
      c.blocks_to_run = 1;
    } else {
      c.block_iterations = {30000, 20000, 20000, 20000, 20000};
    }
  } else {
    throw ConfigError("unknown benchmark '" + id + "' (expected 6.1, 6.2 or 6.3)");
  }
  return c;
}

struct BlockReport {
  int index = 0;
  double t0 = 0.0, t1 = 0.0;
  double relative_L2 = 0.0;
  std::optional<double> graph_norm_error;
  std::optional<double> loss_ratio;
  FunctionalValue final_loss;
  std::optional<double> chain_mismatch;  // sum Q_E (u_k - u_{k-1})^2 on E_0
  int iterations = 0;
  double wall_time_s = 0.0;
  double tau = 0.0;
  long cells = 0, points = 0, rows = 0, exit_rows = 0;
};

struct RunReport {
  std::string problem;
  std::uint64_t seed = 0;
  int threads = 1;
  long dof = 0;
  long dof_unit_sphere = 0;
  std::vector<double> mesh_steps;
  bool steps_adjusted = false;
  std::vector<BlockReport> blocks;
  RunConfig config;
  std::string status = "ok";
  std::string error;
  double wall_time_s = 0.0;
};

inline nlohmann::json report_to_json(const RunReport& r) {
  nlohmann::json j;
  j["problem"] = r.problem;
  j["seed"] = r.seed;
  j["threads"] = r.threads;
  j["status"] = r.status;
  if (!r.error.empty()) j["error"] = r.error;
  j["parameter_count"] = {{"dof", r.dof}, {"unit_sphere_adjusted", r.dof_unit_sphere}};
  j["mesh"] = {{"steps", r.mesh_steps}, {"steps_adjusted", r.steps_adjusted}};
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : r.blocks) {
    nlohmann::json jb;
    jb["index"] = b.index;
    jb["t0"] = b.t0;
    jb["t1"] = b.t1;
    jb["relative_L2"] = b.relative_L2;
    if (b.graph_norm_error) jb["graph_norm_error"] = *b.graph_norm_error;
    if (b.loss_ratio) jb["loss_ratio"] = *b.loss_ratio;
    if (b.chain_mismatch) jb["chain_mismatch"] = *b.chain_mismatch;
    jb["final_loss"] = {{"interior", b.final_loss.interior},
                        {"inflow_penalty", b.final_loss.inflow_penalty},
                        {"initial_penalty", b.final_loss.initial_penalty},
                        {"total", b.final_loss.total}};
    jb["iterations"] = b.iterations;
    jb["wall_time_s"] = b.wall_time_s;
    jb["tau"] = b.tau;
    jb["cells"] = b.cells;
    jb["points"] = b.points;
    jb["rows"] = b.rows;
    jb["exit_rows"] = b.exit_rows;
    j["blocks"].push_back(jb);
  }
  j["wall_time_s"] = r.wall_time_s;
  j["config"] = config_to_json(r.config);
  return j;
}

// Problem instance resolved from a config.
struct ResolvedProblem {
  ProblemSpec spec;
  ScalarField exact;
  BoxDomain domain;
  std::vector<double> blocks;  // time boundaries (conservation laws only)
};

inline ResolvedProblem resolve_problem(const RunConfig& c) {
  ResolvedProblem r;
  if (c.problem == "6.1") {
    auto p = problem_advection_6_1(c.gamma);
    r.spec = p.problem;
    r.exact = p.exact.eval;
    r.domain = p.problem.domain;
  } else if (c.problem == "6.2" || c.problem == "6.3") {
    auto p = c.problem == "6.2" ? problem_riemann_quartic() : problem_burgers_2d();
    r.spec = p.problem;
    r.exact = p.exact.eval;
    r.domain = p.problem.spacetime;
    r.blocks = c.block_boundaries.empty() ? p.block_boundaries : c.block_boundaries;
    const int ta = r.domain.dim() - 1;
    if (r.blocks.size() < 2) throw ConfigError("blocks.boundaries needs at least two entries");
    for (std::size_t k = 1; k < r.blocks.size(); ++k) {
      if (!(r.blocks[k] > r.blocks[k - 1])) throw ConfigError("blocks.boundaries must be strictly increasing");
    }
    if (std::abs(r.blocks.front() - r.domain.lower(ta)) > 1e-12 || std::abs(r.blocks.back() - r.domain.upper(ta)) > 1e-12) {
      throw ConfigError("blocks.boundaries must cover the time axis");
    }
  } else if (c.problem == "fit1d") {
    auto p = problem_fit_three_kinks();
    r.spec = p;
    r.exact = p.target;
    r.domain = p.domain;
  } else {
    throw ConfigError("unknown problem '" + c.problem + "'");
  }
  return r;
}

inline DiffConfig diff_config(const RunConfig& c, int dim) {
  DiffConfig d;
  d.tau = c.tau;
  d.boundary_rule.kind = quad_kind_from_string(c.rule);
  const auto subs = detail::broadcast(c.subintervals, dim, "diff.subintervals");
  for (int a = 0; a < dim; ++a) d.boundary_rule.subintervals[a] = subs[a];
  d.boundary_rule.validate();
  d.inflow_substitution = c.inflow_substitution;
  d.penalty_weight = c.penalty_weight;
  return d;
}

inline InitConfig init_config(const RunConfig& c) {
  InitConfig i;
  if (c.init_mode == "uniform") {
    i.mode = InitMode::Uniform;
  } else if (c.init_mode == "random") {
    i.mode = InitMode::Random;
  } else {
    throw ConfigError("init.mode must be uniform or random");
  }
  i.seed = c.seed;
  i.noise = c.init_noise;
  i.unit_sphere = c.unit_sphere;
  i.svd_rtol = c.sggn.svd_rtol;
  return i;
}

inline IntegrationMesh make_mesh(const RunConfig& c, const BoxDomain& domain, const ProblemSpec& spec) {
  IntegrationMesh m = build_uniform_mesh(domain, detail::broadcast(c.h, domain.dim(), "mesh.h"));
  const auto subs = detail::broadcast(c.interior_subdivisions, domain.dim(), "mesh.interior_subdivisions");
  std::array<int, kMaxDim> s{1, 1, 1, 1};
  for (int a = 0; a < domain.dim(); ++a) s[a] = subs[a];
  set_interior_subdivisions(m, s);
  return classify_faces(std::move(m), spec);
}

inline void validate_config(const RunConfig& c) {
  if (c.widths.empty()) throw ConfigError("network.widths must be nonempty");
  for (int w : c.widths) {
    if (w < 1) throw ConfigError("network.widths must be positive");
  }
  if (c.optimizer != "adam" && c.optimizer != "sggn") throw ConfigError("optimizer.kind must be adam or sggn");
  if (c.threads < 1) throw ConfigError("threads must be >= 1");
  for (double h : c.h) {
    if (!(h > 0.0)) throw ConfigError("mesh.h must be positive");
  }
  try {
    c.adam.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

struct TrainResult {
  NetworkParams params;
  std::vector<HistoryEntry> history;
  FunctionalValue final_value;
  int iterations = 0;
};

// Train on a fixed plan with the configured optimizer.
inline TrainResult train_on_plan(const RunConfig& c, PlanObjective& obj, const NetworkParams& init, int iters) {
  TrainResult out;
  if (c.optimizer == "adam") {
    AdamConfig a = c.adam;
    a.iters = iters;
    a.seed = c.seed;
    Objective f = [&](const NetworkParams& p, Eigen::VectorXd& g) { return obj.value_and_grad(p, g); };
    AdamResult r = adam_minimize(f, init, a);
    out.params = std::move(r.params);
    out.history = std::move(r.history);
    out.final_value = r.final_value;
    out.iterations = iters;
    return out;
  }
  if (!init.arch.shallow()) throw ConfigError("sggn requires a single hidden layer");
  if (!obj.plan().is_linear()) throw ConfigError("sggn supports linear problems only");
  LinearStructure ls(obj.plan());
  out.params = init;
  out.params.linear = solve_linear(assemble_A_F(out.params, ls, obj.evaluator()), c.sggn.svd_rtol).x;
  FunctionalValue v = obj.value(out.params);
  out.history.push_back({0, v.interior, v.inflow_penalty, v.initial_penalty, v.total, 0.0, 0.0});
  for (int it = 1; it <= iters; ++it) {
    const SgGNStepInfo s = sggn_step(out.params, obj, ls, c.sggn);
    v = obj.value(out.params);
    out.history.push_back({it, v.interior, v.inflow_penalty, v.initial_penalty, v.total, s.grad_norm, s.step});
    out.iterations = it;
    if (s.empty_active) break;
  }
  out.final_value = obj.value(out.params);
  return out;
}

inline void write_loss_csv(std::ofstream& os, int block, const std::vector<HistoryEntry>& h) {
  for (const auto& e : h) {
    os << block << ',' << e.iter << ',' << e.interior << ',' << e.inflow << ',' << e.initial << ',' << e.total << ','
       << e.grad_norm << ',' << e.step_size << '\n';
  }
}

inline void write_gnuplot_script(const std::string& dir, int dim) {
  std::ofstream os(dir + "/plot.gp");
  os << "set datafile separator ','\n"
     << "set terminal pngcairo size 900,700\n"
     << "set output 'loss.png'\n"
     << "set logscale y\nset xlabel 'iteration'\nset ylabel 'loss'\n"
     << "plot 'loss.csv' every ::1 using 2:6 with lines title 'total'\n"
     << "unset logscale y\n"
     << "set output 'solution.png'\n";
  if (dim == 2) {
    os << "set view map\nsplot 'solution_grid.csv' every ::1 using 2:3:4 with points pt 5 ps 0.5 palette title 'u_NN'\n";
  } else {
    os << "plot 'solution_grid.csv' every ::1 using 2:" << dim + 2 << " with points title 'u_NN'\n";
  }
}

inline void write_solution_grid(std::ofstream& os, int block, const EvalGrid& grid, const Eigen::VectorXd& u,
                                const Eigen::VectorXd& exact) {
  for (Eigen::Index j = 0; j < grid.points.cols(); ++j) {
    os << block;
    for (Eigen::Index a = 0; a < grid.points.rows(); ++a) os << ',' << grid.points(a, j);
    os << ',' << u(j) << ',' << exact(j) << '\n';
  }
}

// Solve the configured problem, block by block for conservation laws. Each
// block warm-starts from the previous block's parameters and takes the
// previous network's trace at its lower time face as initial data.
inline RunReport run_block_spacetime(const RunConfig& cfg) {
  validate_config(cfg);
  const auto t_start = std::chrono::steady_clock::now();
  const ResolvedProblem rp = resolve_problem(cfg);
  const int dim = rp.domain.dim();
  const DiffConfig dcfg = diff_config(cfg, dim);
  const InitConfig icfg = init_config(cfg);
  NetworkArchitecture arch{dim, cfg.widths};

  RunReport rep;
  rep.problem = cfg.problem;
  rep.seed = cfg.seed;
  rep.threads = cfg.threads;
  rep.dof = count_parameters(arch);
  rep.dof_unit_sphere = count_parameters_unit_sphere(arch);
  rep.config = cfg;

  const bool hcl = std::holds_alternative<HCLProblem>(rp.spec);
  const int nblocks_total = hcl ? static_cast<int>(rp.blocks.size()) - 1 : 1;
  const int nblocks = cfg.blocks_to_run > 0 ? std::min(cfg.blocks_to_run, nblocks_total) : nblocks_total;

  const bool write = !cfg.output.empty();
  std::ofstream loss_os, grid_os;
  if (write) {
    std::filesystem::create_directories(cfg.output);
    loss_os.open(cfg.output + "/loss.csv");
    loss_os.precision(17);
    loss_os << "block,iter,interior,inflow,initial,total,grad_norm,step_size\n";
    grid_os.open(cfg.output + "/solution_grid.csv");
    grid_os.precision(17);
    grid_os << "block";
    for (int a = 0; a < dim; ++a) grid_os << ",x" << a;
    grid_os << ",u_nn,u_exact\n";
  }

  std::optional<NetworkParams> prev;
  try {
    for (int k = 0; k < nblocks; ++k) {
      const auto tb = std::chrono::steady_clock::now();
      ProblemSpec spec = rp.spec;
      BoxDomain domain = rp.domain;
      BlockReport br;
      br.index = k;
      if (hcl) {
        HCLProblem hp = time_block(std::get<HCLProblem>(rp.spec), rp.blocks[k], rp.blocks[k + 1]);
        if (prev) {
          NetworkParams trace = *prev;
          hp.u0 = [trace](const Point& x) { return evaluate(trace, x); };
        }
        spec = hp;
        domain = hp.spacetime;
        br.t0 = rp.blocks[k];
        br.t1 = rp.blocks[k + 1];
      }
      const IntegrationMesh mesh = make_mesh(cfg, domain, spec);
      if (k == 0) {
        rep.mesh_steps = mesh.steps;
        rep.steps_adjusted = mesh.steps_adjusted;
      }
      PlanObjective obj(build_plan(spec, mesh, dcfg), cfg.threads);
      br.cells = static_cast<long>(mesh.cells.size());
      br.points = static_cast<long>(obj.plan().num_points());
      br.rows = static_cast<long>(obj.plan().num_rows());
      br.exit_rows = obj.plan().exit_rows;
      br.tau = obj.plan().tau;

      NetworkParams init = prev ? *prev : init_uniform(arch, spec, mesh, dcfg, icfg, cfg.threads);
      int iters = cfg.optimizer == "adam" ? cfg.adam.iters : cfg.sggn.max_iters;
      if (!cfg.block_iterations.empty()) iters = cfg.block_iterations[std::min<std::size_t>(k, cfg.block_iterations.size() - 1)];
      TrainResult tr = train_on_plan(cfg, obj, init, iters);
      br.final_loss = tr.final_value;
      br.iterations = tr.iterations;
      if (write) write_loss_csv(loss_os, k, tr.history);

      const double eval_h = cfg.eval_h > 0.0 ? cfg.eval_h : 0.5 * mesh.min_extent();
      const EvalGrid grid = make_midpoint_grid(domain, eval_h);
      const Eigen::VectorXd u_nn = evaluate_batch(tr.params, grid.points, cfg.threads);
      const Eigen::VectorXd u_ex = sample(rp.exact, grid.points);
      br.relative_L2 = relative_L2(u_nn, u_ex, grid.weights);
      if (const auto* lp = std::get_if<LinearProblem>(&spec)) {
        br.graph_norm_error = graph_norm_error(tr.params, rp.exact, *lp, grid, obj.plan().tau);
        DiffConfig d2 = dcfg;
        d2.tau = obj.plan().tau;
        br.loss_ratio = loss_ratio(tr.params, *lp, mesh, d2);
      }
      if (hcl && prev) {
        double s = 0.0;
        for (const auto& ref : mesh.initial_faces) {
          for (const auto& q : face_quadrature(mesh.cells[ref.cell], ref.face, dcfg.boundary_rule)) {
            const double e = evaluate(tr.params, q.x) - evaluate(*prev, q.x);
            s += q.w * e * e;
          }
        }
        br.chain_mismatch = s;
      }
      if (write) {
        const double gh = cfg.grid_h > 0.0 ? cfg.grid_h : eval_h;
        const EvalGrid g2 = gh == eval_h ? grid : make_midpoint_grid(domain, gh);
        write_solution_grid(grid_os, k, g2, gh == eval_h ? u_nn : evaluate_batch(tr.params, g2.points),
                            gh == eval_h ? u_ex : sample(rp.exact, g2.points));
        save_params(tr.params, cfg.output + "/params_block" + std::to_string(k) + ".json");
        if (k == 0) {
          write_mesh_csv(mesh, cfg.output + "/mesh.csv");
          write_faces_csv(mesh, cfg.output + "/faces.csv");
        }
        if (k + 1 == nblocks) {
          obj.value(tr.params);
          write_residual_csv(obj.plan(), obj.last_residuals(), cfg.output + "/residual.csv");
          save_params(tr.params, cfg.output + "/params_final.json");
        }
      }
      br.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - tb).count();
      rep.blocks.push_back(br);
      prev = std::move(tr.params);
    }
  } catch (const TrainingDiverged& e) {
    rep.status = "numeric_failure";
    rep.error = e.what();
    if (write) save_params(e.last_good, cfg.output + "/params_last_good.json");
  } catch (const NumericError& e) {
    rep.status = "numeric_failure";
    rep.error = e.what();
  }
  rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  if (write) {
    std::ofstream os(cfg.output + "/report.json");
    os << report_to_json(rep).dump(2) << '\n';
    write_gnuplot_script(cfg.output, dim);
  }
  return rep;
}

struct AqrDemoResult {
  AqrResult aqr;
  double tau = 0.0;
};

// Algorithm of adaptive quadrature refinement on a linear problem. The
// directional step is frozen at its value on the initial mesh.
inline AqrDemoResult run_aqr_demo(const RunConfig& cfg) {
  validate_config(cfg);
  const ResolvedProblem rp = resolve_problem(cfg);
  const auto* lp = std::get_if<LinearProblem>(&rp.spec);
  if (!lp) throw ConfigError("aqr-demo requires a linear problem (6.1)");
  const int dim = rp.domain.dim();
  DiffConfig dcfg = diff_config(cfg, dim);
  const InitConfig icfg = init_config(cfg);
  NetworkArchitecture arch{dim, cfg.widths};
  const IntegrationMesh mesh0 = make_mesh(cfg, rp.domain, rp.spec);
  dcfg.tau = dcfg.resolve_tau(mesh0);

  MarkStrategy ms;
  if (cfg.aqr.marking == "bulk") {
    ms.kind = MarkKind::Bulk;
  } else if (cfg.aqr.marking == "average") {
    ms.kind = MarkKind::Average;
  } else {
    throw ConfigError("aqr.marking must be bulk or average");
  }
  ms.theta = cfg.aqr.theta;

  AqrTrain train = [&](const IntegrationMesh& m, const NetworkParams* warm) {
    PlanObjective obj(build_plan_linear(*lp, m, dcfg), cfg.threads);
    NetworkParams init = warm ? *warm : init_uniform(arch, rp.spec, m, dcfg, icfg, cfg.threads);
    return train_on_plan(cfg, obj, init, cfg.aqr.train_iters).params;
  };
  AqrIndicator ind = [&](const NetworkParams& p, const IntegrationMesh& m) {
    DiffConfig d = dcfg;
    d.penalty_weight = 0.0;
    PlanObjective obj(build_plan_linear(*lp, m, d), cfg.threads);
    return obj.value(p).per_cell;
  };
  AqrDemoResult out;
  out.tau = dcfg.tau;
  out.aqr = aqr(mesh0, train, ind, cfg.aqr.gamma, cfg.aqr.max_rounds, ms);
  if (!cfg.output.empty()) {
    std::filesystem::create_directories(cfg.output);
    std::ofstream os(cfg.output + "/aqr.csv");
    os.precision(17);
    os << "round,cells,eta,accepted,marked\n";
    for (std::size_t r = 0; r < out.aqr.rounds.size(); ++r) {
      const auto& rr = out.aqr.rounds[r];
      os << r << ',' << rr.cells << ',' << rr.eta << ',' << (rr.accepted ? 1 : 0) << ',' << rr.marked.size() << '\n';
    }
    for (std::size_t r = 0; r < out.aqr.meshes.size(); ++r) {
      write_mesh_csv(out.aqr.meshes[r], cfg.output + "/mesh_round" + std::to_string(r) + ".csv");
    }
    save_params(out.aqr.params, cfg.output + "/params_final.json");
  }
  return out;
}

}  // namespace lsnn
