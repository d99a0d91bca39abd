// Command-line front end: solve, benchmark, aqr-demo, evaluate, verify.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "lsnn/lsnn.hpp"
#include "lsnn/verify.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

void print_summary(const lsnn::RunReport& r) {
  std::printf("problem %s  seed %llu  dof %ld (unit-sphere %ld)\n", r.problem.c_str(),
              static_cast<unsigned long long>(r.seed), r.dof, r.dof_unit_sphere);
  for (const auto& b : r.blocks) {
    std::printf("  block %d", b.index);
    if (b.t1 > b.t0) std::printf(" t in [%g, %g]", b.t0, b.t1);
    std::printf(": rel L2 %.6f", b.relative_L2);
    if (b.graph_norm_error) std::printf("  graph %.6f", *b.graph_norm_error);
    if (b.loss_ratio) std::printf("  loss ratio %.6f", *b.loss_ratio);
    std::printf("  loss %.3e  iters %d  %.1fs\n", b.final_loss.total, b.iterations, b.wall_time_s);
  }
  if (r.status != "ok") std::printf("status: %s (%s)\n", r.status.c_str(), r.error.c_str());
}

int finish(const lsnn::RunReport& r) {
  print_summary(r);
  return r.status == "ok" ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Least-squares ReLU network solver for hyperbolic problems"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  long long seed = -1;
  int threads = 0, iters = -1, blocks = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Random seed");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--threads", threads, "Worker threads (default 1)");
    sub->add_option("--iters", iters, "Override optimizer iterations for every block");
    sub->add_option("--blocks", blocks, "Number of time blocks to run");
  };

  auto* solve = app.add_subcommand("solve", "Run one configured solve");
  solve->add_option("--config", config_path, "JSON config file")->required();
  add_common(solve);

  std::string bench_id, scale = "desk";
  auto* bench = app.add_subcommand("benchmark", "Run a canned benchmark (6.1, 6.2, 6.3)");
  bench->add_option("id", bench_id, "Benchmark id")->required()->check(CLI::IsMember({"6.1", "6.2", "6.3"}));
  bench->add_option("--scale", scale, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  add_common(bench);

  auto* aqr = app.add_subcommand("aqr-demo", "Adaptive quadrature refinement on a linear problem");
  aqr->add_option("--config", config_path, "JSON config file")->required();
  add_common(aqr);

  std::string params_path;
  double grid_h = 0.01;
  std::vector<double> lower, upper;
  auto* eval = app.add_subcommand("evaluate", "Dense evaluation of a saved network");
  eval->add_option("--params", params_path, "Parameter snapshot (JSON)")->required();
  eval->add_option("--grid", grid_h, "Grid spacing")->check(CLI::PositiveNumber);
  eval->add_option("--lower", lower, "Box lower corner (default 0)");
  eval->add_option("--upper", upper, "Box upper corner (default 1)");
  eval->add_option("--out", out_dir, "Output CSV (default stdout)");

  auto* verify = app.add_subcommand("verify", "Run the built-in oracle checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    auto apply_overrides = [&](lsnn::RunConfig& c) {
      if (seed >= 0) c.seed = static_cast<std::uint64_t>(seed);
      if (!out_dir.empty()) c.output = out_dir;
      if (threads > 0) c.threads = threads;
      if (blocks > 0) c.blocks_to_run = blocks;
      if (iters >= 0) {
        c.adam.iters = iters;
        c.sggn.max_iters = iters;
        c.block_iterations.clear();
      }
    };

    if (solve->parsed()) {
      lsnn::RunConfig c = lsnn::load_config(config_path);
      apply_overrides(c);
      return finish(lsnn::run_block_spacetime(c));
    }
    if (bench->parsed()) {
      lsnn::RunConfig c = lsnn::benchmark_config(bench_id, scale);
      apply_overrides(c);
      return finish(lsnn::run_block_spacetime(c));
    }
    if (aqr->parsed()) {
      lsnn::RunConfig c = lsnn::load_config(config_path);
      apply_overrides(c);
      const auto res = lsnn::run_aqr_demo(c);
      for (std::size_t r = 0; r < res.aqr.rounds.size(); ++r) {
        const auto& rr = res.aqr.rounds[r];
        std::printf("round %zu: cells %d  eta %.6e  %s\n", r, rr.cells, rr.eta, rr.accepted ? "accepted" : "rejected");
      }
      std::printf("accepted rounds: %d, final cells: %zu\n", res.aqr.accepted_rounds, res.aqr.mesh.cells.size());
      return 0;
    }
    if (eval->parsed()) {
      const lsnn::NetworkParams p = lsnn::load_params(params_path);
      const int d = p.arch.input_dim;
      if (lower.empty()) lower.assign(d, 0.0);
      if (upper.empty()) upper.assign(d, 1.0);
      if (static_cast<int>(lower.size()) != d || static_cast<int>(upper.size()) != d) {
        throw lsnn::ConfigError("--lower/--upper must have input_dim entries");
      }
      lsnn::BoxDomain box{lsnn::Point(d), lsnn::Point(d)};
      for (int a = 0; a < d; ++a) {
        box.lower(a) = lower[a];
        box.upper(a) = upper[a];
      }
      box.validate();
      const lsnn::EvalGrid g = lsnn::make_midpoint_grid(box, grid_h);
      std::ofstream file;
      if (!out_dir.empty()) {
        file.open(out_dir);
        if (!file) throw lsnn::ConfigError("cannot write " + out_dir);
      }
      std::ostream& os = out_dir.empty() ? std::cout : file;
      os.precision(17);
      for (int a = 0; a < d; ++a) os << 'x' << a << ',';
      os << "u\n";
      for (Eigen::Index j = 0; j < g.points.cols(); ++j) {
        const lsnn::Point x = g.points.col(j);
        for (int a = 0; a < d; ++a) os << x(a) << ',';
        os << lsnn::evaluate(p, x) << '\n';
      }
      return 0;
    }
    if (verify->parsed()) {
      bool ok = true;
      for (const auto& c : lsnn::run_verification()) {
        std::printf("%s  %-48s value %.3e  tol %.1e\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.value, c.tolerance);
        ok &= c.pass;
      }
      return ok ? 0 : 1;
    }
  } catch (const lsnn::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const lsnn::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  }
  return 0;
}
