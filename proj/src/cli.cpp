#include "dsmpc/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "dsmpc/errors.hpp"
#include "dsmpc/scenario_io.hpp"

namespace dsmpc {

namespace {

struct CommonOptions {
  std::string scenario;
  std::string formulation;
  std::string solver = "bnb";
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--scenario", o.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--formulation", o.formulation, "inv, root or log (default: from scenario)")
      ->check(CLI::IsMember({"inv", "root", "log"}));
  cmd->add_option("--solver", o.solver, "bnb or exhaustive")
      ->check(CLI::IsMember({"bnb", "exhaustive"}));
  cmd->add_option("--seed", o.seed, "Seed for the gain grid and the disturbances");
  cmd->add_option("--out", o.out, "Output directory");
}

Scenario load_with_overrides(const CommonOptions& o) {
  Scenario sc = io::load_scenario(o.scenario);
  if (!o.formulation.empty()) {
    sc.formulation = parse_approx_kind(o.formulation);
    if (sc.approx && sc.approx->kind != sc.formulation) sc.approx.reset();
  }
  if (o.seed) sc.seed = *o.seed;
  return sc;
}

std::string output_path(const std::string& dir, const std::string& file) {
  std::filesystem::create_directories(dir);
  return (std::filesystem::path(dir) / file).string();
}

int cmd_plan(const CommonOptions& o, int steps, std::ostream& out) {
  const Scenario sc = load_with_overrides(o);
  const PreparedScenario prepared = prepare_scenario(sc);
  const SolverMode mode = parse_solver_mode(o.solver);
  const RunRecord run = receding_horizon_run(prepared, steps, mode,
                                             gaussian_generator(sc.model.nw(), sc.seed));
  io::write_text(output_path(o.out, "trajectory.csv"), io::trajectory_csv(run));
  io::write_text(output_path(o.out, "summary.json"), io::run_summary_json(sc, run, mode, sc.seed));
  out << "steps solved: " << run.steps.size() << " of " << steps << "\n";
  out << "path length: " << path_length(sc, run) << "\n";
  if (run.infeasible) {
    out << run.message << "\n";
    return kExitInfeasible;
  }
  return kExitOk;
}

int cmd_mc(const CommonOptions& o, int steps, int runs, double scale, int threads, int keep,
           std::ostream& out) {
  const Scenario sc = load_with_overrides(o);
  const PreparedScenario prepared = prepare_scenario(sc);
  MonteCarloOptions mc;
  mc.runs = runs;
  mc.steps = steps;
  mc.mode = parse_solver_mode(o.solver);
  mc.seed = sc.seed;
  mc.disturbanceScale = scale;
  mc.threads = threads;
  mc.keepTrajectories = keep;
  const MonteCarloReport rep = monte_carlo(prepared, mc);
  io::write_text(output_path(o.out, "montecarlo.json"), io::monte_carlo_json(rep));
  for (std::size_t r = 0; r < rep.trajectories.size(); ++r) {
    io::write_text(output_path(o.out, "run_" + std::to_string(r) + ".csv"),
                   io::trajectory_csv(rep.trajectories[r]));
  }
  out << "runs: " << rep.runs << "\n";
  out << "empirical joint violation: " << rep.empiricalJointViolation << " (xi " << sc.xi << ")\n";
  out << "infeasible runs: " << rep.infeasibleRuns << "\n";
  return kExitOk;
}

int cmd_audit(const std::string& formulation, const std::string& source, int points, double lo,
              const std::string& outFile, std::ostream& out) {
  const ApproxKind kind = parse_approx_kind(formulation);
  ApproxParams params;
  if (source == "table") {
    params = table_params(kind);
  } else if (source == "fit") {
    params = fit_psi(kind, 1e-4, curvature_cap(kind), 400).params;
  } else {
    params = certified_params(kind);
  }
  const std::string csv = io::approximation_audit_csv(params, lo, points);
  if (outFile.empty()) {
    out << csv;
    return kExitOk;
  }
  io::write_text(outFile, csv);
  out << "params: " << io::approx_params_json(params);
  out << "max signed violation on [" << lo << ", " << params.intervalMax
      << "]: " << max_bound_violation(params, lo, params.intervalMax) << "\n";
  return kExitOk;
}

int cmd_crosscheck(const CommonOptions& o, std::ostream& out) {
  const Scenario sc = load_with_overrides(o);
  const PreparedScenario prepared = prepare_scenario(sc);
  const OCPInstance inst = assemble_ocp(prepared, sc.x0);
  const OcpSolveResult bnb = solve_ocp(inst, SolverMode::BnB);
  const OcpSolveResult es = solve_ocp(inst, SolverMode::Exhaustive);
  out << std::setprecision(12);
  out << "bnb: " << conic::to_string(bnb.solution.status) << " objective "
      << bnb.solution.objectiveValue << " nodes " << bnb.nodes << " relaxation solves "
      << bnb.relaxationSolves << "\n";
  out << "exhaustive: " << conic::to_string(es.solution.status) << " objective "
      << es.solution.objectiveValue << " nodes " << es.nodes << " relaxation solves "
      << es.relaxationSolves << "\n";
  if (!bnb.solution.optimal() && !es.solution.optimal()) return kExitInfeasible;
  if (bnb.solution.optimal() != es.solution.optimal()) {
    out << "status mismatch\n";
    return kExitUsage;
  }
  const double delta = std::abs(bnb.solution.objectiveValue - es.solution.objectiveValue);
  out << "objective delta: " << delta << "\n";
  const bool agree =
      delta <= 1e-6 * std::max(1.0, std::abs(es.solution.objectiveValue));
  out << (agree ? "agree" : "disagree") << "\n";
  return agree ? kExitOk : kExitUsage;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stochastic MPC with feedback selection and conic risk allocation", "dsmpc"};
  app.require_subcommand(1);

  CommonOptions planOpts;
  int planSteps = 30;
  auto* plan = app.add_subcommand("plan", "Receding-horizon run; writes trajectory.csv and summary.json");
  add_common(plan, planOpts);
  plan->add_option("--steps", planSteps, "Closed-loop steps")->check(CLI::PositiveNumber);

  CommonOptions mcOpts;
  int mcSteps = 10;
  int runs = 100;
  double scale = 1.0;
  int threads = 1;
  int keep = 0;
  auto* mc = app.add_subcommand("mc", "Closed-loop Monte Carlo; writes montecarlo.json");
  add_common(mc, mcOpts);
  mc->add_option("--steps", mcSteps, "Closed-loop steps per run")->check(CLI::PositiveNumber);
  mc->add_option("--runs", runs, "Number of runs")->check(CLI::PositiveNumber);
  mc->add_option("--scale", scale, "Disturbance scale")->check(CLI::NonNegativeNumber);
  mc->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  mc->add_option("--keep", keep, "Write run_<r>.csv for the first K runs")->check(CLI::NonNegativeNumber);

  std::string auditKind;
  std::string auditSource = "certified";
  int points = 10000;
  double lo = kRiskFloor;
  std::string auditOut;
  auto* audit = app.add_subcommand("audit-approx", "Grid of Psi against the exact composition as CSV");
  audit->add_option("--formulation", auditKind, "inv, root or log")
      ->required()
      ->check(CLI::IsMember({"inv", "root", "log"}));
  audit->add_option("--params", auditSource, "certified, table or fit")
      ->check(CLI::IsMember({"certified", "table", "fit"}));
  audit->add_option("--points", points, "Grid size")->check(CLI::Range(2, 10000000));
  audit->add_option("--lo", lo, "Lower end of the grid")->check(CLI::PositiveNumber);
  audit->add_option("--out", auditOut, "CSV file (default: stdout)");

  CommonOptions ccOpts;
  auto* cross = app.add_subcommand("crosscheck", "Branch-and-bound against exhaustive search at x0");
  add_common(cross, ccOpts);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (plan->parsed()) return cmd_plan(planOpts, planSteps, out);
    if (mc->parsed()) return cmd_mc(mcOpts, mcSteps, runs, scale, threads, keep, out);
    if (audit->parsed()) return cmd_audit(auditKind, auditSource, points, lo, auditOut, out);
    if (cross->parsed()) return cmd_crosscheck(ccOpts, out);
  } catch (const SchemaError& e) {
    err << "schema error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace dsmpc
