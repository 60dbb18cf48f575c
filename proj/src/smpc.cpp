#include "dsmpc/smpc.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <thread>

#include "dsmpc/conic_solver.hpp"
#include "dsmpc/errors.hpp"

namespace dsmpc {

using conic::AffineExpr;
using conic::ConicProgram;
using conic::VarId;

namespace {

void check_polytope(const Polytope& poly, int cols, const std::string& field) {
  if (poly.P.rows() == 0) throw SchemaError(field + ".P: at least one face is required");
  if (poly.P.cols() != cols) {
    throw DimensionError(field + ".P: expected " + std::to_string(cols) + " columns, got " +
                         std::to_string(poly.P.cols()));
  }
  if (poly.p.size() != poly.P.rows()) {
    throw DimensionError(field + ".p: expected " + std::to_string(poly.P.rows()) + " entries");
  }
  for (Eigen::Index i = 0; i < poly.P.rows(); ++i) {
    if (poly.P.row(i).norm() == 0.0) {
      throw SchemaError(field + ".P[" + std::to_string(i) + "]: zero face normal");
    }
  }
  if (!poly.P.allFinite() || !poly.p.allFinite()) throw SchemaError(field + ": non-finite entry");
}

Eigen::RowVectorXd place_row(const Eigen::RowVectorXd& face, int block, int blockSize, int length) {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(length);
  row.segment(static_cast<Eigen::Index>(block) * blockSize, blockSize) = face;
  return row;
}

Eigen::VectorXd values(const Eigen::VectorXd& primal, const std::vector<VarId>& ids) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) out(static_cast<Eigen::Index>(i)) = primal(ids[i]);
  return out;
}

}  // namespace

bool Polytope::contains(const Eigen::VectorXd& z, double tol) const {
  return ((P * z - p).array() <= tol).all();
}

bool Polytope::strictly_contains(const Eigen::VectorXd& z) const {
  return ((P * z - p).array() < 0.0).all();
}

void Scenario::validate() const {
  model.validate();
  const int nx = model.nx();
  const int nu = model.nu();
  if (horizon < 1) throw SchemaError("horizon: must be >= 1");
  if (x0.size() != nx) throw DimensionError("x0: expected " + std::to_string(nx) + " entries");
  if (!x0.allFinite()) throw SchemaError("x0: non-finite entry");
  check_polytope(stayIn, nx, "stayIn");
  if (stayOut) check_polytope(*stayOut, nx, "stayOut");
  check_polytope(target, nx, "target");
  check_polytope(inputSet, nu, "inputSet");
  if (!(xi > 0.0 && xi <= 0.5)) throw SchemaError("xi: must lie in (0, 0.5]");
  if (!(gammaInput > 0.0 && gammaInput < 0.5)) throw SchemaError("gammaInput: must lie in (0, 0.5)");
  if (!(gammaTerminal > 0.0 && gammaTerminal < 0.5)) {
    throw SchemaError("gammaTerminal: must lie in (0, 0.5)");
  }
  if (R.rows() != nu || R.cols() != nu) throw DimensionError("weights.R: expected nu x nu");
  if (!R.isApprox(R.transpose()) || !R.allFinite()) throw SchemaError("weights.R: not symmetric");
  if (Q.size() != 0) {
    if (Q.rows() != nx || Q.cols() != nx) throw DimensionError("weights.Q: expected nx x nx");
    if (!Q.isApprox(Q.transpose()) || !Q.allFinite()) throw SchemaError("weights.Q: not symmetric");
  }
  const std::size_t families = stayOut ? 2 : 1;
  if (riskWeights.size() != families) {
    throw DimensionError("weights.S: expected " + std::to_string(families) + " entries");
  }
  for (double s : riskWeights) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw SchemaError("weights.S: must be finite and >= 0");
  }
  if (gainGrid.NL < 1) throw SchemaError("gainGrid.NL: must be >= 1");
  if (!(gainGrid.rMin > 0.0 && gainGrid.rMin <= gainGrid.rMax)) {
    throw SchemaError("gainGrid: need 0 < rMin <= rMax");
  }
  if (static_cast<int>(gainGrid.stateWeights.size()) != nx) {
    throw DimensionError("gainGrid.stateWeights: expected " + std::to_string(nx) + " entries");
  }
  if (gainGrid.stateSlot < 0 || gainGrid.stateSlot >= nx) {
    throw SchemaError("gainGrid.stateSlot: out of range");
  }
  if (approx && approx->kind != formulation) {
    throw SchemaError("approx.kind: must match formulation");
  }
  for (int i : positionIndices) {
    if (i < 0 || i >= nx) throw SchemaError("positionIndices: entry out of range");
  }
}

Eigen::MatrixXd stacked_state_weight(const StackedSystem& stacked, const Eigen::MatrixXd& Q) {
  const int n = static_cast<int>(stacked.calA.rows());
  Eigen::MatrixXd calQ = Eigen::MatrixXd::Zero(n, n);
  if (Q.size() == 0) return calQ;
  for (int i = 1; i <= stacked.N; ++i) calQ.block(i * stacked.nx, i * stacked.nx, stacked.nx, stacked.nx) = Q;
  return calQ;
}

ExpectedCostTerms expected_cost_terms(const StackedSystem& stacked, const GainLibrary& library,
                                      const Eigen::MatrixXd& R, const Eigen::MatrixXd& Q,
                                      const std::vector<double>& S, const Eigen::VectorXd& x0) {
  const Eigen::MatrixXd calR = block_diagonal(R, stacked.N);
  const Eigen::MatrixXd calQ = stacked_state_weight(stacked, Q);
  const Eigen::VectorXd ax = stacked.calA * x0;
  ExpectedCostTerms t;
  t.quadV = calR + stacked.calB.transpose() * calQ * stacked.calB;
  t.quadV = 0.5 * (t.quadV + t.quadV.transpose()).eval();
  t.linearV = 2.0 * stacked.calB.transpose() * (calQ * ax);
  t.constant = ax.dot(calQ * ax);
  t.linearDelta.resize(static_cast<Eigen::Index>(library.size()));
  for (std::size_t k = 0; k < library.size(); ++k) {
    const Eigen::MatrixXd& M = library.calM[k];
    const Eigen::MatrixXd closed = stacked.calG + stacked.calB * M;
    t.linearDelta(static_cast<Eigen::Index>(k)) =
        (closed.transpose() * calQ * closed).trace() + (M.transpose() * calR * M).trace();
  }
  t.linearGamma.resize(static_cast<Eigen::Index>(S.size()) * stacked.N);
  for (std::size_t f = 0; f < S.size(); ++f) {
    t.linearGamma.segment(static_cast<Eigen::Index>(f) * stacked.N, stacked.N).setConstant(S[f]);
  }
  return t;
}

double expected_cost_value(const ExpectedCostTerms& terms, const Eigen::VectorXd& V, int k,
                           const Eigen::VectorXd& Gamma) {
  return V.dot(terms.quadV * V) + terms.linearV.dot(V) + terms.linearDelta(k) +
         terms.linearGamma.dot(Gamma) + terms.constant;
}

PreparedScenario prepare_scenario(const Scenario& scenario) {
  scenario.validate();
  PreparedScenario out;
  out.scenario = scenario;
  out.stacked = build_stacked(scenario.model, scenario.horizon);
  out.library = build_gain_library(scenario.model, out.stacked, scenario.gainGrid, scenario.R,
                                   scenario.seed);
  out.approx = scenario.approx ? *scenario.approx : certified_params(scenario.formulation);
  if (!scenario.stayOut) return out;

  double backoff = max_backoff_factor(out.approx);
  if (out.approx.kind == ApproxKind::Root) {
    backoff = std::max(backoff, max_backoff_factor(certified_params(ApproxKind::Inv)));
  }
  const int nx = scenario.model.nx();
  const int N = scenario.horizon;
  const Polytope& in = scenario.stayIn;
  const Polytope& obs = *scenario.stayOut;
  for (int l = 0; l < obs.faces(); ++l) {
    // Largest p_l - P_l x over the stay-in region.
    ConicProgram lp;
    std::vector<VarId> x;
    for (int j = 0; j < nx; ++j) x.push_back(lp.add_variable("x" + std::to_string(j)));
    for (int r = 0; r < in.faces(); ++r) {
      AffineExpr row(in.p(r));
      for (int j = 0; j < nx; ++j) row.add(x[static_cast<std::size_t>(j)], -in.P(r, j));
      lp.add_nonnegative(row);
    }
    AffineExpr obj;
    for (int j = 0; j < nx; ++j) obj.add(x[static_cast<std::size_t>(j)], obs.P(l, j));
    lp.set_objective(obj);
    const conic::Solution sol = conic::solve_relaxation(lp);
    if (!sol.optimal()) {
      throw DomainError("stayIn must bound stay-out face " + std::to_string(l) + " (" +
                        conic::to_string(sol.status) + ")");
    }
    const double eMax = obs.p(l) - sol.objectiveValue;
    double rMax = 0.0;
    for (int i = 1; i <= N; ++i) {
      ChanceConstraintSpec spec;
      spec.Hrow = place_row(obs.P.row(l), i, nx, (N + 1) * nx);
      rMax = std::max(rMax, compute_rk(spec, out.stacked, out.library).max_r());
    }
    out.stayOutBigM.push_back(size_big_m(eMax, rMax, backoff));
  }
  return out;
}

const char* to_string(ChanceFamily family) {
  switch (family) {
    case ChanceFamily::StayIn: return "stayIn";
    case ChanceFamily::StayOut: return "stayOut";
    case ChanceFamily::Input: return "input";
    case ChanceFamily::Terminal: return "terminal";
  }
  return "?";
}

OCPInstance assemble_ocp(const PreparedScenario& prepared, const Eigen::VectorXd& x) {
  const Scenario& sc = prepared.scenario;
  const StackedSystem& st = prepared.stacked;
  const GainLibrary& lib = prepared.library;
  const int N = st.N;
  const int nx = st.nx;
  const int nu = st.nu;
  const int stateLen = (N + 1) * nx;
  if (x.size() != nx) throw DimensionError("state has the wrong dimension");

  OCPInstance inst;
  inst.x = x;
  ConicProgram& prog = inst.program;

  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < nu; ++j) {
      inst.V.push_back(prog.add_variable("v[" + std::to_string(i) + "][" + std::to_string(j) + "]"));
    }
  }
  for (std::size_t k = 0; k < lib.size(); ++k) {
    inst.delta.push_back(prog.add_binary("delta[" + std::to_string(k) + "]"));
  }
  prog.add_one_hot_group(inst.delta);
  inst.counts.oneHotGroups = 1;

  for (int i = 1; i <= N; ++i) {
    inst.stayInRisk.push_back(
        make_risk_variable(prog, prepared.approx, sc.xi, "gammaI[" + std::to_string(i) + "]"));
    inst.Gamma.push_back(inst.stayInRisk.back().gamma);
  }
  if (sc.stayOut) {
    for (int i = 1; i <= N; ++i) {
      inst.stayOutRisk.push_back(
          make_risk_variable(prog, prepared.approx, sc.xi, "gammaO[" + std::to_string(i) + "]"));
      inst.Gamma.push_back(inst.stayOutRisk.back().gamma);
      std::vector<VarId> group;
      for (int l = 0; l < sc.stayOut->faces(); ++l) {
        group.push_back(prog.add_binary("sigma[" + std::to_string(i) + "][" + std::to_string(l) + "]"));
      }
      prog.add_one_hot_group(group);
      inst.sigma.push_back(std::move(group));
      ++inst.counts.oneHotGroups;
    }
  }

  auto add_row = [&](ChanceFamily family, int step, int face, ChanceConstraintSpec spec,
                     RiskVariable* risk) {
    ChanceRow row;
    row.family = family;
    row.step = step;
    row.face = face;
    row.data = compute_rk(spec, st, lib);
    const AffineExpr f = nominal_expression(spec, st, x, inst.V);
    if (risk) {
      encode_variable_risk(prog, spec, row.data, f, inst.delta, *risk);
      row.gamma = risk->gamma;
      ++inst.counts.variableRisk;
    } else {
      encode_fixed_risk(prog, spec, row.data, f, inst.delta);
      ++inst.counts.fixedRisk;
    }
    row.spec = std::move(spec);
    inst.rows.push_back(std::move(row));
  };

  for (int i = 1; i <= N; ++i) {
    for (int l = 0; l < sc.stayIn.faces(); ++l) {
      ChanceConstraintSpec spec;
      spec.Hrow = place_row(sc.stayIn.P.row(l), i, nx, stateLen);
      spec.hConst = sc.stayIn.p(l);
      add_row(ChanceFamily::StayIn, i, l, std::move(spec), &inst.stayInRisk[static_cast<std::size_t>(i - 1)]);
    }
  }
  for (int i = 0; i < N; ++i) {
    for (int l = 0; l < sc.inputSet.faces(); ++l) {
      ChanceConstraintSpec spec;
      spec.space = ChanceSpace::Input;
      spec.Hrow = place_row(sc.inputSet.P.row(l), i, nu, N * nu);
      spec.hConst = sc.inputSet.p(l);
      spec.fixedGamma = sc.gammaInput;
      add_row(ChanceFamily::Input, i, l, std::move(spec), nullptr);
    }
  }
  for (int l = 0; l < sc.target.faces(); ++l) {
    ChanceConstraintSpec spec;
    spec.Hrow = place_row(sc.target.P.row(l), N, nx, stateLen);
    spec.hConst = sc.target.p(l);
    spec.fixedGamma = sc.gammaTerminal;
    add_row(ChanceFamily::Terminal, N, l, std::move(spec), nullptr);
  }
  if (sc.stayOut) {
    for (int i = 1; i <= N; ++i) {
      for (int l = 0; l < sc.stayOut->faces(); ++l) {
        ChanceConstraintSpec spec;
        spec.Hrow = place_row(sc.stayOut->P.row(l), i, nx, stateLen);
        spec.hConst = sc.stayOut->p(l);
        spec.direction = TailDirection::LowerTail;
        spec = wrap_big_m(std::move(spec), prepared.stayOutBigM[static_cast<std::size_t>(l)],
                          inst.sigma[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(l)]);
        add_row(ChanceFamily::StayOut, i, l, std::move(spec),
                &inst.stayOutRisk[static_cast<std::size_t>(i - 1)]);
      }
    }
  }

  RiskBudget budget;
  budget.xi = sc.xi;
  budget.riskVars = inst.Gamma;
  risk_budget_constraint(prog, budget);
  inst.counts.budgetRows = 1;

  inst.cost = expected_cost_terms(st, lib, sc.R, sc.Q, sc.riskWeights, x);
  inst.inputEpigraph = conic::add_quadratic_objective_epigraph(prog, inst.cost.quadV, inst.V);
  AffineExpr linear(inst.cost.constant);
  for (std::size_t j = 0; j < inst.V.size(); ++j) {
    linear.add(inst.V[j], inst.cost.linearV(static_cast<Eigen::Index>(j)));
  }
  for (std::size_t k = 0; k < inst.delta.size(); ++k) {
    linear.add(inst.delta[k], inst.cost.linearDelta(static_cast<Eigen::Index>(k)));
  }
  for (std::size_t g = 0; g < inst.Gamma.size(); ++g) {
    linear.add(inst.Gamma[g], inst.cost.linearGamma(static_cast<Eigen::Index>(g)));
  }
  prog.add_objective(linear);
  return inst;
}

int selected_gain(const OCPInstance& instance, const Eigen::VectorXd& primal) {
  if (primal.size() != instance.program.num_vars()) {
    throw DimensionError("selected_gain: primal does not match the program");
  }
  int best = 0;
  for (std::size_t k = 1; k < instance.delta.size(); ++k) {
    if (primal(instance.delta[k]) > primal(instance.delta[static_cast<std::size_t>(best)])) {
      best = static_cast<int>(k);
    }
  }
  return best;
}

double conservatism_margin(const PreparedScenario& prepared, const OCPInstance& instance,
                           const Eigen::VectorXd& primal) {
  if (primal.size() != instance.program.num_vars()) {
    throw DimensionError("conservatism_margin: primal has " + std::to_string(primal.size()) +
                         " entries, program has " +
                         std::to_string(instance.program.num_vars()));
  }
  const Eigen::VectorXd V = values(primal, instance.V);
  const auto k = static_cast<std::size_t>(selected_gain(instance, primal));
  double worst = conic::kInf;
  for (const ChanceRow& row : instance.rows) {
    if (row.gamma < 0) continue;
    if (row.spec.bigM && primal(row.spec.bigM->sigma) < 0.5) continue;
    const double f = nominal_value(row.spec, prepared.stacked, instance.x, V);
    const double m =
        deterministic_exact(row.spec.direction, f, row.data.rk[k], primal(row.gamma)).margin;
    worst = std::min(worst, m);
  }
  return worst;
}

const char* to_string(SolverMode mode) {
  return mode == SolverMode::BnB ? "bnb" : "exhaustive";
}

SolverMode parse_solver_mode(const std::string& name) {
  if (name == "bnb") return SolverMode::BnB;
  if (name == "exhaustive") return SolverMode::Exhaustive;
  throw SchemaError("solver: expected bnb or exhaustive, got '" + name + "'");
}

OcpSolveResult solve_ocp(const OCPInstance& instance, SolverMode mode,
                         const micp::BnBConfig& config, const micp::Assignment& warmStart) {
  OcpSolveResult out;
  if (mode == SolverMode::BnB) {
    micp::BnBConfig cfg = config;
    if (!warmStart.empty()) cfg.warmStart = warmStart;
    micp::BnBResult r = micp::solve_bnb(instance.program, cfg);
    out.solution = std::move(r.solution);
    out.relaxationSolves = r.stats.relaxationSolves;
    out.nodes = r.stats.nodes;
    out.gapClosed = r.stats.gapClosed;
    return out;
  }
  std::vector<micp::Assignment> assignments;
  for (std::size_t k = 0; k < instance.delta.size(); ++k) {
    micp::Assignment a;
    for (std::size_t j = 0; j < instance.delta.size(); ++j) {
      a.emplace_back(instance.delta[j], j == k ? 1.0 : 0.0);
    }
    assignments.push_back(std::move(a));
  }
  const bool hasSigma = !instance.sigma.empty();
  micp::ExhaustiveResult r = micp::exhaustive_search(
      [&](const micp::Assignment& a) {
        ConicProgram fixed = micp::apply_fixings(instance.program, a);
        if (!hasSigma) {
          ++out.relaxationSolves;
          ++out.nodes;
          return conic::solve_relaxation(fixed, config.solver);
        }
        micp::BnBResult inner = micp::solve_bnb(fixed, config);
        out.relaxationSolves += inner.stats.relaxationSolves;
        out.nodes += inner.stats.nodes;
        out.gapClosed = out.gapClosed && inner.stats.gapClosed;
        return inner.solution;
      },
      assignments);
  out.solution = std::move(r.solution);
  return out;
}

RunRecord receding_horizon_run(const PreparedScenario& prepared, int steps, SolverMode mode,
                               const DisturbanceGenerator& generator, const RunOptions& options) {
  if (steps < 1) throw DomainError("steps must be >= 1");
  const Scenario& sc = prepared.scenario;
  const int nu = sc.model.nu();
  RunRecord run;
  Eigen::VectorXd x = sc.x0;
  micp::Assignment warm;
  for (int t = 0; t < steps; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const OCPInstance inst = assemble_ocp(prepared, x);
    const OcpSolveResult res =
        t == 0 && options.firstStep
            ? *options.firstStep
            : solve_ocp(inst, mode, options.bnb, options.warmStart ? warm : micp::Assignment{});
    if (!res.solution.optimal()) {
      run.infeasible = true;
      run.infeasibleStep = t;
      run.message = "infeasible at step " + std::to_string(t) + ": " +
                    conic::to_string(res.solution.status);
      if (!res.solution.diagnostic.empty()) run.message += " (" + res.solution.diagnostic + ")";
      break;
    }
    const Eigen::VectorXd& z = res.solution.primal;
    StepRecord rec;
    rec.step = t;
    rec.x = x;
    rec.u = values(z, inst.V).head(nu);
    rec.deltaIndex = selected_gain(inst, z);
    rec.Gamma = values(z, inst.Gamma);
    rec.gammaSum = rec.Gamma.sum();
    rec.objective = res.solution.objectiveValue;
    rec.relaxationSolves = res.relaxationSolves;

    warm.clear();
    for (std::size_t k = 0; k < inst.delta.size(); ++k) {
      warm.emplace_back(inst.delta[k], static_cast<int>(k) == rec.deltaIndex ? 1.0 : 0.0);
    }
    for (std::size_t i = 0; i < inst.sigma.size(); ++i) {
      const auto& src = inst.sigma[std::min(i + 1, inst.sigma.size() - 1)];
      for (std::size_t l = 0; l < src.size(); ++l) {
        warm.emplace_back(inst.sigma[i][l], std::round(z(src[l])));
      }
    }

    x = sc.model.A * x + sc.model.B * rec.u + sc.model.G * generator();
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    run.steps.push_back(std::move(rec));
  }
  run.finalState = x;
  return run;
}

DisturbanceGenerator gaussian_generator(int n, std::uint64_t seed, double scale) {
  auto engine = std::make_shared<std::mt19937_64>(seed);
  auto normal = std::make_shared<std::normal_distribution<double>>(0.0, 1.0);
  return [=]() {
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) w(i) = scale * (*normal)(*engine);
    return w;
  };
}

double path_length(const Scenario& scenario, const RunRecord& run) {
  std::vector<Eigen::VectorXd> states;
  for (const auto& s : run.steps) states.push_back(s.x);
  if (!run.steps.empty()) states.push_back(run.finalState);
  double length = 0.0;
  for (std::size_t t = 1; t < states.size(); ++t) {
    double d2 = 0.0;
    for (int i : scenario.positionIndices) {
      const double d = states[t](i) - states[t - 1](i);
      d2 += d * d;
    }
    length += std::sqrt(d2);
  }
  return length;
}

MonteCarloReport monte_carlo(const PreparedScenario& prepared, const MonteCarloOptions& options) {
  if (options.runs < 1) throw DomainError("runs must be >= 1");
  const Scenario& sc = prepared.scenario;
  const int runs = options.runs;
  std::vector<RunRecord> records(static_cast<std::size_t>(runs));

  // Every run starts from x0, so step 0 is solved once.
  RunOptions runOptions = options.run;
  if (!runOptions.firstStep) {
    runOptions.firstStep = std::make_shared<const OcpSolveResult>(
        solve_ocp(assemble_ocp(prepared, sc.x0), options.mode, runOptions.bnb));
  }

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int r = next++; r < runs; r = next++) {
      auto gen = gaussian_generator(sc.model.nw(), options.seed + static_cast<std::uint64_t>(r),
                                    options.disturbanceScale);
      records[static_cast<std::size_t>(r)] =
          receding_horizon_run(prepared, options.steps, options.mode, gen, runOptions);
    }
  };
  const int threads = std::max(1, std::min(options.threads, runs));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  MonteCarloReport rep;
  rep.runs = runs;
  rep.steps = options.steps;
  rep.stayInViolations.assign(static_cast<std::size_t>(options.steps), 0);
  rep.stayOutViolations.assign(static_cast<std::size_t>(options.steps), 0);
  rep.inputViolations.assign(static_cast<std::size_t>(options.steps), 0);
  std::vector<double> costs;
  for (int r = 0; r < runs; ++r) {
    const RunRecord& run = records[static_cast<std::size_t>(r)];
    if (run.infeasible) ++rep.infeasibleRuns;
    bool inViol = false;
    bool outViol = false;
    double cost = 0.0;
    for (std::size_t t = 0; t < run.steps.size(); ++t) {
      const Eigen::VectorXd& u = run.steps[t].u;
      const Eigen::VectorXd& next =
          t + 1 < run.steps.size() ? run.steps[t + 1].x : run.finalState;
      if (!sc.stayIn.contains(next)) {
        ++rep.stayInViolations[t];
        inViol = true;
      }
      if (sc.stayOut && sc.stayOut->strictly_contains(next)) {
        ++rep.stayOutViolations[t];
        outViol = true;
      }
      if (!sc.inputSet.contains(u)) ++rep.inputViolations[t];
      cost += u.dot(sc.R * u);
      if (sc.Q.size() != 0) cost += next.dot(sc.Q * next);
    }
    rep.runsWithStayInViolation += inViol;
    rep.runsWithStayOutViolation += outViol;
    rep.runsWithViolation += inViol || outViol;
    costs.push_back(cost);
    rep.pathLengths.push_back(path_length(sc, run));
    rep.infeasibleStep.push_back(run.infeasibleStep);
  }
  rep.empiricalJointViolation = static_cast<double>(rep.runsWithViolation) / runs;

  auto mean_se = [](const std::vector<double>& v, double& mean, double& se) {
    const double n = static_cast<double>(v.size());
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  };
  mean_se(costs, rep.costMean, rep.costStdError);
  mean_se(rep.pathLengths, rep.pathLengthMean, rep.pathLengthStdError);
  const int keep = std::min(options.keepTrajectories, runs);
  for (int r = 0; r < keep; ++r) rep.trajectories.push_back(records[static_cast<std::size_t>(r)]);
  return rep;
}

}  // namespace dsmpc
