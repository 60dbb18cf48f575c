#include "dsmpc/micp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <span>
#include <string>
#include <unordered_map>

#include <json.hpp>

#include "dsmpc/errors.hpp"

namespace dsmpc::micp {

using conic::ConicProgram;
using conic::Solution;
using conic::SolveStatus;
using conic::VarId;

namespace {

double fractionality(double x) {
  const double f = x - std::floor(x);
  return std::min(f, 1.0 - f);
}

/// Group index of each binary; free binaries get their own pseudo group.
std::vector<std::vector<VarId>> branching_groups(const ConicProgram& program) {
  std::vector<std::vector<VarId>> groups = program.one_hot_groups();
  std::vector<bool> grouped(static_cast<std::size_t>(program.num_vars()), false);
  for (const auto& g : groups) {
    for (VarId v : g) grouped[static_cast<std::size_t>(v)] = true;
  }
  for (VarId v : program.binaries()) {
    if (!grouped[static_cast<std::size_t>(v)]) groups.push_back({v});
  }
  return groups;
}

const std::vector<VarId>* group_of(const ConicProgram& program, VarId var) {
  for (const auto& g : program.one_hot_groups()) {
    if (std::find(g.begin(), g.end(), var) != g.end()) return &g;
  }
  return nullptr;
}

bool prunable(double bound, double incumbent, double relGap) {
  return incumbent - bound <= relGap * std::max(1.0, std::abs(incumbent));
}

/// Memberships that reference each variable.
std::vector<std::vector<std::size_t>> memberships_by_variable(const ConicProgram& program) {
  std::vector<std::vector<std::size_t>> touching(static_cast<std::size_t>(program.num_vars()));
  const auto& ms = program.memberships();
  for (std::size_t i = 0; i < ms.size(); ++i) {
    for (const auto& row : ms[i].rows) {
      for (const auto& t : row.terms()) {
        auto& list = touching[static_cast<std::size_t>(t.var)];
        if (list.empty() || list.back() != i) list.push_back(i);
      }
    }
  }
  return touching;
}

struct Rounding {
  bool feasible = false;
  Eigen::VectorXd x;
  std::vector<std::size_t> failedGroups;
};

/// Rounds each branching group, in order, to the first member (largest
/// relaxation value first) whose memberships hold at the relaxed continuous
/// values. feasible means every membership and bound of the result holds.
Rounding feasibility_rounding(const ConicProgram& program,
                              const std::vector<std::vector<VarId>>& groups,
                              const std::vector<std::vector<std::size_t>>& touching,
                              const Eigen::VectorXd& primal, double tol) {
  Rounding r;
  r.x = primal;
  const auto& ms = program.memberships();
  const std::span<const double> xs(r.x.data(), static_cast<std::size_t>(r.x.size()));
  auto holds = [&](const std::vector<VarId>& group) {
    for (VarId v : group) {
      for (std::size_t i : touching[static_cast<std::size_t>(v)]) {
        if (conic::membership_residual(ms[i], xs) > tol) return false;
      }
    }
    return true;
  };
  auto allowed = [&](VarId v, double value) {
    const auto& var = program.variable(v);
    return value >= var.lower - tol && value <= var.upper + tol;
  };

  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& group = groups[gi];
    bool placed = false;
    if (group.size() == 1) {
      const VarId v = group[0];
      const double first = std::round(primal(v));
      for (double value : {first, 1.0 - first}) {
        if (!allowed(v, value)) continue;
        r.x(v) = value;
        if (holds(group)) {
          placed = true;
          break;
        }
      }
      if (!placed) r.x(v) = first;
    } else {
      std::vector<VarId> order = group;
      std::stable_sort(order.begin(), order.end(),
                       [&](VarId a, VarId b) { return primal(a) > primal(b); });
      for (VarId m : order) {
        if (!allowed(m, 1.0)) continue;
        for (VarId v : group) r.x(v) = v == m ? 1.0 : 0.0;
        if (holds(group)) {
          placed = true;
          break;
        }
      }
      if (!placed) {
        for (VarId v : group) r.x(v) = v == order.front() ? 1.0 : 0.0;
      }
    }
    if (!placed) r.failedGroups.push_back(gi);
  }
  if (!r.failedGroups.empty()) return r;

  for (const auto& m : ms) {
    if (conic::membership_residual(m, xs) > tol) return r;
  }
  for (int j = 0; j < program.num_vars(); ++j) {
    if (!allowed(j, r.x(j))) return r;
  }
  r.feasible = true;
  return r;
}

}  // namespace

VarId select_branch_variable(const ConicProgram& program, const Eigen::VectorXd& primal,
                             BranchRule rule, double tol) {
  VarId best = -1;
  double bestScore = tol;
  if (rule == BranchRule::MostFractional) {
    for (VarId v : program.binaries()) {
      const double s = fractionality(primal(v));
      if (s > bestScore) {
        bestScore = s;
        best = v;
      }
    }
    return best;
  }
  for (const auto& group : branching_groups(program)) {
    for (VarId v : group) {
      const double s = fractionality(primal(v));
      if (s > bestScore) {
        bestScore = s;
        best = v;
      }
    }
  }
  return best;
}

std::pair<Node, Node> branch(const Node& node, const ConicProgram& program, VarId var,
                             BranchRule rule) {
  Node up = node;
  Node down = node;
  up.depth = down.depth = node.depth + 1;
  up.fixings.emplace_back(var, 1.0);
  down.fixings.emplace_back(var, 0.0);
  if (rule == BranchRule::GroupAware) {
    if (const auto* group = group_of(program, var)) {
      for (VarId v : *group) {
        if (v != var) up.fixings.emplace_back(v, 0.0);
      }
      std::unordered_map<VarId, double> fixed;
      for (const auto& [v, val] : down.fixings) fixed[v] = val;
      VarId lastFree = -1;
      int freeCount = 0;
      bool hasOne = false;
      for (VarId v : *group) {
        auto it = fixed.find(v);
        if (it == fixed.end()) {
          ++freeCount;
          lastFree = v;
        } else if (it->second > 0.5) {
          hasOne = true;
        }
      }
      if (!hasOne && freeCount == 1) down.fixings.emplace_back(lastFree, 1.0);
    }
  }
  return {std::move(up), std::move(down)};
}

ConicProgram apply_fixings(const ConicProgram& program, const Assignment& fixings) {
  ConicProgram out = program;
  for (const auto& [v, value] : fixings) out.set_bounds(v, value, value);
  return out;
}

BnBResult solve_bnb(const ConicProgram& program, const BnBConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  BnBResult result;
  BnBStats& stats = result.stats;
  const std::vector<VarId> binaries = program.binaries();

  auto finish = [&]() {
    stats.wallTime =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
  };

  auto solve_node = [&](const Assignment& fixings) {
    ++stats.relaxationSolves;
    return conic::solve_relaxation(apply_fixings(program, fixings), config.solver);
  };
  const auto groups = branching_groups(program);
  const auto touching = memberships_by_variable(program);

  std::optional<Incumbent>& inc = result.incumbent;
  auto offer = [&](const Solution& sol) {
    if (inc && sol.objectiveValue >= inc->objective) return;
    Incumbent next;
    next.objective = sol.objectiveValue;
    next.primal = sol.primal;
    for (VarId v : binaries) next.assignment.push_back(std::round(sol.primal(v)));
    inc = std::move(next);
    ++stats.incumbentUpdates;
    stats.incumbentHistory.push_back(inc->objective);
  };

  // Best-first keeps a heap on (parentBound, sequence); depth-first a stack.
  std::vector<Node> open;
  auto worse = [](const Node& a, const Node& b) {
    if (a.parentBound != b.parentBound) return a.parentBound > b.parentBound;
    return a.sequence > b.sequence;
  };
  long sequence = 0;
  auto push = [&](Node n) {
    n.sequence = sequence++;
    open.push_back(std::move(n));
    if (config.nodeSelection == NodeSelection::BestFirst) {
      std::push_heap(open.begin(), open.end(), worse);
    }
  };
  auto pop = [&]() {
    if (config.nodeSelection == NodeSelection::BestFirst) {
      std::pop_heap(open.begin(), open.end(), worse);
    }
    Node n = std::move(open.back());
    open.pop_back();
    return n;
  };

  if (!config.warmStart.empty()) {
    const Solution warm = solve_node(config.warmStart);
    if (warm.optimal()) offer(warm);
  }

  push(Node{});
  bool root = true;
  int failures = 0;
  while (!open.empty()) {
    if (stats.nodes >= config.nodeCap) {
      stats.gapClosed = false;
      break;
    }
    Node node = pop();
    if (inc && prunable(node.parentBound, inc->objective, config.relativeGapTol)) {
      stats.prunedBounds.push_back(node.parentBound);
      continue;
    }
    const Solution sol = solve_node(node.fixings);
    ++stats.nodes;
    const bool wasRoot = root;
    root = false;
    if (sol.status == SolveStatus::Infeasible) continue;
    if (sol.status != SolveStatus::Optimal) {
      if (wasRoot) {
        result.solution = sol;
        return finish();
      }
      ++failures;
      stats.gapClosed = false;
      continue;
    }
    const double bound = std::isfinite(sol.lowerBound) ? sol.lowerBound : sol.objectiveValue;
    if (inc && prunable(bound, inc->objective, config.relativeGapTol)) {
      stats.prunedBounds.push_back(bound);
      continue;
    }
    VarId var =
        select_branch_variable(program, sol.primal, config.branchRule, config.integralityTol);
    if (var < 0) {
      offer(sol);
      continue;
    }
    if (config.feasibilityRounding) {
      const ConicProgram nodeProgram = apply_fixings(program, node.fixings);
      const Rounding rounded = feasibility_rounding(nodeProgram, groups, touching, sol.primal,
                                                    config.roundingTolerance);
      if (rounded.feasible) {
        Solution candidate;
        candidate.status = SolveStatus::Optimal;
        candidate.primal = rounded.x;
        candidate.objectiveValue = program.objective().evaluate(rounded.x);
        offer(candidate);
        if (prunable(bound, candidate.objectiveValue, config.relativeGapTol)) continue;
      } else if (config.branchRule == BranchRule::GroupAware) {
        // Branch where rounding failed, on the member the relaxation leans on
        // most, so that both children move the bound.
        double bestScore = config.integralityTol;
        VarId pick = -1;
        for (std::size_t gi : rounded.failedGroups) {
          VarId lead = groups[gi].front();
          for (VarId v : groups[gi]) {
            if (sol.primal(v) > sol.primal(lead)) lead = v;
          }
          const double f = fractionality(sol.primal(lead));
          if (f > bestScore) {
            bestScore = f;
            pick = lead;
          }
        }
        if (pick >= 0) var = pick;
      }
    }
    if (wasRoot && config.rootRoundingProbe && !inc) {
      Assignment rounded;
      for (const auto& group : branching_groups(program)) {
        if (group.size() == 1) {
          rounded.emplace_back(group[0], std::round(sol.primal(group[0])));
          continue;
        }
        VarId top = group[0];
        for (VarId v : group) {
          if (sol.primal(v) > sol.primal(top)) top = v;
        }
        for (VarId v : group) rounded.emplace_back(v, v == top ? 1.0 : 0.0);
      }
      const Solution probe = solve_node(rounded);
      if (probe.optimal()) offer(probe);
    }
    auto [up, down] = branch(node, program, var, config.branchRule);
    up.parentBound = down.parentBound = bound;
    if (config.nodeSelection == NodeSelection::DepthFirst) {
      push(std::move(down));
      push(std::move(up));
    } else {
      push(std::move(up));
      push(std::move(down));
    }
  }

  if (!inc) {
    result.solution.status = stats.gapClosed ? SolveStatus::Infeasible : SolveStatus::NumericalFailure;
    result.solution.diagnostic = stats.gapClosed ? "no integer-feasible assignment"
                                                 : "gap not closed without an incumbent";
    stats.gap = conic::kInf;
    return finish();
  }

  double bestOpen = inc->objective;
  for (const auto& n : open) bestOpen = std::min(bestOpen, n.parentBound);
  stats.gap = (inc->objective - bestOpen) / std::max(1.0, std::abs(inc->objective));

  Assignment final;
  for (std::size_t i = 0; i < binaries.size(); ++i) final.emplace_back(binaries[i], inc->assignment[i]);
  Solution polished = solve_node(final);
  if (polished.optimal() &&
      polished.objectiveValue <= inc->objective + 1e-7 * std::max(1.0, std::abs(inc->objective))) {
    inc->primal = polished.primal;
    inc->objective = polished.objectiveValue;
    result.solution = std::move(polished);
  } else {
    result.solution.status = SolveStatus::Optimal;
    result.solution.primal = inc->primal;
    for (VarId v : binaries) result.solution.primal(v) = std::round(result.solution.primal(v));
    result.solution.objectiveValue = inc->objective;
  }
  result.solution.lowerBound = std::min(bestOpen, result.solution.objectiveValue);
  if (!stats.gapClosed) {
    result.solution.diagnostic = "gap not closed";
    if (failures > 0) result.solution.diagnostic += "; " + std::to_string(failures) + " node failures";
  }
  return finish();
}

std::string stats_json(const BnBStats& stats) {
  nlohmann::json j;
  j["nodes"] = stats.nodes;
  j["incumbentUpdates"] = stats.incumbentUpdates;
  j["gap"] = std::isfinite(stats.gap) ? nlohmann::json(stats.gap) : nlohmann::json(nullptr);
  j["wallTime"] = stats.wallTime;
  j["relaxationSolves"] = stats.relaxationSolves;
  j["gapClosed"] = stats.gapClosed;
  return j.dump();
}

std::vector<Assignment> enumerate_assignments(const ConicProgram& program, std::size_t maxCount) {
  std::vector<Assignment> out{Assignment{}};
  for (const auto& group : branching_groups(program)) {
    const bool single = group.size() == 1;
    const std::size_t choices = single ? 2 : group.size();
    if (out.size() * choices > maxCount) {
      throw DomainError("exhaustive enumeration exceeds " + std::to_string(maxCount) +
                        " assignments");
    }
    std::vector<Assignment> next;
    next.reserve(out.size() * choices);
    for (const auto& partial : out) {
      for (std::size_t c = 0; c < choices; ++c) {
        Assignment a = partial;
        if (single) {
          a.emplace_back(group[0], static_cast<double>(c));
        } else {
          for (std::size_t i = 0; i < group.size(); ++i) a.emplace_back(group[i], i == c ? 1.0 : 0.0);
        }
        next.push_back(std::move(a));
      }
    }
    out = std::move(next);
  }
  return out;
}

ExhaustiveResult exhaustive_search(const std::function<Solution(const Assignment&)>& solveFixed,
                                   const std::vector<Assignment>& assignments) {
  ExhaustiveResult result;
  result.solution.status = SolveStatus::Infeasible;
  result.solution.diagnostic = "every assignment infeasible";
  for (const auto& a : assignments) {
    ++result.assignmentsTried;
    Solution sol = solveFixed(a);
    if (!sol.optimal()) continue;
    ++result.feasible;
    if (!result.solution.optimal() || sol.objectiveValue < result.solution.objectiveValue) {
      result.solution = std::move(sol);
      result.best = a;
    }
  }
  return result;
}

ExhaustiveResult exhaustive_search(const ConicProgram& program,
                                   const conic::SolverOptions& options) {
  return exhaustive_search(
      [&](const Assignment& a) {
        return conic::solve_relaxation(apply_fixings(program, a), options);
      },
      enumerate_assignments(program));
}

}  // namespace dsmpc::micp
