#pragma once

/**
 * @file
 * @brief Continuous relaxation solver for ConicProgram.
 *
 * Primal path-following barrier method with a phase-I feasibility search.
 * Equality rows are eliminated up front; fixed variables are substituted.
 * Binary marks are ignored (each binary is relaxed to its bounds).
 */

#include <functional>

#include "dsmpc/conic_ir.hpp"

namespace dsmpc::conic {

struct SolverOptions {
  double gapTolerance = 1e-8;        ///< relative to max(1, |objective|)
  double feasibilityTolerance = 1e-7;
  double unboundedThreshold = 1e9;   ///< |x| beyond this reports Unbounded
  double pathFactor = 20.0;          ///< barrier parameter growth per outer step
  int maxNewtonSteps = 800;
};

Solution solve_relaxation(const ConicProgram& program, const SolverOptions& options = {});

/// Called after every solve_relaxation with the program and its result; used
/// by test harnesses to audit certificates. Pass an empty function to clear.
/// The observer itself must be safe to call from concurrent solves.
using SolutionObserver = std::function<void(const ConicProgram&, const Solution&)>;
void set_solution_observer(SolutionObserver observer);

}  // namespace dsmpc::conic
