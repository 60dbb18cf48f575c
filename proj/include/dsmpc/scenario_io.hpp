#pragma once

/**
 * @file
 * @brief Scenario JSON documents and the CSV/JSON result writers.
 *
 * The schema is documented in docs/scenario_schema.md. Parsing rejects
 * unknown fields and reports the JSON path of the first offending value.
 */

#include <string>

#include "dsmpc/micp.hpp"
#include "dsmpc/probit_cones.hpp"
#include "dsmpc/smpc.hpp"

namespace dsmpc::io {

inline constexpr int kScenarioVersion = 1;

/// Throws SchemaError or DimensionError; the message starts with the field path.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);

/// Canonical form: sorted keys, two-space indent, shortest round-trip numbers,
/// trailing newline. parse followed by this is a fixed point.
std::string scenario_to_json(const Scenario& scenario);
void save_scenario(const Scenario& scenario, const std::string& path);

/// Columns: step, x0..x{nx-1}, u0..u{nu-1}, deltaIndex, gammaSum, objective.
/// One row per solved step plus a final row with the last state and empty
/// input columns.
std::string trajectory_csv(const RunRecord& run);

std::string run_summary_json(const Scenario& scenario, const RunRecord& run, SolverMode mode,
                             std::uint64_t seed);

std::string monte_carlo_json(const MonteCarloReport& report);

/// Columns: gamma, psi, exact, signed_violation on n log-spaced points of
/// [lo, params.intervalMax].
std::string approximation_audit_csv(const ApproxParams& params, double lo, int n);

std::string approx_params_json(const ApproxParams& params);

void write_text(const std::string& path, const std::string& content);

}  // namespace dsmpc::io
