#pragma once

#include <vector>

#include "loop_pe/problem.hpp"

namespace loop_pe {

enum class SolveStatus { optimal, infeasible };

struct OracleSolution {
  Decision u_star;
  double dual_lambda = 0.0;  // multiplier of the binding coupled row, kW
  SolveStatus status = SolveStatus::optimal;
};

/// Exact minimizer of sum (u^i - p_c^i)^2 over the VPP rows. Closed form
/// when the coupled band is slack; otherwise an exact breakpoint solve of
/// u^i(lambda) = max(0, p_c^i - lambda/2) against the binding row.
OracleSolution solve_exact(const Instance& instance);

/// Exhaustive grid search, agent count <= 4. Grid covers multiples of
/// grid_step in [0, p_c^i] plus the capacity endpoint.
Decision brute_force_solve(const Instance& instance, double grid_step);

/// Max of primal violation, dual nonnegativity violation, complementary
/// slackness of the binding coupled row, and interior stationarity
/// |2(u^i - p_c^i) + lambda|.
double kkt_residual(const Instance& instance, const OracleSolution& sol);

/// Exact water-fill for min sum (u_i - target_i)^2 with box [lo_i, hi_i]
/// per coordinate and sum u <= cap. Requires lo <= hi and sum lo <= cap.
/// Returns the solution and the breakpoint level t (dual = 2t).
struct WaterFillResult {
  std::vector<double> u;
  double level = 0.0;
};
WaterFillResult water_fill(const std::vector<double>& target,
                           const std::vector<double>& lo,
                           const std::vector<double>& hi, double cap);

}  // namespace loop_pe
