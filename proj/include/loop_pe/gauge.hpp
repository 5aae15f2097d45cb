#pragma once

#include <vector>

#include "loop_pe/net.hpp"
#include "loop_pe/problem.hpp"
#include "loop_pe/tape.hpp"

namespace loop_pe {

/// Interior anchor plus the per-row residual slacks it leaves, which form
/// the denominators of the radial rescaling. Recomputed per instance.
struct GaugeContext {
  Decision u0;                                   // n * d_u, strictly interior
  std::vector<std::vector<double>> local_slacks; // per agent, r_loc values, > 0
  std::vector<double> coupled_slacks;            // r_cpl values, > 0
};

struct ScalingFactor {
  double c = 1.0;        // in (0, 1]
  double max_ratio = 0.0;
};

/// Strictly interior point: the exact solver run on the tightened problem
/// (boxes [delta*p_c, (1-delta)*p_c], coupled limit (1-delta)*p_omax).
/// Equivariant because the solver is. Throws when the tightened instance
/// is infeasible, reporting how far delta must shrink.
Decision interior_point(const Instance& instance, double delta = 0.01);

GaugeContext make_gauge_context(const ConstraintSystem& cs, Decision u0);
GaugeContext make_gauge_context(const ConstraintSystem& cs, const Instance& instance);

/// c = 1 / max(1, max over rows of (row value of v) / (row slack)).
ScalingFactor scaling_factor(const ConstraintSystem& cs, const GaugeContext& ctx,
                             const VirtualPrediction& v);

/// u = u0 + c * v. Feasible for every input v by construction.
Decision gauge_map(const ConstraintSystem& cs, const GaugeContext& ctx,
                   const VirtualPrediction& v);

/// Tape version of gauge_map for training; arithmetic mirrors the plain
/// version operation for operation.
NodeId gauge_map_on_tape(Tape& tape, const ConstraintSystem& cs, const GaugeContext& ctx,
                         NodeId v);

/// Full pipeline: features -> virtual predictions -> gauge map.
Decision apply(const Model& model, const Instance& instance);

}  // namespace loop_pe
