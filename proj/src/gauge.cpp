#include "loop_pe/gauge.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "loop_pe/oracle.hpp"

namespace loop_pe {

namespace {

double sorted_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

Tensor transpose_of(const Tensor& t) {
  Tensor out(t.cols(), t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) out.at(j, i) = t.at(i, j);
  return out;
}

// (i, r) entry = sum_d v(i, d) * H(r, d), accumulated in ascending d. Same
// arithmetic order as the tape's matmul(v, H^T), so both paths agree
// bitwise.
Tensor row_values(const Tensor& v, const Tensor& h) {
  Tensor out(v.rows(), h.rows());
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t d = 0; d < v.cols(); ++d) {
      const double vid = v.at(i, d);
      for (std::size_t r = 0; r < h.rows(); ++r) out.at(i, r) += vid * h.at(r, d);
    }
  return out;
}

}  // namespace

Decision interior_point(const Instance& instance, double delta) {
  instance.validate();
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("interior_point: delta must lie in (0, 1)");
  const std::size_t n = instance.n();

  std::vector<double> caps(n), demands(n), lo(n), hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    caps[i] = instance.agents[i].p_c;
    demands[i] = instance.agents[i].p_d;
    lo[i] = delta * caps[i];
    hi[i] = (1.0 - delta) * caps[i];
  }
  const double sum_c = sorted_sum(caps);
  const double sum_d = sorted_sum(demands);
  const double band = (1.0 - delta) * instance.p_omax;
  const double cap_up = sum_d + band;
  const double cap_lo = sum_d - band;

  const double sum_hi = (1.0 - delta) * sum_c;
  const double sum_lo = delta * sum_c;
  if (sum_hi < cap_lo || sum_lo > cap_up) {
    const double max_delta =
        std::min((sum_c + instance.p_omax - sum_d) / (sum_c + instance.p_omax),
                 (sum_d + instance.p_omax) / (sum_c + instance.p_omax));
    throw std::runtime_error(
        "interior_point: tightened instance infeasible at delta=" +
        std::to_string(delta) + "; retry with delta below " + std::to_string(max_delta));
  }

  auto fill = water_fill(caps, lo, hi, cap_up);
  return fill.u;
}

GaugeContext make_gauge_context(const ConstraintSystem& cs, Decision u0) {
  const std::size_t n = cs.n_agents();
  if (u0.size() != n * cs.d_u)
    throw std::invalid_argument("gauge context: interior point length mismatch");

  GaugeContext ctx;
  ctx.u0 = std::move(u0);
  ctx.local_slacks.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ctx.local_slacks[i].resize(cs.local_rows());
    for (std::size_t r = 0; r < cs.local_rows(); ++r) {
      double lhs = 0.0;
      for (std::size_t d = 0; d < cs.d_u; ++d)
        lhs += cs.local_template.at(r, d) * ctx.u0[i * cs.d_u + d];
      const double s = cs.local_rhs[i][r] - lhs;
      if (!(s > 0.0))
        throw std::logic_error("gauge context: nonpositive local slack at agent " +
                               std::to_string(i) + ", row " + std::to_string(r));
      ctx.local_slacks[i][r] = s;
    }
  }
  ctx.coupled_slacks.resize(cs.coupled_rows());
  for (std::size_t r = 0; r < cs.coupled_rows(); ++r) {
    double lhs = 0.0;
    double rhs = cs.coupled_offset[r];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < cs.d_u; ++d)
        lhs += cs.coupled_template.at(r, d) * ctx.u0[i * cs.d_u + d];
      rhs += cs.coupled_rhs[i][r];
    }
    const double s = rhs - lhs;
    if (!(s > 0.0))
      throw std::logic_error("gauge context: nonpositive coupled slack at row " +
                             std::to_string(r));
    ctx.coupled_slacks[r] = s;
  }
  return ctx;
}

GaugeContext make_gauge_context(const ConstraintSystem& cs, const Instance& instance) {
  return make_gauge_context(cs, interior_point(instance));
}

ScalingFactor scaling_factor(const ConstraintSystem& cs, const GaugeContext& ctx,
                             const VirtualPrediction& v) {
  const std::size_t n = cs.n_agents();
  if (v.rows() != n || v.cols() != cs.d_u)
    throw std::invalid_argument("scaling_factor: prediction shape " + v.shape_str() +
                                " does not match system (" + std::to_string(n) + " x " +
                                std::to_string(cs.d_u) + ")");

  double max_ratio = -std::numeric_limits<double>::infinity();
  bool any = false;

  if (cs.local_rows() > 0) {
    const Tensor loc = row_values(v, cs.local_template);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t r = 0; r < cs.local_rows(); ++r) {
        const double s = ctx.local_slacks[i][r];
        if (!(s > 0.0)) throw std::logic_error("scaling_factor: nonpositive local slack");
        const double ratio = loc.at(i, r) / s;
        if (!any || ratio > max_ratio) max_ratio = ratio;
        any = true;
      }
  }
  if (cs.coupled_rows() > 0) {
    Tensor col(1, cs.d_u);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < cs.d_u; ++d) col.at(0, d) += v.at(i, d);
    const Tensor cpl = row_values(col, cs.coupled_template);
    for (std::size_t r = 0; r < cs.coupled_rows(); ++r) {
      const double s = ctx.coupled_slacks[r];
      if (!(s > 0.0)) throw std::logic_error("scaling_factor: nonpositive coupled slack");
      const double ratio = cpl.at(0, r) / s;
      if (!any || ratio > max_ratio) max_ratio = ratio;
      any = true;
    }
  }

  ScalingFactor f;
  f.max_ratio = any ? max_ratio : 0.0;
  f.c = 1.0 / std::max(1.0, f.max_ratio);
  return f;
}

Decision gauge_map(const ConstraintSystem& cs, const GaugeContext& ctx,
                   const VirtualPrediction& v) {
  const ScalingFactor f = scaling_factor(cs, ctx, v);
  Decision u(ctx.u0.size());
  for (std::size_t j = 0; j < u.size(); ++j) u[j] = ctx.u0[j] + v[j] * f.c;
  return u;
}

NodeId gauge_map_on_tape(Tape& tape, const ConstraintSystem& cs, const GaugeContext& ctx,
                         NodeId v) {
  const std::size_t n = cs.n_agents();
  const Tensor& vt = tape.value(v);
  if (vt.rows() != n || vt.cols() != cs.d_u)
    throw std::invalid_argument("gauge_map: prediction shape " + vt.shape_str() +
                                " does not match system");

  NodeId rho = -1;
  if (cs.local_rows() > 0) {
    Tensor slacks(n, cs.local_rows());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t r = 0; r < cs.local_rows(); ++r)
        slacks.at(i, r) = ctx.local_slacks[i][r];
    const NodeId ratios = tape.div(tape.matmul(v, tape.leaf(transpose_of(cs.local_template))),
                                   tape.leaf(std::move(slacks)));
    rho = tape.max_all(ratios);
  }
  if (cs.coupled_rows() > 0) {
    const NodeId col = tape.col_sums(v);
    const NodeId ratios =
        tape.div(tape.matmul(col, tape.leaf(transpose_of(cs.coupled_template))),
                 tape.leaf(Tensor::row(ctx.coupled_slacks)));
    const NodeId cpl_rho = tape.max_all(ratios);
    rho = rho < 0 ? cpl_rho : tape.max_elem(rho, cpl_rho);
  }

  NodeId scaled = v;
  if (rho >= 0) {
    const NodeId c = tape.div(tape.leaf(Tensor::scalar(1.0)), tape.max_scalar(rho, 1.0));
    scaled = tape.scale(v, c);
  }
  Tensor u0(n, cs.d_u);
  for (std::size_t j = 0; j < u0.size(); ++j) u0[j] = ctx.u0[j];
  return tape.add(tape.leaf(std::move(u0)), scaled);
}

Decision apply(const Model& model, const Instance& instance) {
  instance.validate();
  const VirtualPrediction v = forward(model, instance_features(instance));
  const ConstraintSystem cs = build_vpp_constraints(instance);
  const GaugeContext ctx = make_gauge_context(cs, instance);
  return gauge_map(cs, ctx, v);
}

}  // namespace loop_pe
