#include "loop_pe/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace loop_pe {

namespace {

// Sums in ascending-value order. The sorted sequence of a multiset is
// canonical, so the rounded result is identical for any input ordering
// and the solver's equivariance is bitwise, not within tolerance.
double sorted_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

WaterFillResult water_fill(const std::vector<double>& target,
                           const std::vector<double>& lo,
                           const std::vector<double>& hi, double cap) {
  const std::size_t n = target.size();
  if (lo.size() != n || hi.size() != n)
    throw std::invalid_argument("water_fill: box length mismatch");

  auto fill_at = [&](double t) {
    std::vector<double> u(n);
    for (std::size_t i = 0; i < n; ++i)
      u[i] = std::min(hi[i], std::max(lo[i], target[i] - t));
    return u;
  };
  auto sum_at = [&](double t) { return sorted_sum(fill_at(t)); };

  if (sum_at(0.0) <= cap) return {fill_at(0.0), 0.0};
  if (sorted_sum(lo) > cap)
    throw std::invalid_argument("water_fill: box lower bounds already exceed the cap");

  // Kinks of t -> sum_i clamp(target_i - t, lo_i, hi_i): entry below the
  // box top, exit at the box bottom.
  std::vector<double> kinks;
  kinks.reserve(2 * n + 1);
  kinks.push_back(0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (target[i] - hi[i] > 0.0) kinks.push_back(target[i] - hi[i]);
    kinks.push_back(target[i] - lo[i]);
  }
  std::sort(kinks.begin(), kinks.end());

  double prev_t = 0.0;
  double prev_sum = sum_at(0.0);
  for (std::size_t k = 1; k < kinks.size(); ++k) {
    const double t = kinks[k];
    if (t <= prev_t) continue;
    const double s = sum_at(t);
    if (s <= cap) {
      // Crossing lies in (prev_t, t]; the segment is linear with slope
      // -(number of strictly-inside coordinates).
      const double mid = 0.5 * (prev_t + t);
      std::size_t active = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (target[i] - mid > lo[i] && target[i] - mid < hi[i]) ++active;
      double level;
      if (active == 0 || prev_sum == s) {
        level = t;
      } else {
        level = prev_t + (prev_sum - cap) / static_cast<double>(active);
        level = std::min(level, t);
      }
      return {fill_at(level), level};
    }
    prev_t = t;
    prev_sum = s;
  }
  return {fill_at(kinks.back()), kinks.back()};
}

OracleSolution solve_exact(const Instance& instance) {
  instance.validate();
  const std::size_t n = instance.n();

  std::vector<double> caps(n), demands(n);
  for (std::size_t i = 0; i < n; ++i) {
    caps[i] = instance.agents[i].p_c;
    demands[i] = instance.agents[i].p_d;
  }
  const double sum_c = sorted_sum(caps);
  const double sum_d = sorted_sum(demands);

  OracleSolution sol;
  if (sum_c < sum_d - instance.p_omax) {
    sol.status = SolveStatus::infeasible;
    return sol;
  }

  if (sum_c - sum_d <= instance.p_omax) {
    sol.u_star = caps;
    sol.dual_lambda = 0.0;
    return sol;
  }

  const std::vector<double> lo(n, 0.0);
  auto fill = water_fill(caps, lo, caps, sum_d + instance.p_omax);
  sol.u_star = std::move(fill.u);
  sol.dual_lambda = 2.0 * fill.level;
  return sol;
}

Decision brute_force_solve(const Instance& instance, double grid_step) {
  instance.validate();
  const std::size_t n = instance.n();
  if (n > 4)
    throw std::invalid_argument("brute_force_solve: agent count " + std::to_string(n) +
                                " exceeds the supported maximum of 4");
  if (!(grid_step > 0.0)) throw std::invalid_argument("brute_force_solve: step must be > 0");

  std::vector<std::vector<double>> grids(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double cap = instance.agents[i].p_c;
    for (double v = 0.0; v < cap; v += grid_step) grids[i].push_back(v);
    grids[i].push_back(cap);
  }

  const ConstraintSystem cs = build_vpp_constraints(instance);
  Decision best;
  double best_obj = std::numeric_limits<double>::infinity();
  Decision u(n, 0.0);

  std::vector<std::size_t> idx(n, 0);
  while (true) {
    for (std::size_t i = 0; i < n; ++i) u[i] = grids[i][idx[i]];
    if (check_feasibility(cs, instance, u) <= 1e-9) {
      const double obj = objective(instance, u);
      if (obj < best_obj) {
        best_obj = obj;
        best = u;
      }
    }
    std::size_t d = 0;
    while (d < n && ++idx[d] == grids[d].size()) {
      idx[d] = 0;
      ++d;
    }
    if (d == n) break;
  }
  if (best.empty()) throw std::runtime_error("brute_force_solve: no feasible grid point");
  return best;
}

double kkt_residual(const Instance& instance, const OracleSolution& sol) {
  if (sol.status != SolveStatus::optimal)
    throw std::invalid_argument("kkt_residual: requires an optimal solution");
  const ConstraintSystem cs = build_vpp_constraints(instance);

  double res = check_feasibility(cs, instance, sol.u_star);
  res = std::max(res, -sol.dual_lambda);

  double net = 0.0, sum_d = 0.0;
  for (std::size_t i = 0; i < instance.n(); ++i) {
    net += sol.u_star[i];
    sum_d += instance.agents[i].p_d;
  }
  const double upper_slack = sum_d + instance.p_omax - net;
  res = std::max(res, std::fabs(sol.dual_lambda * upper_slack));

  for (std::size_t i = 0; i < instance.n(); ++i) {
    const double u = sol.u_star[i];
    const double cap = instance.agents[i].p_c;
    if (u > 0.0 && u < cap)
      res = std::max(res, std::fabs(2.0 * (u - cap) + sol.dual_lambda));
  }
  return res;
}

}  // namespace loop_pe
