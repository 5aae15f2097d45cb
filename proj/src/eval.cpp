#include "loop_pe/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "loop_pe/rng.hpp"

namespace loop_pe {

using nlohmann::json;

double optimality_gap(const Decision& u, const Decision& u_star, bool* degenerate) {
  if (u.size() != u_star.size())
    throw std::invalid_argument("optimality_gap: decision length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - u_star[i];
    num += d * d;
    den += u_star[i] * u_star[i];
  }
  if (den == 0.0) {
    if (degenerate) *degenerate = true;
    double un = 0.0;
    for (double x : u) un += x * x;
    return un;
  }
  if (degenerate) *degenerate = false;
  return num / den;
}

namespace {

using Clock = std::chrono::steady_clock;

template <typename F>
double median_time_ms(F&& fn, std::size_t reps) {
  fn();  // warm-up
  std::vector<double> times;
  times.reserve(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    fn();
    const auto t1 = Clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

TimeStats stats_of(const std::vector<double>& xs) {
  TimeStats s;
  if (xs.empty()) return s;
  s.min_ms = s.max_ms = xs[0];
  double sum = 0.0;
  for (double x : xs) {
    sum += x;
    s.min_ms = std::min(s.min_ms, x);
    s.max_ms = std::max(s.max_ms, x);
  }
  s.avg_ms = sum / static_cast<double>(xs.size());
  return s;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

EvalReport evaluate(const Model& model, const std::vector<Sample>& test_set,
                    std::size_t reps) {
  if (test_set.empty()) throw std::invalid_argument("evaluate: empty test set");
  if (reps < 1) throw std::invalid_argument("evaluate: need at least one repetition");

  EvalReport report;
  report.rows.reserve(test_set.size());
  std::vector<double> neural_times, oracle_times;

  report.timer_floor_ms = median_time_ms([] {}, reps);

  for (const Sample& sample : test_set) {
    const Instance& inst = sample.instance;
    EvalRow row;
    row.sample_id = sample.sample_id;
    row.n_active = inst.n();

    Decision u;
    row.neural_time_ms = median_time_ms([&] { u = apply(model, inst); }, reps);
    OracleSolution sol;
    row.oracle_time_ms = median_time_ms([&] { sol = solve_exact(inst); }, reps);
    if (sol.status != SolveStatus::optimal)
      throw std::runtime_error("evaluate: sample " + std::to_string(sample.sample_id) +
                               " is infeasible");

    row.optimality_gap = optimality_gap(u, sol.u_star, &row.gap_degenerate);
    const ConstraintSystem cs = build_vpp_constraints(inst);
    row.feasibility_gap = check_feasibility(cs, inst, u);

    neural_times.push_back(row.neural_time_ms);
    oracle_times.push_back(row.oracle_time_ms);
    report.rows.push_back(row);
  }

  report.gap_min = report.gap_max = report.rows[0].optimality_gap;
  double gap_sum = 0.0;
  for (const auto& row : report.rows) {
    gap_sum += row.optimality_gap;
    report.gap_min = std::min(report.gap_min, row.optimality_gap);
    report.gap_max = std::max(report.gap_max, row.optimality_gap);
    report.feas_max = std::max(report.feas_max, row.feasibility_gap);
  }
  report.gap_avg = gap_sum / static_cast<double>(report.rows.size());
  report.neural = stats_of(neural_times);
  report.oracle = stats_of(oracle_times);
  return report;
}

ScenarioResult scenario_suite(const Model& model, const Instance& instance,
                              std::uint64_t seed) {
  instance.validate();
  const std::size_t n = instance.n();
  Rng rng(seed);
  ScenarioResult result;
  const double feas_tol = 1e-7;
  const double inf = std::numeric_limits<double>::infinity();

  // (a) Reorder: decisions must follow the input order.
  try {
    const Permutation sigma = Permutation::random(n, rng);
    const Decision permuted_out = apply(model, sigma.apply(instance));
    const Decision out_permuted = sigma.apply(apply(model, instance));
    double scale = 1.0, dev = 0.0;
    for (double x : out_permuted) scale = std::max(scale, std::fabs(x));
    for (std::size_t i = 0; i < n; ++i)
      dev = std::max(dev, std::fabs(permuted_out[i] - out_permuted[i]));
    result.reorder_deviation = dev / scale;
    result.reorder_ok = result.reorder_deviation <= 1e-9;
  } catch (const std::exception&) {
    result.reorder_ok = false;
    result.reorder_deviation = inf;
  }

  // (b) Dropout: each agent removed in turn, same model. Vacuous for a
  // single agent, since an empty instance is not a scene.
  try {
    result.dropout_ok = true;
    for (std::size_t drop = 0; drop < n && n >= 2; ++drop) {
      Instance reduced;
      reduced.p_omax = instance.p_omax;
      for (std::size_t i = 0; i < n; ++i)
        if (i != drop) reduced.agents.push_back(instance.agents[i]);
      const Decision u = apply(model, reduced);
      const double viol =
          check_feasibility(build_vpp_constraints(reduced), reduced, u);
      result.dropout_worst_violation = std::max(result.dropout_worst_violation, viol);
      if (viol > feas_tol) result.dropout_ok = false;
    }
  } catch (const std::exception&) {
    result.dropout_ok = false;
    result.dropout_worst_violation = inf;
  }

  // (c) Scaling: a fresh agent joins, same model.
  try {
    Instance extended = instance;
    AgentRecord fresh;
    fresh.agent_id = "agent_joined";
    fresh.p_c = rng.uniform(10.0, 25.0);
    fresh.p_d = rng.uniform(5.0, 20.0);
    extended.agents.push_back(std::move(fresh));
    const Decision u = apply(model, extended);
    result.scale_up_violation =
        check_feasibility(build_vpp_constraints(extended), extended, u);
    result.scale_up_ok = result.scale_up_violation <= feas_tol;
  } catch (const std::exception&) {
    result.scale_up_ok = false;
    result.scale_up_violation = inf;
  }

  return result;
}

SpectrumExport make_spectrum(const Model& model, const std::vector<Sample>& test_set) {
  SpectrumExport spectrum;
  for (const Sample& sample : test_set) {
    const Decision u = apply(model, sample.instance);
    const OracleSolution sol = solve_exact(sample.instance);
    if (sol.status != SolveStatus::optimal)
      throw std::runtime_error("spectrum: sample " + std::to_string(sample.sample_id) +
                               " is infeasible");
    if (sample.label.status == SolveStatus::optimal) {
      for (std::size_t i = 0; i < sol.u_star.size(); ++i)
        if (std::fabs(sol.u_star[i] - sample.label.u_star[i]) > 1e-9)
          throw std::runtime_error("spectrum: label of sample " +
                                   std::to_string(sample.sample_id) +
                                   " disagrees with the solver");
    }
    for (std::size_t i = 0; i < sample.instance.n(); ++i) {
      SpectrumEntry e;
      e.sample_id = sample.sample_id;
      e.agent_id = sample.instance.agents[i].agent_id;
      e.u_neural = u[i];
      e.u_oracle = sol.u_star[i];
      spectrum.push_back(std::move(e));
    }
  }
  return spectrum;
}

void export_spectrum(const SpectrumExport& spectrum, const std::string& csv_path,
                     const std::string& svg_path) {
  {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw std::runtime_error("spectrum: cannot write " + csv_path);
    out << "sample_id,agent_id,u_neural,u_oracle\n";
    for (const auto& e : spectrum)
      out << e.sample_id << "," << e.agent_id << "," << fmt(e.u_neural) << ","
          << fmt(e.u_oracle) << "\n";
  }

  std::ofstream out(svg_path, std::ios::binary);
  if (!out) throw std::runtime_error("spectrum: cannot write " + svg_path);

  const std::size_t points = spectrum.size();
  const double margin = 40.0;
  const double width = std::max<double>(640.0, margin * 2 + 6.0 * points);
  const double height = 360.0;
  double y_max = 1.0;
  for (const auto& e : spectrum)
    y_max = std::max({y_max, e.u_neural, e.u_oracle});
  const auto x_of = [&](std::size_t i) {
    return points <= 1 ? margin
                       : margin + (width - 2 * margin) * static_cast<double>(i) /
                             static_cast<double>(points - 1);
  };
  const auto y_of = [&](double v) {
    return height - margin - (height - 2 * margin) * (v / y_max);
  };

  char buf[256];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n",
                margin, height - margin, width - margin, height - margin);
  out << buf;
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n",
                margin, margin, margin, height - margin);
  out << buf;
  out << "<text x=\"" << margin << "\" y=\"" << margin - 16
      << "\" font-size=\"12\">dispatch (kW) per agent, grouped by sample. circles: "
         "exact solver, crosses: neural</text>\n";

  // Sample separators.
  for (std::size_t i = 1; i < points; ++i) {
    if (spectrum[i].sample_id != spectrum[i - 1].sample_id) {
      const double x = 0.5 * (x_of(i - 1) + x_of(i));
      std::snprintf(buf, sizeof(buf),
                    "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"#dddddd\"/>\n",
                    x, margin, x, height - margin);
      out << buf;
    }
  }

  out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1\" points=\"";
  for (std::size_t i = 0; i < points; ++i) {
    std::snprintf(buf, sizeof(buf), "%g,%g ", x_of(i), y_of(spectrum[i].u_oracle));
    out << buf;
  }
  out << "\"/>\n";
  for (std::size_t i = 0; i < points; ++i) {
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%g\" cy=\"%g\" r=\"2.2\" fill=\"#1f77b4\"/>\n", x_of(i),
                  y_of(spectrum[i].u_oracle));
    out << buf;
  }
  for (std::size_t i = 0; i < points; ++i) {
    const double x = x_of(i), y = y_of(spectrum[i].u_neural);
    std::snprintf(buf, sizeof(buf),
                  "<path d=\"M %g %g L %g %g M %g %g L %g %g\" stroke=\"#d62728\" "
                  "stroke-width=\"1\"/>\n",
                  x - 2.5, y - 2.5, x + 2.5, y + 2.5, x - 2.5, y + 2.5, x + 2.5, y - 2.5);
    out << buf;
  }
  out << "</svg>\n";
}

void save_eval_rows(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("eval: cannot write " + path);
  out << "sample_id,n_active,optimality_gap,gap_degenerate,feasibility_gap,"
         "neural_time_ms,oracle_time_ms\n";
  for (const auto& r : report.rows) {
    out << r.sample_id << "," << r.n_active << "," << fmt(r.optimality_gap) << ","
        << (r.gap_degenerate ? 1 : 0) << "," << fmt(r.feasibility_gap) << ","
        << fmt(r.neural_time_ms) << "," << fmt(r.oracle_time_ms) << "\n";
  }
}

void save_eval_summary(const EvalReport& report, const std::string& path) {
  double feas_min = report.rows.empty() ? 0.0 : report.rows[0].feasibility_gap;
  double feas_sum = 0.0;
  for (const auto& r : report.rows) {
    feas_min = std::min(feas_min, r.feasibility_gap);
    feas_sum += r.feasibility_gap;
  }
  const json doc = {
      {"samples", report.rows.size()},
      {"optimality_gap",
       {{"average", report.gap_avg}, {"minimum", report.gap_min}, {"maximum", report.gap_max}}},
      {"feasibility_gap",
       {{"minimum", feas_min},
        {"average", report.rows.empty() ? 0.0 : feas_sum / report.rows.size()},
        {"maximum", report.feas_max}}},
      {"timing_ms",
       {{"oracle",
         {{"average", report.oracle.avg_ms},
          {"minimum", report.oracle.min_ms},
          {"maximum", report.oracle.max_ms}}},
        {"neural",
         {{"average", report.neural.avg_ms},
          {"minimum", report.neural.min_ms},
          {"maximum", report.neural.max_ms}}},
        {"timer_floor", report.timer_floor_ms}}},
  };
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("eval: cannot write " + path);
  out << doc.dump(2) << "\n";
}

std::string format_bench_table(const EvalReport& report) {
  char buf[256];
  std::string s;
  s += "metric,oracle_ms,neural_ms\n";
  std::snprintf(buf, sizeof(buf), "average,%.6f,%.6f\n", report.oracle.avg_ms,
                report.neural.avg_ms);
  s += buf;
  std::snprintf(buf, sizeof(buf), "minimum,%.6f,%.6f\n", report.oracle.min_ms,
                report.neural.min_ms);
  s += buf;
  std::snprintf(buf, sizeof(buf), "maximum,%.6f,%.6f\n", report.oracle.max_ms,
                report.neural.max_ms);
  s += buf;
  return s;
}

}  // namespace loop_pe
