#pragma once

#include <string>
#include <vector>

#include "loop_pe/dataset.hpp"
#include "loop_pe/gauge.hpp"

namespace loop_pe {

struct EvalRow {
  std::size_t sample_id = 0;
  std::size_t n_active = 0;
  double optimality_gap = 0.0;
  bool gap_degenerate = false;  // ||u*|| = 0; gap column holds ||u||^2
  double feasibility_gap = 0.0;
  double neural_time_ms = 0.0;
  double oracle_time_ms = 0.0;
};

struct TimeStats {
  double avg_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double gap_avg = 0.0;
  double gap_min = 0.0;
  double gap_max = 0.0;
  double feas_max = 0.0;
  TimeStats neural;
  TimeStats oracle;
  double timer_floor_ms = 0.0;  // median cost of timing a no-op closure
};

struct SpectrumEntry {
  std::size_t sample_id = 0;
  std::string agent_id;
  double u_neural = 0.0;
  double u_oracle = 0.0;
};
using SpectrumExport = std::vector<SpectrumEntry>;

/// ||u - u*||^2 / ||u*||^2; degenerate ||u*|| = 0 falls back to ||u||^2
/// with the flag set.
double optimality_gap(const Decision& u, const Decision& u_star,
                      bool* degenerate = nullptr);

/// Per-sample gaps, feasibility, and wall times (median of `reps`
/// repetitions after a warm-up pass, monotonic clock).
EvalReport evaluate(const Model& model, const std::vector<Sample>& test_set,
                    std::size_t reps = 5);

struct ScenarioResult {
  bool reorder_ok = false;
  double reorder_deviation = 0.0;
  bool dropout_ok = false;
  double dropout_worst_violation = 0.0;
  bool scale_up_ok = false;
  double scale_up_violation = 0.0;
  bool all_ok() const { return reorder_ok && dropout_ok && scale_up_ok; }
};

/// Reorder / dropout / scale-up checks from one instance, no reload or
/// retraining in between.
ScenarioResult scenario_suite(const Model& model, const Instance& instance,
                              std::uint64_t seed = 0);

SpectrumExport make_spectrum(const Model& model, const std::vector<Sample>& test_set);

/// CSV table plus a standalone SVG overlaying neural and oracle spectra.
void export_spectrum(const SpectrumExport& spectrum, const std::string& csv_path,
                     const std::string& svg_path);

void save_eval_rows(const EvalReport& report, const std::string& path);
void save_eval_summary(const EvalReport& report, const std::string& path);

/// Timing table shaped like the average/min/max comparison of the two
/// methods.
std::string format_bench_table(const EvalReport& report);

}  // namespace loop_pe
