#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "loop_pe/eval.hpp"
#include "loop_pe/rng.hpp"
#include "loop_pe/train.hpp"

using namespace loop_pe;

namespace {

DatasetSpec tiny_spec(std::uint64_t seed = 0) {
  DatasetSpec spec;
  spec.n_agents_total = 8;
  spec.n_samples = 16;
  spec.n_test = 8;
  spec.subset_min = 3;
  spec.subset_max = 6;
  spec.seed = seed;
  return spec;
}

Model tiny_model(std::uint64_t seed = 0) {
  ModelConfig c;
  c.d_e = 8;
  c.d_k = 8;
  c.d_v_attn = 8;
  c.seed = seed;
  return init_model(c);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("optimality gap identity and scaling") {
  const Decision u_star{3.0, -4.0, 1.5};
  CHECK(optimality_gap(u_star, u_star) == 0.0);

  Decision scaled(u_star);
  for (auto& x : scaled) x *= 1.1;
  CHECK(optimality_gap(scaled, u_star) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("optimality gap flags the degenerate zero optimum") {
  bool degenerate = false;
  const double gap = optimality_gap({2.0, 1.0}, {0.0, 0.0}, &degenerate);
  CHECK(degenerate);
  CHECK(gap == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("optimality gap is invariant under simultaneous permutation") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform_int(0, 8));
    Decision u(n), star(n);
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = rng.uniform(0.0, 25.0);
      star[i] = rng.uniform(0.1, 25.0);
    }
    const Permutation sigma = Permutation::random(n, rng);
    CHECK(optimality_gap(sigma.apply(u), sigma.apply(star)) ==
          doctest::Approx(optimality_gap(u, star)).epsilon(1e-14));
  }
}

TEST_CASE("evaluate produces a consistent report") {
  const Dataset ds = generate_dataset(tiny_spec(42));
  const Model m = tiny_model(1);
  const EvalReport report = evaluate(m, ds.test, /*reps=*/3);

  REQUIRE(report.rows.size() == ds.test.size());
  double gap_sum = 0.0, gap_min = report.rows[0].optimality_gap,
         gap_max = report.rows[0].optimality_gap, feas_max = 0.0;
  for (const auto& r : report.rows) {
    CHECK(r.optimality_gap >= 0.0);
    CHECK(r.feasibility_gap <= 1e-7);
    CHECK(r.neural_time_ms > 0.0);
    CHECK(r.oracle_time_ms > 0.0);
    gap_sum += r.optimality_gap;
    gap_min = std::min(gap_min, r.optimality_gap);
    gap_max = std::max(gap_max, r.optimality_gap);
    feas_max = std::max(feas_max, r.feasibility_gap);
  }
  // Summary statistics recompute from the rows.
  CHECK(report.gap_avg == doctest::Approx(gap_sum / report.rows.size()).epsilon(1e-15));
  CHECK(report.gap_min == gap_min);
  CHECK(report.gap_max == gap_max);
  CHECK(report.feas_max == feas_max);
  CHECK(report.neural.min_ms <= report.neural.avg_ms);
  CHECK(report.neural.avg_ms <= report.neural.max_ms);
}

TEST_CASE("evaluate rejects empty input and zero repetitions") {
  const Dataset ds = generate_dataset(tiny_spec(50));
  const Model m = tiny_model(10);
  CHECK_THROWS_AS(evaluate(m, {}, 3), std::invalid_argument);
  CHECK_THROWS_AS(evaluate(m, ds.test, 0), std::invalid_argument);
}

TEST_CASE("scenario suite passes on an untrained model") {
  const Dataset ds = generate_dataset(tiny_spec(43));
  const Model m = tiny_model(2);
  const ScenarioResult res = scenario_suite(m, ds.test[0].instance, 7);
  CHECK(res.reorder_ok);
  CHECK(res.dropout_ok);
  CHECK(res.scale_up_ok);
  CHECK(res.all_ok());
}

TEST_CASE("identity permutation gives exact equality in the reorder check") {
  const Dataset ds = generate_dataset(tiny_spec(44));
  const Model m = tiny_model(3);
  const Instance& inst = ds.test[0].instance;
  const Permutation id = Permutation::identity(inst.n());
  const Decision a = apply(m, id.apply(inst));
  const Decision b = id.apply(apply(m, inst));
  CHECK(a == b);
}

TEST_CASE("dropout of each agent in turn yields feasible outputs") {
  Instance inst;
  inst.p_omax = 100.0;
  for (int i = 0; i < 5; ++i)
    inst.agents.push_back({"a" + std::to_string(i), 12.0 + 2.0 * i, 6.0 + i});
  const Model m = tiny_model(4);
  const ScenarioResult res = scenario_suite(m, inst, 11);
  CHECK(res.dropout_ok);
  CHECK(res.dropout_worst_violation <= 1e-7);
}

TEST_CASE("spectrum rows cover every active agent and match the solver") {
  const Dataset ds = generate_dataset(tiny_spec(45));
  const Model m = tiny_model(5);
  const SpectrumExport spectrum = make_spectrum(m, ds.test);

  std::size_t expected = 0;
  for (const auto& s : ds.test) expected += s.instance.n();
  CHECK(spectrum.size() == expected);

  // Mean per-agent deviation obeys the Cauchy-Schwarz bound from the gap.
  std::size_t cursor = 0;
  for (const auto& s : ds.test) {
    const Decision u = apply(m, s.instance);
    double abs_sum = 0.0, max_cap = 0.0;
    const double gap = optimality_gap(u, s.label.u_star);
    for (std::size_t i = 0; i < s.instance.n(); ++i, ++cursor) {
      CHECK(spectrum[cursor].sample_id == s.sample_id);
      CHECK(spectrum[cursor].u_oracle == s.label.u_star[i]);
      abs_sum += std::fabs(spectrum[cursor].u_neural - spectrum[cursor].u_oracle);
      max_cap = std::max(max_cap, s.instance.agents[i].p_c);
    }
    const double mean_dev = abs_sum / static_cast<double>(s.instance.n());
    CHECK(mean_dev <= max_cap * std::sqrt(gap) + 1e-12);
  }
}

TEST_CASE("spectrum export rejects labels that disagree with the solver") {
  const Dataset ds = generate_dataset(tiny_spec(46));
  const Model m = tiny_model(6);
  std::vector<Sample> corrupted(ds.test.begin(), ds.test.begin() + 1);
  corrupted[0].label.u_star[0] += 0.5;
  CHECK_THROWS_AS(make_spectrum(m, corrupted), std::runtime_error);
}

TEST_CASE("spectrum files are written with the documented columns") {
  const Dataset ds = generate_dataset(tiny_spec(47));
  const Model m = tiny_model(7);
  const SpectrumExport spectrum = make_spectrum(m, ds.test);
  export_spectrum(spectrum, "spec_test.csv", "spec_test.svg");

  const std::string csv = read_file("spec_test.csv");
  CHECK(csv.rfind("sample_id,agent_id,u_neural,u_oracle\n", 0) == 0);
  std::size_t lines = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  CHECK(lines == spectrum.size() + 1);

  const std::string svg = read_file("spec_test.svg");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  std::remove("spec_test.csv");
  std::remove("spec_test.svg");
}

TEST_CASE("eval row and summary files round-trip the statistics") {
  const Dataset ds = generate_dataset(tiny_spec(48));
  const Model m = tiny_model(8);
  const EvalReport report = evaluate(m, ds.test, 3);
  save_eval_rows(report, "eval_rows_test.csv");
  save_eval_summary(report, "eval_summary_test.json");

  const std::string rows = read_file("eval_rows_test.csv");
  CHECK(rows.rfind("sample_id,n_active,optimality_gap,gap_degenerate,feasibility_gap,"
                   "neural_time_ms,oracle_time_ms\n",
                   0) == 0);
  const std::string summary = read_file("eval_summary_test.json");
  for (const char* key : {"optimality_gap", "feasibility_gap", "timing_ms", "average",
                          "minimum", "maximum"})
    CHECK(summary.find(key) != std::string::npos);
  std::remove("eval_rows_test.csv");
  std::remove("eval_summary_test.json");
}

TEST_CASE("bench table lists average/min/max for both methods") {
  const Dataset ds = generate_dataset(tiny_spec(49));
  const Model m = tiny_model(9);
  const EvalReport report = evaluate(m, ds.test, 3);
  const std::string table = format_bench_table(report);
  CHECK(table.find("metric,oracle_ms,neural_ms") != std::string::npos);
  CHECK(table.find("average,") != std::string::npos);
  CHECK(table.find("minimum,") != std::string::npos);
  CHECK(table.find("maximum,") != std::string::npos);
}
