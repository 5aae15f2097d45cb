#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "loop_pe/oracle.hpp"
#include "loop_pe/problem.hpp"
#include "loop_pe/rng.hpp"

using namespace loop_pe;

namespace {

Instance make_instance(std::vector<std::pair<double, double>> agents, double p_omax) {
  Instance inst;
  inst.p_omax = p_omax;
  for (std::size_t i = 0; i < agents.size(); ++i)
    inst.agents.push_back({"a" + std::to_string(i), agents[i].first, agents[i].second});
  return inst;
}

Instance random_instance(Rng& rng, std::size_t n, double p_omax = 100.0) {
  std::vector<std::pair<double, double>> agents;
  for (std::size_t i = 0; i < n; ++i)
    agents.push_back({rng.uniform(10.0, 25.0), rng.uniform(5.0, 20.0)});
  return make_instance(std::move(agents), p_omax);
}

}  // namespace

TEST_CASE("vpp constraints, single agent") {
  const Instance inst = make_instance({{20.0, 10.0}}, 100.0);
  const ConstraintSystem cs = build_vpp_constraints(inst);

  CHECK(cs.d_u == 1);
  CHECK(cs.local_template == Tensor(2, 1, {1.0, -1.0}));
  REQUIRE(cs.local_rhs.size() == 1);
  CHECK(cs.local_rhs[0] == std::vector<double>{20.0, 0.0});

  CHECK(cs.coupled_template == Tensor(2, 1, {1.0, -1.0}));
  CHECK(cs.coupled_rhs[0] == std::vector<double>{10.0, -10.0});
  CHECK(cs.coupled_offset == std::vector<double>{100.0, 100.0});

  // Effective coupled right-hand sides: u <= 110, -u <= 90.
  CHECK(cs.coupled_rhs[0][0] + cs.coupled_offset[0] == 110.0);
  CHECK(cs.coupled_rhs[0][1] + cs.coupled_offset[1] == 90.0);
}

TEST_CASE("vpp constraints, two agents") {
  const Instance inst = make_instance({{20.0, 10.0}, {30.0, 5.0}}, 100.0);
  const ConstraintSystem cs = build_vpp_constraints(inst);
  double up = cs.coupled_offset[0], down = cs.coupled_offset[1];
  for (const auto& rhs : cs.coupled_rhs) {
    up += rhs[0];
    down += rhs[1];
  }
  CHECK(up == 115.0);   // sum u <= 115
  CHECK(down == 85.0);  // -sum u <= 85
}

TEST_CASE("constraint construction commutes with permutation") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Instance inst = random_instance(rng, 6);
    const Permutation sigma = Permutation::random(6, rng);
    const ConstraintSystem cs = build_vpp_constraints(inst);
    const ConstraintSystem csp = build_vpp_constraints(sigma.apply(inst));
    for (std::size_t k = 0; k < 6; ++k) CHECK(csp.local_rhs[k] == cs.local_rhs[sigma[k]]);
    // Coupled sums are order-free.
    double up = 0.0, up_p = 0.0;
    for (std::size_t k = 0; k < 6; ++k) {
      up += cs.coupled_rhs[k][0];
      up_p += csp.coupled_rhs[k][0];
    }
    CHECK(up == doctest::Approx(up_p).epsilon(1e-15));
  }
}

TEST_CASE("feasibility examples") {
  const Instance inst = make_instance({{20.0, 10.0}}, 100.0);
  const ConstraintSystem cs = build_vpp_constraints(inst);
  CHECK(check_feasibility(cs, inst, {20.0}) == 0.0);
  CHECK(check_feasibility(cs, inst, {21.0}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(check_feasibility(cs, inst, {-2.0}) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("oracle solutions are feasible") {
  Rng rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const Instance inst = random_instance(rng, 1 + trial % 8, rng.uniform(10.0, 100.0));
    const OracleSolution sol = solve_exact(inst);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(check_feasibility(build_vpp_constraints(inst), inst, sol.u_star) <= 1e-9);
  }
}

TEST_CASE("objective examples and permutation invariance") {
  const Instance inst = make_instance({{20.0, 10.0}, {15.0, 5.0}}, 100.0);
  CHECK(objective(inst, {20.0, 15.0}) == 0.0);
  CHECK(objective(make_instance({{20.0, 0.0}}, 100.0), {18.0}) == 4.0);

  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const Instance random = random_instance(rng, 7);
    Decision u(7);
    for (auto& x : u) x = rng.uniform(0.0, 25.0);
    const Permutation sigma = Permutation::random(7, rng);
    CHECK(objective(sigma.apply(random), sigma.apply(u)) ==
          doctest::Approx(objective(random, u)).epsilon(1e-15));
  }
}

TEST_CASE("check_feasibility is nonnegative") {
  Rng rng(24);
  for (int trial = 0; trial < 50; ++trial) {
    const Instance inst = random_instance(rng, 4);
    Decision u(4);
    for (auto& x : u) x = rng.uniform(-50.0, 50.0);
    CHECK(check_feasibility(build_vpp_constraints(inst), inst, u) >= 0.0);
  }
}

TEST_CASE("instance validation") {
  CHECK_THROWS_AS(make_instance({}, 100.0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(make_instance({{20.0, 10.0}}, 0.0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(make_instance({{0.0, 10.0}}, 100.0).validate(), std::invalid_argument);
  Instance dup = make_instance({{20.0, 10.0}, {15.0, 5.0}}, 100.0);
  dup.agents[1].agent_id = dup.agents[0].agent_id;
  CHECK_THROWS_AS(dup.validate(), std::invalid_argument);
}

TEST_CASE("permutation roundtrip is the identity") {
  Rng rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    const Permutation sigma = Permutation::random(9, rng);
    const Instance inst = random_instance(rng, 9);
    const Instance back = sigma.inverse().apply(sigma.apply(inst));
    for (std::size_t i = 0; i < 9; ++i)
      CHECK(back.agents[i].agent_id == inst.agents[i].agent_id);
  }
}

TEST_CASE("eliminate_equalities: no equality rows returns the system unchanged") {
  const Instance inst = make_instance({{20.0, 10.0}, {15.0, 5.0}}, 100.0);
  const ConstraintSystem cs = build_vpp_constraints(inst);
  const auto [reduced, rep] = eliminate_equalities(cs);
  CHECK(rep.is_identity);
  CHECK(reduced.d_u == cs.d_u);
  CHECK(reduced.local_rhs == cs.local_rhs);
  const Decision z{1.25, -3.5};
  CHECK(rep.to_original(z) == z);
}

TEST_CASE("eliminate_equalities: A=[1 1], B=[-1]") {
  ConstraintSystem cs;
  cs.d_u = 2;
  cs.local_template = Tensor(1, 2, {1.0, 0.0});  // u_0 <= rhs, arbitrary inequality
  cs.local_rhs = {{5.0}};
  cs.coupled_template = Tensor(0, 2);
  cs.coupled_rhs = {{}};
  cs.coupled_offset = {};
  cs.equality_template = Tensor(1, 2, {1.0, 1.0});
  cs.equality_rhs = {{-1.0}};

  const auto [reduced, rep] = eliminate_equalities(cs);
  CHECK_FALSE(rep.is_identity);
  REQUIRE(rep.particular.size() == 1);
  CHECK(rep.particular[0][0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(rep.particular[0][1] == doctest::Approx(0.5).epsilon(1e-12));
  REQUIRE(rep.null_basis.cols() == 1);
  // Null direction proportional to (1, -1).
  CHECK(rep.null_basis.at(0, 0) == doctest::Approx(-rep.null_basis.at(1, 0)).epsilon(1e-12));
  CHECK(std::fabs(rep.null_basis.at(0, 0)) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(reduced.d_u == 1);
}

TEST_CASE("eliminate_equalities: random 1x3 equality round-trips within 1e-10") {
  Rng rng(26);
  for (int trial = 0; trial < 30; ++trial) {
    ConstraintSystem cs;
    cs.d_u = 3;
    cs.local_template = Tensor(2, 3);
    for (std::size_t i = 0; i < cs.local_template.size(); ++i)
      cs.local_template[i] = rng.uniform(-1.0, 1.0);
    cs.local_rhs = {{rng.uniform(0.0, 5.0), rng.uniform(0.0, 5.0)},
                    {rng.uniform(0.0, 5.0), rng.uniform(0.0, 5.0)}};
    cs.coupled_template = Tensor(0, 3);
    cs.coupled_rhs = {{}, {}};
    cs.coupled_offset = {};
    cs.equality_template = Tensor(1, 3);
    for (std::size_t i = 0; i < 3; ++i) cs.equality_template[i] = rng.uniform(-2.0, 2.0);
    cs.equality_rhs = {{rng.uniform(-3.0, 3.0)}, {rng.uniform(-3.0, 3.0)}};

    const auto [reduced, rep] = eliminate_equalities(cs);
    CHECK(reduced.d_u == 2);

    for (int probe = 0; probe < 10; ++probe) {
      Decision z(2 * 2);
      for (auto& x : z) x = rng.uniform(-10.0, 10.0);
      const Decision u = rep.to_original(z);
      for (std::size_t agent = 0; agent < 2; ++agent) {
        double resid = cs.equality_rhs[agent][0];
        for (std::size_t d = 0; d < 3; ++d)
          resid += cs.equality_template[d] * u[agent * 3 + d];
        CHECK(std::fabs(resid) <= 1e-10);
      }
    }
  }
}

TEST_CASE("eliminate_equalities rejects rank-deficient rows") {
  ConstraintSystem cs;
  cs.d_u = 2;
  cs.local_template = Tensor(0, 2);
  cs.local_rhs = {{}};
  cs.coupled_template = Tensor(0, 2);
  cs.coupled_rhs = {{}};
  cs.equality_template = Tensor(2, 2, {1.0, 1.0, 2.0, 2.0});
  cs.equality_rhs = {{-1.0, -2.0}};
  CHECK_THROWS_AS(eliminate_equalities(cs), std::runtime_error);
}

TEST_CASE("infeasible instance definition") {
  CHECK_FALSE(instance_infeasible(make_instance({{20.0, 10.0}}, 100.0)));
  // sum p_c = 5 < sum p_d - p_omax = 50 - 10 = 40.
  CHECK(instance_infeasible(make_instance({{5.0, 50.0}}, 10.0)));
}
