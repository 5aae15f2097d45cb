#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "loop_pe/rng.hpp"
#include "loop_pe/tape.hpp"
#include "loop_pe/tensor.hpp"

using namespace loop_pe;

namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double lo = -2.0,
                     double hi = 2.0) {
  Tensor t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Independent reference: plain i,j,k triple loop, k ascending.
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  Tensor out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a.at(i, k) * b.at(k, j);
      out.at(i, j) = acc;
    }
  return out;
}

}  // namespace

TEST_CASE("matmul identity") {
  Tape tape;
  const NodeId a = tape.leaf(Tensor(2, 2, {1, 2, 3, 4}));
  const NodeId out = tape.matmul(a, tape.leaf(Tensor::identity(2)));
  CHECK(tape.value(out) == Tensor(2, 2, {1, 2, 3, 4}));
}

TEST_CASE("matmul hand value") {
  Tape tape;
  const NodeId out =
      tape.matmul(tape.leaf(Tensor(1, 2, {1, 2})), tape.leaf(Tensor(2, 1, {3, 4})));
  CHECK(tape.value(out) == Tensor(1, 1, {11}));
}

TEST_CASE("matmul matches triple-loop oracle exactly") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_tensor(rng, 3, 4);
    const Tensor b = random_tensor(rng, 4, 2);
    Tape tape;
    const Tensor got = tape.value(tape.matmul(tape.leaf(a), tape.leaf(b)));
    CHECK(got == matmul_oracle(a, b));
  }
}

TEST_CASE("matmul shape error names both shapes") {
  Tape tape;
  const NodeId a = tape.leaf(Tensor(2, 3));
  const NodeId b = tape.leaf(Tensor(2, 3));
  CHECK_THROWS_WITH_AS(tape.matmul(a, b), doctest::Contains("2x3"),
                       std::invalid_argument);
}

TEST_CASE("softmax symmetric rows") {
  Tape tape;
  const Tensor out = tape.value(tape.softmax_rows(tape.leaf(Tensor(1, 2, {0, 0}))));
  CHECK(out.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out.at(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("softmax shift invariance on constant rows") {
  for (double c : {-3.0, 0.0, 42.0, 1e6}) {
    Tape tape;
    const Tensor out =
        tape.value(tape.softmax_rows(tape.leaf(Tensor(1, 3, {c, c, c}))));
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(out.at(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
}

TEST_CASE("softmax of [0, ln 3]") {
  Tape tape;
  const Tensor out =
      tape.value(tape.softmax_rows(tape.leaf(Tensor(1, 2, {0.0, std::log(3.0)}))));
  CHECK(out.at(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(out.at(0, 1) == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one and stay in [0,1]") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor z = random_tensor(rng, 5, 7, -40.0, 40.0);
    Tape tape;
    const Tensor s = tape.value(tape.softmax_rows(tape.leaf(z)));
    for (std::size_t i = 0; i < s.rows(); ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < s.cols(); ++j) {
        sum += s.at(i, j);
        CHECK(s.at(i, j) >= 0.0);
        CHECK(s.at(i, j) <= 1.0);
      }
      CHECK(std::fabs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("softmax is rowwise: permuting input rows permutes output rows exactly") {
  Rng rng(13);
  const Tensor z = random_tensor(rng, 6, 4);
  Tensor permuted(6, 4);
  const std::size_t perm[6] = {3, 0, 5, 1, 4, 2};
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) permuted.at(i, j) = z.at(perm[i], j);

  Tape tape;
  const Tensor s = tape.value(tape.softmax_rows(tape.leaf(z)));
  const Tensor sp = tape.value(tape.softmax_rows(tape.leaf(permuted)));
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(sp.at(i, j) == s.at(perm[i], j));
}

TEST_CASE("softmax rejects non-finite input") {
  Tape tape;
  const NodeId z = tape.leaf(Tensor(1, 2, {0.0, std::numeric_limits<double>::infinity()}));
  CHECK_THROWS_AS(tape.softmax_rows(z), std::domain_error);
}

TEST_CASE("elementwise examples") {
  Tape tape;
  const Tensor r = tape.value(tape.relu(tape.leaf(Tensor(1, 3, {-1, 0, 2}))));
  CHECK(r == Tensor(1, 3, {0, 0, 2}));

  const Tensor m = tape.value(tape.max_scalar(tape.leaf(Tensor(1, 2, {0.5, 2.0})), 1.0));
  CHECK(m == Tensor(1, 2, {1.0, 2.0}));

  const Tensor d = tape.value(
      tape.div(tape.leaf(Tensor(1, 2, {6, 9})), tape.leaf(Tensor(1, 2, {2, 3}))));
  CHECK(d == Tensor(1, 2, {3, 3}));
}

TEST_CASE("elementwise shape and zero-divisor errors") {
  Tape tape;
  const NodeId a = tape.leaf(Tensor(2, 2));
  const NodeId b = tape.leaf(Tensor(1, 4));
  CHECK_THROWS_AS(tape.add(a, b), std::invalid_argument);
  const NodeId z = tape.leaf(Tensor(2, 2));
  CHECK_THROWS_AS(tape.div(a, z), std::domain_error);
  CHECK_THROWS_AS(tape.div_scalar(a, 0.0), std::domain_error);
}

TEST_CASE("forward evaluation is bitwise deterministic") {
  auto run = [] {
    Rng rng(99);
    Tape tape;
    const NodeId x = tape.leaf(random_tensor(rng, 4, 3));
    const NodeId w = tape.leaf(random_tensor(rng, 3, 5));
    const NodeId out = tape.softmax_rows(tape.matmul(tape.relu(x), w));
    return tape.value(out);
  };
  CHECK(run() == run());
}
