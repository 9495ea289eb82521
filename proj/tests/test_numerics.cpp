#include <doctest.h>

#include <cmath>
#include <functional>

#include "garnn/autodiff.hpp"
#include "garnn/gradcheck.hpp"
#include "oracles.hpp"

using namespace garnn;

TEST_CASE("matmul with the identity returns the other operand") {
  oracle::Gen gen(1);
  const Tensor m = gen.tensor(3, 4);
  CHECK(max_abs_diff(matmul(Tensor::identity(3), m), m) == 0.0);
}

TEST_CASE("shape mismatches name both shapes") {
  try {
    matmul(Tensor::matrix(2, 3), Tensor::matrix(2, 3));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string what = e.what();
    CHECK(what.find("[2x3] vs [2x3]") != std::string::npos);
    CHECK(what.find("matmul") != std::string::npos);
  }
  Tape tape;
  CHECK_THROWS_AS(add(tape.constant(Tensor::matrix(2, 2)), tape.constant(Tensor::matrix(2, 3))), DimensionError);
  CHECK_THROWS_AS(hadamard(tape.constant(Tensor::matrix(1, 2)), tape.constant(Tensor::matrix(2, 1))), DimensionError);
}

TEST_CASE("concat along columns") {
  Tape tape;
  Var c = concat_cols({tape.constant(Tensor::from_rows({{1, 2}})), tape.constant(Tensor::from_rows({{3}}))});
  CHECK(c.value().rows() == 1);
  REQUIRE(c.value().cols() == 3);
  CHECK(c.value()(0, 0) == 1.0);
  CHECK(c.value()(0, 1) == 2.0);
  CHECK(c.value()(0, 2) == 3.0);
}

TEST_CASE("concat width is additive and matmul is associative on random instances") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    oracle::Gen gen(seed);
    const std::size_t r = gen.index(1, 4), a = gen.index(1, 4), b = gen.index(1, 4), c = gen.index(1, 4);
    Tape tape;
    Var x = concat_cols({tape.constant(gen.tensor(r, a)), tape.constant(gen.tensor(r, b))});
    CHECK(x.value().cols() == a + b);
    const Tensor p = gen.tensor(r, a), q = gen.tensor(a, b), s = gen.tensor(b, c);
    CHECK(max_abs_diff(matmul(matmul(p, q), s), matmul(p, matmul(q, s))) < 1e-12);
  }
}

TEST_CASE("sigmoid and tanh at zero") {
  Tape tape;
  Var z = tape.constant(Tensor::scalar(0.0));
  CHECK(sigmoid(z).value().item() == 0.5);
  CHECK(tanh(z).value().item() == 0.0);
  CHECK(sigmoid(0.0) == 0.5);
}

TEST_CASE("leaky_relu branches") {
  CHECK(leaky_relu(2.0, 0.2) == 2.0);
  CHECK(leaky_relu(-1.0, 0.2) == doctest::Approx(-0.2).epsilon(1e-15));
  CHECK(leaky_relu(0.0, 0.2) == 0.0);
}

TEST_CASE("leaky_relu derivative at zero is the slope") {
  Tape tape;
  Var x = tape.variable(Tensor::scalar(0.0));
  tape.backward(leaky_relu(x, 0.2));
  CHECK(tape.gradient(x).item() == 0.2);
}

TEST_CASE("masked_row_softmax examples") {
  RowSupport four{{{0, 1, 2, 3}}};
  const Tensor eq = masked_row_softmax(Tensor::from_rows({{0.7, 0.7, 0.7, 0.7}}), four);
  for (std::size_t j = 0; j < 4; ++j) CHECK(eq(0, j) == doctest::Approx(0.25).epsilon(1e-15));

  RowSupport single{{{2}}};
  const Tensor one = masked_row_softmax(Tensor::from_rows({{5.0, -1.0, 3.0}}), single);
  CHECK(one(0, 2) == 1.0);
  CHECK(one(0, 0) == 0.0);
  CHECK(one(0, 1) == 0.0);

  RowSupport two{{{0, 1}}};
  const Tensor s = masked_row_softmax(Tensor::from_rows({{1.0, 2.0}}), two);
  // 1/(1+e) and e/(1+e)
  CHECK(s(0, 0) == doctest::Approx(0.2689414213699951).epsilon(1e-14));
  CHECK(s(0, 1) == doctest::Approx(0.7310585786300049).epsilon(1e-14));
}

TEST_CASE("masked_row_softmax rejects a row without support") {
  RowSupport empty{{{0}, {}}};
  CHECK_THROWS_AS(masked_row_softmax(Tensor::matrix(2, 2), empty), IsolatedVertexError);
}

TEST_CASE("masked_row_softmax: stochastic rows, zero off support, shift invariance") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    oracle::Gen gen(seed);
    const std::size_t n = gen.index(1, 8);
    const oracle::Mat adj = gen.adjacency(n, 0.4);
    std::vector<std::vector<bool>> mask(n, std::vector<bool>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) mask[i][j] = i == j || adj[i][j] != 0.0;
    const RowSupport sup = RowSupport::from_mask(mask);
    Tensor scores = gen.tensor(n, n, 50.0);
    const Tensor a = masked_row_softmax(scores, sup);
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (mask[i][j])
          row += a(i, j);
        else
          CHECK(a(i, j) == 0.0);
      }
      CHECK(std::abs(row - 1.0) < 1e-12);
    }
    const double shift = gen.uniform(-100.0, 100.0);
    for (std::size_t k = 0; k < scores.size(); ++k) scores[k] += shift;
    CHECK(max_abs_diff(masked_row_softmax(scores, sup), a) < 1e-12);
  }
}

TEST_CASE("backward: square, unused parameter, non-scalar loss") {
  Tape tape;
  Var p = tape.variable(Tensor::scalar(3.0));
  Var unused = tape.variable(Tensor::matrix(2, 2, 1.0));
  tape.backward(hadamard(p, p));
  CHECK(tape.gradient(p).item() == 6.0);
  const Tensor g = tape.gradient(unused);
  CHECK(g.same_shape(Tensor::matrix(2, 2)));
  CHECK(frobenius_norm(g) == 0.0);

  Tape t2;
  Var m = t2.variable(Tensor::matrix(2, 2, 1.0));
  CHECK_THROWS_AS(t2.backward(scale(m, 2.0)), ContractError);
}

TEST_CASE("gradients accumulate over every use of a node") {
  // loss = sum(x * x + 3 x) -> dx = 2x + 3
  Tape tape;
  Var x = tape.variable(Tensor::from_rows({{1.0, -2.0}}));
  Var loss = sum(add(hadamard(x, x), scale(x, 3.0)));
  tape.backward(loss);
  const Tensor g = tape.gradient(x);
  CHECK(g(0, 0) == 5.0);
  CHECK(g(0, 1) == -1.0);
}

TEST_CASE("stop_gradient blocks the path") {
  Tape tape;
  Var x = tape.variable(Tensor::scalar(2.0));
  tape.backward(hadamard(x, stop_gradient(x)));
  CHECK(tape.gradient(x).item() == 2.0);
}

TEST_CASE("finite differences on a quadratic are near exact") {
  oracle::Gen gen(3);
  const Tensor a = gen.tensor(3, 3);
  ScalarFunction f = [&](Tape& t, std::span<const Var> p) {
    Var ax = matmul(t.constant(a), p[0]);
    return sum(hadamard(ax, p[0]));
  };
  const GradCheckResult r = finite_difference_check(f, {gen.tensor(3, 2)});
  CHECK(r.max_rel_error < 1e-9);
  CHECK(r.coordinates == 6);
}

namespace {

/// Random chain of suite operations ending in a scalar. The support must
/// outlive the tape.
Var random_composition(Tape& t, std::span<const Var> p, const RowSupport& sup, std::uint64_t seed) {
  oracle::Gen gen(seed);
  const std::size_t n = 3;
  Var x = p[0];  // n x n
  for (int step = 0; step < 6; ++step) {
    switch (gen.index(0, 10)) {
      case 0: x = sigmoid(x); break;
      case 1: x = tanh(x); break;
      case 2: x = leaky_relu(x, 0.2); break;
      case 3: x = affine(x, gen.uniform(-2, 2), gen.uniform(-1, 1)); break;
      case 4: x = hadamard(x, p[1]); break;
      case 5: x = add(x, p[1]); break;
      case 6: x = matmul(x, p[1]); break;
      case 7: x = masked_row_softmax(x, sup); break;
      case 8: x = support_matmul(masked_row_softmax(p[1], sup), sup, x); break;
      case 9: x = slice_cols(concat_cols({x, p[1]}), 1, n); break;
      default: x = add_row(matmul_bt(x, p[1]), p[2]); break;
    }
  }
  Var w = t.constant(gen.tensor(n, n));
  return sum(hadamard(x, w));
}

}  // namespace

TEST_CASE("property: backward matches finite differences on random compositions") {
  RowSupport sup = RowSupport::dense(3);
  sup.rows[0] = {0, 2};
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    oracle::Gen gen(1000 + seed);
    ScalarFunction f = [&sup, seed](Tape& t, std::span<const Var> p) { return random_composition(t, p, sup, seed); };
    const GradCheckResult r = finite_difference_check(f, {gen.tensor(3, 3), gen.tensor(3, 3), gen.tensor(1, 3)});
    worst = std::max(worst, r.max_rel_error);
    CHECK_MESSAGE(r.max_rel_error < 1e-4, "seed " << seed);
  }
  MESSAGE("worst relative error " << worst);
}

TEST_CASE("masked absolute error sum and its gradient") {
  Tape tape;
  Var x = tape.variable(Tensor::column({1.0, 1.0, 5.0}));
  const Tensor truth = Tensor::column({1.0, 2.0, 3.0});
  Var s = masked_abs_error_sum(x, truth, Tensor::column({1.0, 1.0, 0.0}));
  CHECK(s.value().item() == 1.0);
  tape.backward(s);
  const Tensor g = tape.gradient(x);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == -1.0);
  CHECK(g[2] == 0.0);
}
