#include <doctest.h>

#include <cmath>
#include <random>

#include "mmlm/errors.hpp"
#include "mmlm/grad_check.hpp"
#include "mmlm/tape.hpp"
#include "mmlm/tensor.hpp"

using namespace mmlm;

namespace {

Tensor random_tensor(std::mt19937_64& gen, Shape shape, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Tensor t(shape);
  for (auto& v : t.data()) v = dist(gen);
  return t;
}

// tanh from its exponential definition, with exp summed as a power series.
double series_tanh(double x) {
  auto series_exp = [](double y) {
    double term = 1, sum = 1;
    for (int n = 1; n < 60; ++n) {
      term *= y / n;
      sum += term;
    }
    return sum;
  };
  const double e2 = series_exp(2 * x);
  return (e2 - 1) / (e2 + 1);
}

}  // namespace

TEST_SUITE("tensor_core") {
  TEST_CASE("shapes are positive and data length matches") {
    CHECK_THROWS_AS(Shape::vector(0), ShapeError);
    CHECK_THROWS_AS(Tensor(Shape::matrix(2, 2), {1, 2, 3}), ShapeError);
    const Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK(t.at(1, 2) == 6);
    CHECK(t.shape().str() == "[2x3]");
  }

  TEST_CASE("matvec") {
    CHECK(matvec(Tensor::identity(3), Tensor::vector({1, 2, 3})) == Tensor::vector({1, 2, 3}));
    CHECK(matvec(Tensor::zeros(2, 3), Tensor::vector({5, 5, 5})) == Tensor::vector({0, 0}));
    // Row dots by hand: 1*1 + 2*1, 3*1 + 4*1.
    CHECK(matvec(Tensor::matrix(2, 2, {1, 2, 3, 4}), Tensor::vector({1, 1})) == Tensor::vector({3, 7}));
  }

  TEST_CASE("matvec shape error names both shapes") {
    try {
      matvec(Tensor::zeros(2, 3), Tensor::zeros(2));
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
      CHECK(msg.find("[2]") != std::string::npos);
    }
  }

  TEST_CASE("matvec distributes over addition") {
    std::mt19937_64 gen(7);
    for (int trial = 0; trial < 50; ++trial) {
      const Tensor m = random_tensor(gen, Shape::matrix(4, 6), 3);
      const Tensor x = random_tensor(gen, Shape::vector(6), 3);
      const Tensor y = random_tensor(gen, Shape::vector(6), 3);
      const Tensor lhs = matvec(m, add(x, y));
      const Tensor rhs = add(matvec(m, x), matvec(m, y));
      for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs[i] - rhs[i]) < 1e-10);
    }
  }

  TEST_CASE("pointwise") {
    CHECK(pointwise(Pointwise::tanh, Tensor::vector({0, 0})) == Tensor::vector({0, 0}));
    CHECK(pointwise(Pointwise::sigmoid, Tensor::vector({0}))[0] == 0.5);
    const double expected = series_tanh(1.0);
    CHECK(expected == doctest::Approx(0.76159415595576489).epsilon(1e-15));
    CHECK(std::abs(pointwise(Pointwise::tanh, Tensor::vector({1}))[0] - expected) < 1e-15);
    // sigmoid stays finite far out in both tails
    const Tensor s = pointwise(Pointwise::sigmoid, Tensor::vector({-800, 800}));
    CHECK(s.all_finite());
    CHECK(s[0] == 0.0);
    CHECK(s[1] == 1.0);
  }

  TEST_CASE("softmax") {
    const Tensor u = softmax(Tensor::vector({0, 0, 0}));
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(u[i] - 1.0 / 3.0) < 1e-15);
    // exp(ln 2) = 2 and exp(0) = 1, normalised by 3.
    const Tensor p = softmax(Tensor::vector({std::log(2.0), 0}));
    CHECK(std::abs(p[0] - 2.0 / 3.0) < 1e-15);
    CHECK(std::abs(p[1] - 1.0 / 3.0) < 1e-15);
    CHECK(softmax(Tensor::vector({1000, 0}))[0] == 1.0);
  }

  TEST_CASE("softmax sums to one and is shift invariant (property)") {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> shift(-50, 50);
    for (int trial = 0; trial < 200; ++trial) {
      const Tensor x = random_tensor(gen, Shape::vector(1 + trial % 17), 20);
      const Tensor y = softmax(x);
      double sum = 0;
      for (double v : y.data()) {
        CHECK(v > 0);
        sum += v;
      }
      CHECK(std::abs(sum - 1) < 1e-12);
      Tensor shifted = x;
      const double c = shift(gen);
      for (auto& v : shifted.data()) v += c;
      const Tensor z = softmax(shifted);
      for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(z[i] - y[i]) < 1e-12);
    }
  }

  TEST_CASE("cross_entropy") {
    CHECK(cross_entropy(Tensor::vector({0, 1, 0}), 1) == 0.0);
    CHECK(cross_entropy(Tensor::vector({0.25, 0.25, 0.25, 0.25}), 2) == doctest::Approx(std::log(4.0)));
    // -log(0.25) = ln 4
    CHECK(std::abs(cross_entropy(Tensor::vector({0.5, 0.25, 0.25}), 1) - std::log(4.0)) < 1e-15);
    CHECK(cross_entropy(Tensor::vector({1, 0}), 1) == doctest::Approx(-std::log(1e-12)));
    CHECK_THROWS_AS(cross_entropy(Tensor::vector({1, 0}), 2), IndexError);
  }
}

TEST_SUITE("grad_tape") {
  TEST_CASE("backward of x^2 at 3") {
    const TapeFunction f = [](Tape& t, std::span<const Var> p) { return t.mul(p[0], p[0]); };
    Tape tape;
    const Tensor x = Tensor::vector({3});
    const Var v = tape.parameter(x);
    tape.backward(f(tape, std::vector<Var>{v}));
    CHECK(tape.grad(v)[0] == 6.0);
    const GradCheckResult r = grad_check(f, {x}, 1e-5);
    CHECK(r.max_relative_error < 1e-9);
  }

  TEST_CASE("cross_entropy after softmax on random logits") {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor logits = random_tensor(gen, Shape::vector(6), 2);
      const std::size_t target = static_cast<std::size_t>(trial % 6);
      const TapeFunction f = [target](Tape& t, std::span<const Var> p) {
        return t.cross_entropy(t.softmax(p[0]), target);
      };
      CHECK(grad_check(f, {logits}).max_relative_error < 1e-6);
    }
  }

  TEST_CASE("every op's backward matches finite differences (property)") {
    std::mt19937_64 gen(5);
    for (int trial = 0; trial < 25; ++trial) {
      const Tensor m = random_tensor(gen, Shape::matrix(5, 4));
      const Tensor x = random_tensor(gen, Shape::vector(4));
      const Tensor b = random_tensor(gen, Shape::vector(5));
      const Tensor e = random_tensor(gen, Shape::matrix(4, 3));
      const std::size_t col = static_cast<std::size_t>(trial % 3);
      const std::size_t target = static_cast<std::size_t>(trial % 5);
      const TapeFunction f = [&](Tape& t, std::span<const Var> p) {
        Var input = t.add(p[1], t.column(p[3], col));
        Var pre = t.affine(p[0], input, p[2]);
        Var gated = t.mul(t.sigmoid(pre), t.tanh(t.scale(pre, 0.7)));
        return t.cross_entropy(t.softmax(gated), target);
      };
      const GradCheckResult r = grad_check(f, {m, x, b, e});
      CHECK(r.max_relative_error < 1e-4);
    }
  }

  TEST_CASE("clamped cross_entropy passes no gradient") {
    Tape tape;
    const Tensor p = Tensor::vector({1, 0});
    const Var v = tape.parameter(p);
    tape.backward(tape.cross_entropy(v, 1));
    CHECK(tape.grad(v) == Tensor::vector({0, 0}));
  }

  TEST_CASE("backward requires a scalar") {
    Tape tape;
    const Tensor x = Tensor::vector({1, 2});
    CHECK_THROWS_AS(tape.backward(tape.parameter(x)), ShapeError);
  }

  TEST_CASE("grad_check reports the parameter behind a non-finite loss") {
    const TapeFunction f = [](Tape& t, std::span<const Var> p) {
      const Real v = t.value(p[1])[0];
      return v > 1.0 ? t.constant(Tensor::vector({std::nan("")})) : t.mul(p[0], p[0]);
    };
    const std::vector<std::string> names = {"weight", "bias"};
    try {
      grad_check(f, {Tensor::vector({1}), Tensor::vector({1})}, 1e-5, names);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("bias") != std::string::npos);
    }
  }
}
