#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>

#include "doctest.h"
#include "support/op_suite.hpp"
#include "xtalgen/autodiff/distribution.hpp"
#include "xtalgen/autodiff/grad_check.hpp"
#include "xtalgen/autodiff/layers.hpp"
#include "xtalgen/autodiff/optimizer.hpp"
#include "xtalgen/autodiff/tape.hpp"
#include "xtalgen/core/errors.hpp"
#include "xtalgen/core/random.hpp"

using namespace xtalgen;
using ad::Matrix;
using ad::Tape;
using ad::Var;

using testing::random_matrix;
using testing::reduce;

TEST_CASE("grad_check basics") {
  Rng rng(1);
  const Matrix x = random_matrix(3, 4, rng);
  auto sum = [](Tape& t, Var v) { return t.matmul(t.sum_rows(v), t.constant(Matrix::Ones(4, 1))); };
  // Finite differences of a linear map are exact up to rounding of x ± h.
  CHECK(ad::grad_check(sum, x) < 1e-9);
  const double square = ad::grad_check(
      [](Tape& t, Var v) { return t.matmul(t.sum_rows(t.mul(v, v)), t.constant(Matrix::Ones(4, 1))); }, x);
  CHECK(square < 1e-6);
}

TEST_CASE("every op passes grad_check on three shapes") {
  Rng rng(2);
  for (auto [r, c] : testing::kOpShapes) {
    CAPTURE(r);
    CAPTURE(c);
    const Matrix x = random_matrix(r, c, rng);
    for (const auto& op : testing::op_suite(r, c, rng)) {
      CAPTURE(op.name);
      CHECK(ad::grad_check(op.fn, x) < 1e-4);
    }
  }
}

TEST_CASE("op values") {
  Tape t;
  Matrix a(1, 2);
  a << 1.0, 0.0;
  CHECK(t.scalar(t.mse(t.constant(a), Matrix::Zero(1, 2))) == doctest::Approx(0.5));
  CHECK(t.scalar(t.mse(t.constant(a), a)) == 0.0);
  Matrix p(1, 2), q(1, 2);
  p << 1.0, 0.0;
  q << 0.5, 0.5;
  CHECK(t.scalar(t.kl_divergence(t.constant(p), q)) == doctest::Approx(std::log(2.0)));
  Matrix seg(3, 1);
  seg << 1, 2, 6;
  const Matrix m = t.value(t.segment_mean(t.constant(seg), {0, 0, 2}, 3));
  CHECK(m(0, 0) == doctest::Approx(1.5));
  CHECK(m(1, 0) == 0.0);
  CHECK(m(2, 0) == 6.0);
  CHECK_THROWS_AS(t.add(t.constant(Matrix::Zero(2, 2)), t.constant(Matrix::Zero(3, 2))), ShapeError);
  CHECK_THROWS_AS(t.matmul(t.constant(Matrix::Zero(2, 2)), t.constant(Matrix::Zero(3, 2))), ShapeError);
}

TEST_CASE("parameters accumulate gradients") {
  Rng rng(4);
  ad::Linear layer("l", 3, 2, rng);
  std::vector<ad::Parameter*> params;
  layer.collect(params);
  const Matrix x = random_matrix(5, 3, rng);
  const Matrix target = random_matrix(5, 2, rng);
  const double err = ad::grad_check_parameters(
      [&](Tape& t) { return t.mse(t.silu(layer(t, t.constant(x))), target); }, params);
  CHECK(err < 1e-6);

  // The const overload records no gradient.
  for (auto* p : params) p->zero_grad();
  Tape t;
  const ad::Linear& frozen = layer;
  t.backward(t.mse(frozen(t, t.constant(x)), target));
  for (auto* p : params) CHECK(p->grad.norm() == 0.0);
}

TEST_CASE("optimizer") {
  ad::Parameter w("w", Matrix::Constant(1, 1, 3.0));
  SUBCASE("plain gradient descent") {
    ad::OptimizerConfig c;
    c.plain_sgd = true;
    c.learning_rate = 0.1;
    ad::Optimizer opt({&w}, c);
    opt.zero_grad();
    Tape t;
    Var v = t.parameter(w);
    t.backward(t.mse(v, Matrix::Zero(1, 1)));  // d/dw w^2 = 6
    opt.step();
    CHECK(w.value(0, 0) == doctest::Approx(3.0 - 0.1 * 6.0));
  }
  SUBCASE("adam first step moves by the learning rate") {
    ad::OptimizerConfig c;
    c.learning_rate = 0.01;
    ad::Optimizer opt({&w}, c);
    opt.zero_grad();
    Tape t;
    t.backward(t.mse(t.parameter(w), Matrix::Zero(1, 1)));
    opt.step();
    CHECK(w.value(0, 0) == doctest::Approx(2.99).epsilon(1e-6));
  }
  SUBCASE("adam minimizes a quadratic") {
    ad::OptimizerConfig c;
    c.learning_rate = 0.05;
    ad::Optimizer opt({&w}, c);
    for (int i = 0; i < 2000; ++i) {
      opt.zero_grad();
      Tape t;
      t.backward(t.mse(t.parameter(w), Matrix::Constant(1, 1, -1.0)));
      opt.step();
    }
    CHECK(w.value(0, 0) == doctest::Approx(-1.0).epsilon(1e-3));
  }
}

TEST_CASE("temperature_softmax") {
  const TokenDistribution u = temperature_softmax(VectorX::Zero(3), 1.0);
  for (int i = 0; i < 3; ++i) CHECK(u[i] == doctest::Approx(1.0 / 3.0));
  VectorX z(3);
  z << 2, 1, 0;
  CHECK(temperature_softmax(z, 0.01)[0] > 0.999);
  CHECK_THROWS_AS(temperature_softmax(z, 0.0), ConfigError);
  CHECK_THROWS_AS(temperature_softmax(z, -1.0), ConfigError);

  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    VectorX logits(7);
    for (int i = 0; i < 7; ++i) logits(i) = 3.0 * rng.normal();
    Eigen::Index best;
    logits.maxCoeff(&best);
    for (double tau : {0.1, 0.7, 1.0, 2.0}) {
      const TokenDistribution d = temperature_softmax(logits, tau);
      CHECK(std::abs(d.probs().sum() - 1.0) < 1e-9);
      CHECK((d.probs().array() >= 0.0).all());
      CHECK(d.argmax() == best);
    }
  }
}

TEST_CASE("nucleus_filter") {
  VectorX p(3);
  p << 0.6, 0.3, 0.1;
  const TokenDistribution d(p);
  CHECK((nucleus_filter(d, 1.0).probs() - p).norm() == 0.0);
  const TokenDistribution top90 = nucleus_filter(d, 0.9);
  CHECK(top90[0] == doctest::Approx(2.0 / 3.0));
  CHECK(top90[1] == doctest::Approx(1.0 / 3.0));
  CHECK(top90[2] == 0.0);
  const TokenDistribution top50 = nucleus_filter(d, 0.5);
  CHECK(top50[0] == 1.0);
  CHECK(top50[1] == 0.0);
  CHECK_THROWS_AS(nucleus_filter(d, 0.0), ConfigError);
  CHECK_THROWS_AS(nucleus_filter(d, 1.5), ConfigError);

  VectorX tie(4);
  tie << 0.25, 0.25, 0.25, 0.25;
  const TokenDistribution t = nucleus_filter(TokenDistribution(tie), 0.5);
  CHECK(t[0] == doctest::Approx(0.5));
  CHECK(t[1] == doctest::Approx(0.5));
  CHECK(t[2] == 0.0);

  // A second pass keeps everything when the first kept exactly what P asks
  // for of the renormalized mass: (2/3, 1/3) already needs both tokens at 0.9.
  CHECK((nucleus_filter(top90, 0.9).probs() - top90.probs()).norm() == 0.0);
  CHECK((nucleus_filter(top50, 0.5).probs() - top50.probs()).norm() == 0.0);
  // Not idempotent in general: at P = 0.65 the first pass keeps (0.6, 0.3),
  // renormalized to (2/3, 1/3), and 2/3 alone already reaches 0.65.
  const TokenDistribution first = nucleus_filter(d, 0.65);
  CHECK(first[1] > 0.0);
  CHECK(nucleus_filter(first, 0.65)[1] == 0.0);

  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    VectorX logits(6);
    for (int i = 0; i < 6; ++i) logits(i) = rng.normal();
    const TokenDistribution base = temperature_softmax(logits, 1.0);
    const double top_p = 0.05 + 0.95 * rng.uniform();
    const TokenDistribution once = nucleus_filter(base, top_p);
    // Kept mass reaches P and dropping the smallest kept token falls below it.
    std::vector<double> kept;
    double mass = 0.0;
    for (int i = 0; i < 6; ++i) {
      if (once[i] > 0.0) {
        kept.push_back(base[i]);
        mass += base[i];
      }
    }
    CHECK(mass >= top_p - 1e-12);
    CHECK(mass - *std::min_element(kept.begin(), kept.end()) < top_p);
    for (int i = 0; i < 6; ++i) {
      if (once[i] == 0.0) CHECK(base[i] <= *std::min_element(kept.begin(), kept.end()));
    }
    CHECK(std::abs(once.probs().sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("target_kl_from_logits") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix logits(2, 4), target(2, 4);
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
      logits.data()[i] = 3.0 * rng.normal();
      target.data()[i] = rng.uniform() < 0.3 ? 0.0 : rng.uniform();
    }
    target.col(0).array() += 0.1;
    for (int r = 0; r < 2; ++r) target.row(r) /= target.row(r).sum();
    Tape t;
    const Matrix probs = t.value(t.softmax_rows(t.constant(logits)));
    double expected = 0.0;
    for (int r = 0; r < 2; ++r) expected += kl_divergence(target.row(r).transpose(), probs.row(r).transpose()) / 2;
    CHECK(t.scalar(t.target_kl_from_logits(t.constant(logits), target)) == doctest::Approx(expected).epsilon(1e-10));
  }
  Tape t;
  Matrix big(1, 3), onehot(1, 3);
  big << 1000.0, 0.0, -1000.0;
  onehot << 1.0, 0.0, 0.0;
  CHECK(t.scalar(t.target_kl_from_logits(t.constant(big), onehot)) == doctest::Approx(0.0));
  onehot << 0.0, 0.0, 1.0;
  CHECK(t.scalar(t.target_kl_from_logits(t.constant(big), onehot)) == doctest::Approx(2000.0));
  CHECK_THROWS_AS(t.target_kl_from_logits(t.constant(big), Matrix::Zero(2, 3)), ShapeError);
}

TEST_CASE("kl_divergence and mse") {
  VectorX p(2), q(2);
  p << 1.0, 0.0;
  q << 0.5, 0.5;
  CHECK(kl_divergence(p, p) == 0.0);
  CHECK(kl_divergence(p, q) == doctest::Approx(0.6931).epsilon(1e-4));
  Rng rng(10);
  for (int trial = 0; trial < 1000; ++trial) {
    VectorX a(5), b(5);
    for (int i = 0; i < 5; ++i) {
      a(i) = rng.uniform();
      b(i) = rng.uniform();
    }
    a /= a.sum();
    b /= b.sum();
    CHECK(kl_divergence(a, b) >= 0.0);
  }
  CHECK_THROWS_AS(kl_divergence(VectorX::Ones(2), VectorX::Ones(3)), ShapeError);
  Matrix pred(1, 2);
  pred << 1, 0;
  CHECK(mse(pred, Matrix::Zero(1, 2)) == doctest::Approx(0.5));
  CHECK_THROWS_AS(mse(pred, Matrix::Zero(2, 1)), ShapeError);
}

TEST_CASE("parameter serialization") {
  Rng rng(12);
  ad::Linear a("layer", 3, 4, rng), b("layer", 3, 4, rng);
  std::vector<ad::Parameter*> pa, pb;
  a.collect(pa);
  b.collect(pb);
  ad::parameters_from_json(ad::parameters_to_json(pa), pb);
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
  ad::Linear c("layer", 3, 5, rng);
  std::vector<ad::Parameter*> pc;
  c.collect(pc);
  CHECK_THROWS_AS(ad::parameters_from_json(ad::parameters_to_json(pa), pc), ParseError);
}
