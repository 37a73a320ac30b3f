#include <doctest.h>

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "tubefield/optimize.hpp"
#include "tubefield/rng.hpp"

using namespace tubefield;

namespace {

// f(x) = 0.5 x^T A x - b^T x with a fixed SPD A; minimum at A x = b.
struct Quadratic5 {
  Mat A;
  Vec b;
  Quadratic5() {
    Mat M(5, 5);
    M << 2, 1, 0, 0, 0,  //
        0, 3, 1, 0, 0,   //
        0, 0, 4, 1, 0,   //
        0, 0, 0, 5, 1,   //
        0, 0, 0, 0, 6;
    A = M.transpose() * M + Mat::Identity(5, 5);
    b = Vec::LinSpaced(5, 1.0, 5.0);
  }
  double operator()(const Vec& x, Vec& g) const {
    g = A * x - b;
    return 0.5 * x.dot(A * x) - b.dot(x);
  }
  Vec minimum() const { return A.ldlt().solve(b); }
};

double rosenbrock(const Vec& x, Vec& g) {
  const double a = 1.0 - x[0];
  const double r = x[1] - x[0] * x[0];
  g[0] = -2.0 * a - 400.0 * x[0] * r;
  g[1] = 200.0 * r;
  return a * a + 100.0 * r * r;
}

}  // namespace

TEST_SUITE_BEGIN("optimize");

TEST_CASE("learning rate decay schedule") {
  CHECK(lr_decay(1e-2, 0) == 1e-2);
  CHECK(lr_decay(1e-2, 1000) == doctest::Approx(1.25e-3).epsilon(1e-15));
  double prev = lr_decay(3e-4, 0);
  for (int e = 1; e < 200; ++e) {
    const double cur = lr_decay(3e-4, e);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("adam reproduces the scripted scalar trajectory") {
  // f(w) = w^2 from w = 1, lr = 0.1, default moments.
  const double expected[10] = {
      0.9000000005,        0.8004122286917928, 0.7015862729460303,
      0.603939060573746,   0.507963659264342,  0.4142364559936619,
      0.3234207049391021,  0.23626372452104188, 0.1535845600703636,
      0.07624915560691221};
  AdamConfig cfg;
  AdamState state(1);
  Vec w = Vec::Constant(1, 1.0);
  for (int i = 0; i < 10; ++i) {
    const Vec grad = 2.0 * w;
    state.update(w, grad, cfg, 0.1);
    CHECK(std::abs(w[0] - expected[i]) < 1e-12);
  }
  CHECK(state.step == 10);
}

TEST_CASE("adam ignores a zero gradient from a fresh state") {
  AdamState state(4);
  Vec theta = Vec::LinSpaced(4, -1.0, 2.0);
  const Vec before = theta;
  state.update(theta, Vec::Zero(4), AdamConfig{}, 1e-2);
  CHECK(theta == before);
}

TEST_CASE("adam moments stay finite under bounded gradients") {
  AdamConfig cfg;
  AdamState state(3);
  Vec theta = Vec::Zero(3);
  Rng rng(77);
  for (int e = 0; e < 2000; ++e) {
    Vec g(3);
    for (int i = 0; i < 3; ++i) g[i] = rng.uniform(-100.0, 100.0);
    state.update(theta, g, cfg, lr_decay(cfg.lr_init, e, cfg.decay));
  }
  CHECK(theta.allFinite());
  CHECK(state.m.allFinite());
  CHECK(state.v.allFinite());
  CHECK(state.v.minCoeff() >= 0.0);
}

TEST_CASE("adam rejects mismatched dimensions") {
  AdamState state(2);
  Vec theta = Vec::Zero(3);
  CHECK_THROWS_AS(state.update(theta, Vec::Zero(3), AdamConfig{}, 1e-2),
                  std::invalid_argument);
}

TEST_CASE("lbfgs solves a convex quadratic to high accuracy") {
  const Quadratic5 prob;
  LbfgsSolver solver;
  Vec x = Vec::Zero(5);
  LbfgsEpochResult res;
  int epochs = 0;
  for (; epochs < 10; ++epochs) {
    res = solver.run_epoch(std::cref(prob), x);
    if (res.grad_norm < 1e-10) break;
  }
  CHECK(res.grad_norm < 1e-10);
  CHECK(epochs < 10);
  CHECK((x - prob.minimum()).norm() < 1e-9);
  CHECK(static_cast<int>(solver.history_s().size()) <= solver.config().history);
}

TEST_CASE("lbfgs leaves an exact minimum untouched") {
  const Quadratic5 prob;
  LbfgsSolver solver;
  Vec x = prob.minimum();
  const Vec before = x;
  const LbfgsEpochResult res = solver.run_epoch(std::cref(prob), x);
  CHECK(res.converged);
  CHECK(res.iterations == 0);
  CHECK((x - before).norm() < 1e-12);
}

TEST_CASE("lbfgs objective is nonincreasing across epochs") {
  LbfgsSolver solver;
  Vec x(2);
  x << -1.2, 1.0;
  double prev_f = std::numeric_limits<double>::infinity();
  for (int e = 0; e < 15; ++e) {
    const LbfgsEpochResult res = solver.run_epoch(rosenbrock, x);
    CHECK(res.f <= prev_f);
    prev_f = res.f;
    if (res.converged) break;
  }
  CHECK((x - Vec::Ones(2)).norm() < 1e-6);
  CHECK(static_cast<int>(solver.history_s().size()) <= 10);
}

TEST_CASE("restored history continues the run bitwise") {
  const Quadratic5 prob;
  LbfgsConfig short_cfg;
  short_cfg.max_inner = 3;
  LbfgsSolver first(short_cfg), second(short_cfg);

  Vec xa = Vec::Constant(5, 2.0);
  first.run_epoch(std::cref(prob), xa);

  Vec xb = xa;
  second.set_history(first.history_s(), first.history_y());

  first.run_epoch(std::cref(prob), xa);
  second.run_epoch(std::cref(prob), xb);
  CHECK(xa == xb);
}

TEST_CASE("inconsistent gradients trip the line-search guard") {
  // The closure reports the negated gradient of f(x) = x^2, so every trial
  // point along the "descent" direction increases f and no step is
  // acceptable. State must survive the failure.
  auto lying = [](const Vec& x, Vec& g) {
    g = -2.0 * x;
    return x.squaredNorm();
  };
  LbfgsSolver solver;
  Vec x = Vec::Constant(1, 1.0);
  const LbfgsEpochResult res = solver.run_epoch(lying, x);
  CHECK(res.line_search_failed);
  CHECK(res.iterations == 0);
  CHECK(x[0] == 1.0);
}

TEST_SUITE_END();
