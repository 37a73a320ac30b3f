#include <doctest.h>

#include <cmath>

#include "tubefield/jet.hpp"
#include "tubefield/rng.hpp"

using namespace tubefield;

namespace {
Jet2d var(double x) { return Jet2d::variable(x); }
}

TEST_SUITE_BEGIN("jet");

TEST_CASE("affine functions have zero second derivative") {
  for (double x : {-2.0, 0.0, 1.5}) {
    const Jet2d f = var(x) * 3.0 + Jet2d(2.0);
    CHECK(f.v == 3.0 * x + 2.0);
    CHECK(f.d1 == 3.0);
    CHECK(f.d2 == 0.0);
  }
}

TEST_CASE("product rule to second order") {
  // f(x) = x^2 sin x; f'' = 2 sin x + 4x cos x - x^2 sin x.
  const double x = 0.83;
  const Jet2d j = var(x);
  const Jet2d f = j * j * sin(j);
  CHECK(f.v == doctest::Approx(x * x * std::sin(x)).epsilon(1e-14));
  CHECK(f.d1 == doctest::Approx(2 * x * std::sin(x) + x * x * std::cos(x)).epsilon(1e-14));
  CHECK(f.d2 == doctest::Approx(2 * std::sin(x) + 4 * x * std::cos(x) - x * x * std::sin(x))
                    .epsilon(1e-14));
}

TEST_CASE("quotient rule to second order") {
  // f(x) = sin x / x.
  const double x = 1.37;
  const Jet2d f = sin(var(x)) / var(x);
  const double s = std::sin(x), c = std::cos(x);
  CHECK(f.v == doctest::Approx(s / x).epsilon(1e-14));
  CHECK(f.d1 == doctest::Approx((x * c - s) / (x * x)).epsilon(1e-13));
  CHECK(f.d2 == doctest::Approx((-x * x * s - 2 * x * c + 2 * s) / (x * x * x)).epsilon(1e-13));
}

TEST_CASE("chain rule through elementary functions") {
  const double x = 0.61;
  // h(x) = exp(sin x): h'' = (cos^2 x - sin x) e^{sin x}.
  const Jet2d h = exp(sin(var(x)));
  const double es = std::exp(std::sin(x));
  CHECK(h.v == doctest::Approx(es).epsilon(1e-14));
  CHECK(h.d1 == doctest::Approx(std::cos(x) * es).epsilon(1e-14));
  CHECK(h.d2 ==
        doctest::Approx((std::cos(x) * std::cos(x) - std::sin(x)) * es).epsilon(1e-13));

  // l(x) = log(1 + x^2): l'' = 2(1 - x^2)/(1 + x^2)^2.
  const Jet2d l = log(var(x) * var(x) + Jet2d(1.0));
  const double q = 1 + x * x;
  CHECK(l.v == doctest::Approx(std::log(q)).epsilon(1e-14));
  CHECK(l.d1 == doctest::Approx(2 * x / q).epsilon(1e-14));
  CHECK(l.d2 == doctest::Approx(2 * (1 - x * x) / (q * q)).epsilon(1e-13));

  // r(x) = sqrt(1 + x^2): r'' = 1/(1 + x^2)^{3/2}.
  const Jet2d r = sqrt(var(x) * var(x) + Jet2d(1.0));
  CHECK(r.v == doctest::Approx(std::sqrt(q)).epsilon(1e-14));
  CHECK(r.d1 == doctest::Approx(x / std::sqrt(q)).epsilon(1e-14));
  CHECK(r.d2 == doctest::Approx(1.0 / (q * std::sqrt(q))).epsilon(1e-13));
}

TEST_CASE("cosine second derivative sign") {
  const double x = 2.2;
  const Jet2d f = cos(var(x));
  CHECK(f.d1 == doctest::Approx(-std::sin(x)).epsilon(1e-14));
  CHECK(f.d2 == doctest::Approx(-std::cos(x)).epsilon(1e-14));
}

TEST_CASE("snake value and derivatives") {
  CHECK(snake(var(0.0), 1.0).v == 0.0);
  const double pi = 3.14159265358979323846;
  CHECK(snake(var(pi), 1.0).v == doctest::Approx(pi).epsilon(1e-15));

  Rng rng(321);
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform(0.5, 2.0);
    const double z = rng.uniform(-4.0, 4.0);
    const Jet2d s = snake(var(z), a);
    CHECK(s.v == doctest::Approx(z + std::pow(std::sin(a * z), 2) / a).epsilon(1e-14));
    CHECK(s.d1 == doctest::Approx(1.0 + std::sin(2 * a * z)).epsilon(1e-13));
    CHECK(s.d2 == doctest::Approx(2 * a * std::cos(2 * a * z)).epsilon(1e-13));
    // Independent finite-difference cross-check of the first derivative.
    const double h = 1e-5;
    const double fd = (snake(z + h, a) - snake(z - h, a)) / (2 * h);
    CHECK(s.d1 == doctest::Approx(fd).epsilon(1e-8));
  }
}

TEST_CASE("deep random composition matches finite differences") {
  Rng rng(99);
  auto f = [](Jet2d x) {
    const Jet2d inner = sin(x * 2.0) * 0.7 + x * cos(x);
    return snake(inner, 1.3) / (cos(x) + Jet2d(2.0));
  };
  auto fv = [&](double x) { return f(Jet2d(x)).v; };
  for (int i = 0; i < 50; ++i) {
    const double x = rng.uniform(-2.0, 2.0);
    const Jet2d j = f(var(x));
    const double h = 1e-5;
    const double d1_fd = (fv(x + h) - fv(x - h)) / (2 * h);
    const double d2_fd = (fv(x + h) - 2 * fv(x) + fv(x - h)) / (h * h);
    CHECK(j.d1 == doctest::Approx(d1_fd).epsilon(1e-7));
    CHECK(j.d2 == doctest::Approx(d2_fd).epsilon(1e-4));
  }
}

TEST_SUITE_END();
