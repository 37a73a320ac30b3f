#include <doctest.h>

#include <cmath>

#include "tubefield/physics.hpp"
#include "tubefield/rng.hpp"

using namespace tubefield;

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kF = 261.6;

AirProperties test_air() { return AirProperties::standard(2.0 * kPi * kF); }

SourceWaveform test_source() {
  SourceWaveform src;
  src.U0 = 5e-4;
  src.T = 1.0 / kF;
  src.tp_frac = 0.40;
  src.tn_frac = 0.16;
  src.smooth_width = src.T / 200.0;
  return src;
}
}  // namespace

TEST_SUITE_BEGIN("physics");

TEST_CASE("standard air constants") {
  const AirProperties air = test_air();
  CHECK(air.rho == 1.2);
  CHECK(air.c == 343.0);
  CHECK(air.mu == 1.81e-5);
  CHECK(air.eta == 1.402);
  CHECK(air.lambda_th == 0.0262);
  CHECK(air.cp == 1005.0);
  CHECK(air.K == doctest::Approx(141178.8).epsilon(1e-14));
  CHECK_NOTHROW(air.validate());
}

TEST_CASE("air validation rejects inconsistent bulk modulus") {
  AirProperties air = test_air();
  air.K *= 1.001;
  CHECK_THROWS(air.validate());
  air = test_air();
  air.rho = -1.0;
  CHECK_THROWS(air.validate());
}

TEST_CASE("loss coefficients match the direct formula evaluation") {
  // Frozen from an independent script: standard air at omega_c = 2*pi*261.6
  // and a uniform r = 0.02 m tube.
  const AirProperties air = test_air();
  const TubeGeometry geom = TubeGeometry::cylinder(0.02, 1.0);
  const auto [R, G] = loss_coefficients(air, geom, 0.5);
  CHECK(R == doctest::Approx(10631.972695664717).epsilon(1e-13));
  CHECK(G == doctest::Approx(4.781203501694976e-8).epsilon(1e-13));
}

TEST_CASE("loss coefficients scale as the formulas demand") {
  const AirProperties air = test_air();
  const TubeGeometry g1 = TubeGeometry::cylinder(0.02, 1.0);
  const TubeGeometry g2 = TubeGeometry::cylinder(0.04, 1.0);
  const auto [R1, G1] = loss_coefficients(air, g1, 0.0);
  const auto [R2, G2] = loss_coefficients(air, g2, 0.0);
  // R ~ S/A^2 ~ r^-3, G ~ S ~ r.
  CHECK(R2 == doctest::Approx(R1 / 8.0).epsilon(1e-12));
  CHECK(G2 == doctest::Approx(2.0 * G1).epsilon(1e-12));

  AirProperties air4 = AirProperties::standard(4.0 * 2.0 * kPi * kF);
  const auto [R4, G4] = loss_coefficients(air4, g1, 0.0);
  // Both coefficients grow as sqrt(omega_c).
  CHECK(R4 == doctest::Approx(2.0 * R1).epsilon(1e-12));
  CHECK(G4 == doctest::Approx(2.0 * G1).epsilon(1e-12));
}

TEST_CASE("loss coefficients reject out-of-range positions") {
  const AirProperties air = test_air();
  const TubeGeometry geom = TubeGeometry::cylinder(0.02, 1.0);
  CHECK_THROWS_AS(loss_coefficients(air, geom, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(loss_coefficients(air, geom, 1.1), std::invalid_argument);
}

TEST_CASE("radiation map alpha=1/delta, beta=beta_c/delta^2") {
  const RadiationCoefficients rc = radiation_from_taylor(0.8236, 0.5);
  // Infinite flanged pipe; frozen from direct evaluation.
  CHECK(rc.alpha == doctest::Approx(1.2141816415735793).epsilon(1e-15));
  CHECK(rc.beta == doctest::Approx(0.737118529367156).epsilon(1e-15));
  CHECK(rc.delta == 0.8236);
  CHECK(rc.beta_c == 0.5);

  // Identity case and a second closed form.
  const RadiationCoefficients id = radiation_from_taylor(1.0, 1.0);
  CHECK(id.alpha == 1.0);
  CHECK(id.beta == 1.0);
  const RadiationCoefficients half = radiation_from_taylor(0.5, 0.25);
  CHECK(half.alpha == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(half.beta == doctest::Approx(1.0).epsilon(1e-15));

  CHECK_THROWS_AS(radiation_from_taylor(0.0, 0.5), std::domain_error);
  CHECK_THROWS_AS(radiation_from_taylor(-1.0, 0.5), std::domain_error);
}

TEST_CASE("cylinder geometry") {
  const TubeGeometry geom = TubeGeometry::cylinder(0.02, 1.0);
  CHECK(geom.length() == 1.0);
  CHECK(geom.radius(0.3) == 0.02);
  CHECK(geom.area(0.7) == doctest::Approx(kPi * 4e-4).epsilon(1e-15));
  CHECK(geom.circumference(0.1) == doctest::Approx(2.0 * kPi * 0.02).epsilon(1e-15));
  CHECK(geom.area_x(0.5) == 0.0);
  CHECK(geom.area_x_over_area(0.5) == 0.0);
}

TEST_CASE("cone geometry has the analytic area derivative") {
  const double r0 = 0.01, r1 = 0.03, L = 2.0;
  const TubeGeometry geom = TubeGeometry::cone(r0, r1, L);
  const double x = 0.8;
  const double r = r0 + (r1 - r0) * x / L;
  const double rx = (r1 - r0) / L;
  CHECK(geom.radius(x) == doctest::Approx(r).epsilon(1e-15));
  CHECK(geom.radius_x(x) == doctest::Approx(rx).epsilon(1e-15));
  CHECK(geom.area_x(x) == doctest::Approx(2.0 * kPi * r * rx).epsilon(1e-14));
  CHECK(geom.area_x_over_area(x) == doctest::Approx(2.0 * rx / r).epsilon(1e-14));
}

TEST_CASE("sampled profile reproduces a cone to second order") {
  const double r0 = 0.015, r1 = 0.025, L = 1.0;
  const int n = 101;
  Vec radii(n);
  for (int i = 0; i < n; ++i) {
    const double x = L * i / (n - 1.0);
    radii[i] = r0 + (r1 - r0) * x / L;
  }
  const TubeGeometry geom = TubeGeometry::from_samples(radii, L);
  // Linear profile: central and one-sided stencils are exact.
  for (double x : {0.0, 0.25, 0.5, 0.99, 1.0}) {
    const double r = r0 + (r1 - r0) * x / L;
    CHECK(geom.radius(x) == doctest::Approx(r).epsilon(1e-12));
    CHECK(geom.radius_x(x) == doctest::Approx((r1 - r0) / L).epsilon(1e-10));
  }
}

TEST_CASE("geometry rejects non-positive radii") {
  CHECK_THROWS(TubeGeometry::cylinder(0.0, 1.0));
  CHECK_THROWS(TubeGeometry::cone(0.01, -0.01, 1.0));
  Vec radii = Vec::Constant(5, 0.02);
  radii[3] = 0.0;
  CHECK_THROWS(TubeGeometry::from_samples(radii, 1.0));
}

TEST_CASE("raw Rosenberg pulse shape") {
  const SourceWaveform src = test_source();
  const double Tp = src.tp_frac * src.T;
  const double Tn = src.tn_frac * src.T;
  CHECK(rosenberg_flow_raw(0.0, src) == 0.0);
  CHECK(rosenberg_flow_raw(Tp, src) == doctest::Approx(src.U0).epsilon(1e-15));
  CHECK(rosenberg_flow_raw(Tp / 2.0, src) ==
        doctest::Approx(0.5 * src.U0).epsilon(1e-14));
  CHECK(rosenberg_flow_raw(Tp + Tn, src) ==
        doctest::Approx(0.0).scale(src.U0).epsilon(1e-14));
  CHECK(rosenberg_flow_raw(0.9 * src.T, src) == 0.0);
  // Periodic extension of the raw pulse.
  CHECK(rosenberg_flow_raw(Tp + 5.0 * src.T, src) ==
        doctest::Approx(src.U0).epsilon(1e-12));
  CHECK(rosenberg_flow_raw(Tp - 3.0 * src.T, src) ==
        doctest::Approx(src.U0).epsilon(1e-12));
}

TEST_CASE("smoothed pulse is periodic and close to the raw pulse") {
  const SourceWaveform src = test_source();
  const SmoothedRosenberg u(src);
  Rng rng(5150);
  for (int i = 0; i < 1000; ++i) {
    const double t = rng.uniform(0.0, src.T);
    CHECK(std::abs(u(t) - u(t + src.T)) < 1e-12 * src.U0);
  }
  CHECK(std::abs(u(0.0) - u(src.T)) < 1e-12 * src.U0);
  // Smoothing only rounds the corners: mid-rise value barely moves.
  const double Tp = src.tp_frac * src.T;
  CHECK(u(Tp / 2.0) == doctest::Approx(0.5 * src.U0).epsilon(0.01));
  CHECK(u(Tp) == doctest::Approx(src.U0).epsilon(0.01));
  CHECK(std::abs(u(0.9 * src.T)) < 1e-3 * src.U0);
}

TEST_CASE("smoothing preserves the pulse mean") {
  const SourceWaveform src = test_source();
  const SmoothedRosenberg u(src);
  const int n = 20000;
  double raw = 0.0, smooth = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = src.T * i / n;
    raw += rosenberg_flow_raw(t, src);
    smooth += u(t);
  }
  CHECK(smooth / n == doctest::Approx(raw / n).epsilon(1e-4));
}

TEST_CASE("smoothed pulse is C1: difference quotients stay bounded") {
  const SourceWaveform src = test_source();
  const SmoothedRosenberg u(src);
  // Sweep the corner at Tp+Tn where the raw pulse has a C0 kink; the
  // smoothed derivative must vary continuously there.
  const double t0 = (src.tp_frac + src.tn_frac) * src.T;
  const double h = src.T * 1e-6;
  double prev = (u(t0 - 40.0 * h + h) - u(t0 - 40.0 * h - h)) / (2.0 * h);
  double max_jump = 0.0;
  for (int i = -39; i <= 40; ++i) {
    const double t = t0 + i * h;
    const double d = (u(t + h) - u(t - h)) / (2.0 * h);
    max_jump = std::max(max_jump, std::abs(d - prev));
    prev = d;
  }
  // Derivative scale is U0/T; steps of size h must change it only a little.
  CHECK(max_jump < 0.02 * src.U0 / src.T);
}

TEST_CASE("waveform validation") {
  SourceWaveform src = test_source();
  CHECK_NOTHROW(src.validate());
  src.tp_frac = 0.9;
  src.tn_frac = 0.2;
  CHECK_THROWS(src.validate());
  src = test_source();
  src.U0 = -1.0;
  CHECK_THROWS(src.validate());
  src = test_source();
  src.T = 0.0;
  CHECK_THROWS(src.validate());
}

TEST_CASE("pressure and volume velocity maps") {
  const double R = 10631.972695664717, A = kPi * 4e-4, rho = 1.2;
  CHECK(pressure_from_potential(2.0, 3.0, R, A, rho) ==
        doctest::Approx(R * A * 2.0 + rho * 3.0).epsilon(1e-15));
  CHECK(volume_velocity_from_potential(3.0, A) ==
        doctest::Approx(-A * 3.0).epsilon(1e-15));
}

TEST_SUITE_END();
