#include <cmath>
#include <limits>

#include "doctest.h"
#include "tubefield/fdm.hpp"
#include "tubefield/physics.hpp"

using namespace tubefield;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kF0 = 261.6;
constexpr double kT = 1.0 / kF0;

struct Scene {
  TubeGeometry geom;
  AirProperties air;
  SourceWaveform src;
  RadiationCoefficients rad;

  Scene()
      : geom(TubeGeometry::cylinder(0.02, 1.0)),
        air(AirProperties::standard(2.0 * kPi * kF0)),
        src{5e-4, kT, 0.40, 0.16, kT / 200.0},
        rad(radiation_from_taylor(0.8236, 0.5)) {}
};

FdmConfig small_config(Eigen::Index nx) {
  FdmConfig cfg;
  cfg.nx = nx;
  return cfg;
}

const FdmSolution& default_sol() {
  static const FdmSolution sol = [] {
    const Scene sc;
    return run_to_steady_state(sc.geom, sc.air, sc.src, sc.rad, FdmConfig{});
  }();
  return sol;
}

bool bitwise_equal(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      if (a(i, j) != b(i, j) || std::signbit(a(i, j)) != std::signbit(b(i, j)))
        return false;
  return true;
}

bool bitwise_equal(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (a[i] != b[i] || std::signbit(a[i]) != std::signbit(b[i])) return false;
  return true;
}

double rel_l2(const Vec& got, const Vec& want) {
  return (got - want).norm() / want.norm();
}

}  // namespace

TEST_SUITE("fdm") {

TEST_CASE("grid construction") {
  const FdmGrid g = FdmGrid::make(1.0, kT, 343.0, 101, 0.9);
  CHECK(g.nx == 101);
  CHECK(g.dx == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(g.steps_per_period == 146);
  CHECK(std::abs(static_cast<double>(g.steps_per_period) * g.dt - kT) <=
        1e-12 * kT);
  CHECK(g.courant <= 0.9 * (1.0 + 1e-12));
  CHECK(g.courant > 0.85);

  CHECK_THROWS_AS(FdmGrid::make(0.0, kT, 343.0, 101, 0.9),
                  std::invalid_argument);
  CHECK_THROWS_AS(FdmGrid::make(1.0, kT, 343.0, 2, 0.9),
                  std::invalid_argument);
  CHECK_THROWS_AS(FdmGrid::make(1.0, kT, 343.0, 101, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(FdmGrid::make(1.0, kT, 343.0, 101, 1.5),
                  std::invalid_argument);
}

TEST_CASE("coefficient tables") {
  const Scene sc;
  const Vec x = linspace(0.0, 1.0, 9);
  const FdmCoefficients eq = FdmCoefficients::make(sc.geom, sc.air, x);
  const FdmCoefficients lit =
      FdmCoefficients::make(sc.geom, sc.air, x, PdeForm::LiteralEq11);
  CHECK(eq.k_over_rho == doctest::Approx(sc.air.K / sc.air.rho).epsilon(1e-15));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const auto [R, G] = loss_coefficients(sc.air, sc.geom, x[i]);
    const double A = sc.geom.area(x[i]);
    CHECK(eq.ax_over_a[i] == 0.0);
    CHECK(eq.gr[i] == doctest::Approx(G * R).epsilon(1e-15));
    CHECK(eq.coef_t[i] ==
          doctest::Approx(G * sc.air.rho / A + R * A / sc.air.K)
              .epsilon(1e-15));
    CHECK(eq.coef_t[i] - lit.coef_t[i] ==
          doctest::Approx(2.0 * R * A / sc.air.K).epsilon(1e-13));
  }
}

TEST_CASE("interior step keeps the zero field") {
  const Scene sc;
  const FdmGrid g = FdmGrid::make(1.0, kT, sc.air.c, 33, 0.9);
  const Vec x = linspace(0.0, 1.0, 33);
  const FdmCoefficients coef = FdmCoefficients::make(sc.geom, sc.air, x);
  const Vec zero = Vec::Zero(33);
  Vec next = Vec::Zero(33);
  fdm_interior_step(zero, zero, g, coef, next);
  CHECK(bitwise_equal(next, zero));
}

TEST_CASE("interior step names non-finite nodes") {
  const Scene sc;
  const FdmGrid g = FdmGrid::make(1.0, kT, sc.air.c, 33, 0.9);
  const Vec x = linspace(0.0, 1.0, 33);
  const FdmCoefficients coef = FdmCoefficients::make(sc.geom, sc.air, x);
  Vec curr = Vec::Zero(33);
  curr[5] = std::numeric_limits<double>::infinity();
  Vec next = Vec::Zero(33);
  CHECK_THROWS_WITH_AS(
      fdm_interior_step(Vec::Zero(33), curr, g, coef, next),
      doctest::Contains("non-finite value at node"), SolverError);
}

TEST_CASE("courant one advances a pulse one cell per step") {
  // power-of-two grid so the magic-step identity holds bitwise
  const Eigen::Index nx = 41;
  FdmGrid g;
  g.nx = nx;
  g.dx = 0.015625;         // 2^-6
  g.dt = 6.103515625e-05;  // 2^-14
  g.courant = 1.0;
  g.steps_per_period = 0;
  FdmCoefficients coef;
  coef.ax_over_a = Vec::Zero(nx);
  coef.gr = Vec::Zero(nx);
  coef.coef_t = Vec::Zero(nx);
  coef.k_over_rho = 65536.0;  // c = 256 => c dt / dx = 1

  auto pulse_at = [&](Eigen::Index c0) {
    Vec v = Vec::Zero(nx);
    v[c0 - 2] = 0.25;
    v[c0 - 1] = 0.5;
    v[c0] = 1.0;
    v[c0 + 1] = 0.5;
    v[c0 + 2] = 0.25;
    return v;
  };
  Vec prev = pulse_at(10), curr = pulse_at(11);
  Vec next = Vec::Zero(nx);
  for (Eigen::Index step = 0; step < 3; ++step) {
    fdm_interior_step(prev, curr, g, coef, next);
    next[0] = 0.0;
    next[nx - 1] = 0.0;
    CHECK(bitwise_equal(next, pulse_at(12 + step)));
    prev = curr;
    curr = next;
  }
}

TEST_CASE("manufactured solution converges at second order") {
  const TubeGeometry cone = TubeGeometry::cone(0.02, 0.03, 1.0);
  const AirProperties air = AirProperties::standard(2.0 * kPi * kF0);
  const double e1 = fdm_manufactured_error(cone, air, kT, 51, 0.9);
  const double e2 = fdm_manufactured_error(cone, air, kT, 101, 0.9);
  const double e3 = fdm_manufactured_error(cone, air, kT, 201, 0.9);
  CHECK(e1 > e2);
  CHECK(e2 > e3);
  const double order12 = std::log2(e1 / e2);
  const double order23 = std::log2(e2 / e3);
  CHECK(order12 >= 1.8);
  CHECK(order12 <= 2.2);
  CHECK(order23 >= 1.8);
  CHECK(order23 <= 2.2);
}

TEST_CASE("source boundary solve") {
  SUBCASE("constant field with zero flow is preserved") {
    Vec next = Vec::Constant(8, 3.25);
    CHECK(apply_source_bc(next, 0.0, 1e-3, 0.01) == 3.25);
  }
  SUBCASE("even field about x=0 with zero flow") {
    const double a = 0.7, b = 40.0, dx = 0.01;
    Vec next(8);
    for (Eigen::Index i = 0; i < 8; ++i) {
      const double x = static_cast<double>(i) * dx;
      next[i] = a + b * x * x;
    }
    CHECK(apply_source_bc(next, 0.0, 1e-3, dx) ==
          doctest::Approx(a).epsilon(1e-13));
  }
  SUBCASE("one-sided derivative matches the imposed flow") {
    const double dx = 0.01, area0 = kPi * 4e-4, u = 3.7e-4;
    Vec next(6);
    next << 0.0, 0.013, -0.021, 0.008, 0.002, -0.001;
    next[0] = apply_source_bc(next, u, area0, dx);
    const double phix =
        (-3.0 * next[0] + 4.0 * next[1] - next[2]) / (2.0 * dx);
    CHECK(-area0 * phix == doctest::Approx(u).epsilon(1e-13));
  }
  SUBCASE("argument validation") {
    CHECK_THROWS_AS(apply_source_bc(Vec::Zero(2), 0.0, 1e-3, 0.01),
                    std::invalid_argument);
    CHECK_THROWS_AS(apply_source_bc(Vec::Zero(8), 0.0, 0.0, 0.01),
                    std::invalid_argument);
  }
}

TEST_CASE("radiation boundary solve") {
  const Scene sc;
  const Eigen::Index nx = 12;
  RadiationBcParams bc;
  bc.alpha = sc.rad.alpha;
  bc.beta = sc.rad.beta;
  bc.ra_l = loss_coefficients(sc.air, sc.geom, 1.0).first * sc.geom.area(1.0);
  bc.rho = sc.air.rho;
  bc.c = sc.air.c;
  bc.dx = 0.01;
  bc.dt = 2.6e-5;

  auto smooth = [&](double shift) {
    Vec v(nx);
    for (Eigen::Index i = 0; i < nx; ++i)
      v[i] = 1e-4 * std::sin(0.4 * static_cast<double>(i) + shift);
    return v;
  };
  const Vec prev2 = smooth(0.0), prev = smooth(0.05), curr = smooth(0.10);
  Vec next = smooth(0.15);

  SUBCASE("solved node satisfies the discrete condition") {
    const auto [xb, iters] = apply_radiation_bc(bc, prev2, prev, curr, next);
    CHECK(iters >= 1);
    CHECK(iters <= 10);
    next[nx - 1] = xb;
    const double inv_2dx = 0.5 / bc.dx, inv_2dt = 0.5 / bc.dt;
    const double inv_dt2 = 1.0 / (bc.dt * bc.dt);
    const double phix_next =
        (3.0 * next[nx - 1] - 4.0 * next[nx - 2] + next[nx - 3]) * inv_2dx;
    const double phix_prev =
        (3.0 * prev[nx - 1] - 4.0 * prev[nx - 2] + prev[nx - 3]) * inv_2dx;
    const double phi_xt = (phix_next - phix_prev) * inv_2dt;
    const double phi_t = (next[nx - 1] - prev[nx - 1]) * inv_2dt;
    const double phi_tt =
        (next[nx - 1] - 2.0 * curr[nx - 1] + prev[nx - 1]) * inv_dt2;
    const double p = bc.ra_l * curr[nx - 1] + bc.rho * phi_t;
    const double p_t = bc.ra_l * phi_t + bc.rho * phi_tt;
    const double res =
        -bc.rho * bc.c * phi_xt - bc.alpha * p - bc.beta * p_t;
    const double scale = std::abs(bc.rho * bc.c * phi_xt) +
                         std::abs(bc.alpha * p) + std::abs(bc.beta * p_t);
    CHECK(std::abs(res) <= 1e-8 * scale);
  }
  SUBCASE("alpha = beta = 0 freezes the boundary flow") {
    bc.alpha = 0.0;
    bc.beta = 0.0;
    const auto [xb, iters] = apply_radiation_bc(bc, prev2, prev, curr, next);
    CHECK(iters <= 10);
    const double phix_next =
        (3.0 * xb - 4.0 * next[nx - 2] + next[nx - 3]) * (0.5 / bc.dx);
    const double phix_prev =
        (3.0 * prev[nx - 1] - 4.0 * prev[nx - 2] + prev[nx - 3]) *
        (0.5 / bc.dx);
    CHECK(phix_next == doctest::Approx(phix_prev).epsilon(1e-10));
  }
  SUBCASE("iteration cap raises with the residual in the message") {
    bc.max_iters = 0;
    CHECK_THROWS_WITH_AS(apply_radiation_bc(bc, prev2, prev, curr, next),
                         doctest::Contains("residual"), SolverError);
  }
  SUBCASE("degenerate equation raises") {
    bc.alpha = 0.0;
    bc.beta = 0.0;
    bc.rho = 0.0;
    CHECK_THROWS_AS(apply_radiation_bc(bc, prev2, prev, curr, next),
                    SolverError);
  }
}

TEST_CASE("zero source settles immediately to the zero field") {
  Scene sc;
  sc.src.U0 = 0.0;
  const FdmSolution sol =
      run_to_steady_state(sc.geom, sc.air, sc.src, sc.rad, small_config(101));
  CHECK(sol.periods_run == 1);
  CHECK(sol.steady_residual == 0.0);
  CHECK(sol.p_l2_drift == 0.0);
  CHECK(sol.max_abs_phi == 0.0);
  CHECK(sol.phi.cwiseAbs().maxCoeff() == 0.0);
  CHECK(sol.p.cwiseAbs().maxCoeff() == 0.0);
  CHECK(sol.u.cwiseAbs().maxCoeff() == 0.0);

  const Vec times = linspace_half_open(0.0, kT, 7);
  const BoundarySignals sig = boundary_signals(sol, times);
  CHECK(sig.p_t.cwiseAbs().maxCoeff() == 0.0);
  CHECK(sig.u_t.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("default run reaches a periodic steady state") {
  const FdmSolution& sol = default_sol();
  const Eigen::Index spp = sol.grid.steps_per_period;
  const Eigen::Index nx = sol.grid.nx;

  CHECK(nx == 1001);
  CHECK(sol.t.size() == spp + 3);
  CHECK(sol.phi.rows() == spp + 3);
  CHECK(sol.phi.cols() == nx);
  CHECK(sol.t[1] == 0.0);
  CHECK(sol.t[spp + 1] == doctest::Approx(kT).epsilon(1e-12));
  CHECK(sol.periods_run >= 2);
  CHECK(sol.max_abs_phi > 0.0);
  CHECK(sol.steady_residual <= 1e-8 * sol.max_abs_phi);
  CHECK(sol.p_l2_drift < 1e-6);
  CHECK(sol.max_corrector_iters >= 1);
  CHECK(sol.max_corrector_iters <= 10);
  CHECK(sol.run_max_abs_phi <= 1e3 * sol.first_period_max);

  // the recorded period differs from the compared one by at most the
  // steady tolerance scale
  const double margin =
      (sol.phi.row(1) - sol.phi.row(spp + 1)).cwiseAbs().maxCoeff();
  CHECK(margin <= 1e-7 * sol.max_abs_phi);
}

TEST_CASE("default run satisfies the radiation condition") {
  const Scene sc;
  const FdmSolution& sol = default_sol();
  const Eigen::Index spp = sol.grid.steps_per_period;
  const double scale = sc.air.rho * sc.air.c / sc.geom.area(1.0);
  const Vec lhs = scale * sol.u_t_L.segment(1, spp + 1);
  const Vec rhs = sc.rad.alpha * sol.p_L.segment(1, spp + 1) +
                  sc.rad.beta * sol.p_t_L.segment(1, spp + 1);
  CHECK(rel_l2(rhs, lhs) < 1e-6);
}

TEST_CASE("default run reproduces the source waveform") {
  const Scene sc;
  const FdmSolution& sol = default_sol();
  const Eigen::Index spp = sol.grid.steps_per_period;
  const SmoothedRosenberg u_src(sc.src);
  Vec want(spp + 1);
  for (Eigen::Index r = 0; r <= spp; ++r) want[r] = u_src(sol.t[r + 1]);
  const Vec got = sol.u.col(0).segment(1, spp + 1);
  CHECK(rel_l2(got, want) <= 0.005);
}

TEST_CASE("runs are deterministic") {
  const Scene sc;
  const FdmConfig cfg = small_config(301);
  const FdmSolution a = run_to_steady_state(sc.geom, sc.air, sc.src, sc.rad, cfg);
  const FdmSolution b = run_to_steady_state(sc.geom, sc.air, sc.src, sc.rad, cfg);
  CHECK(a.periods_run == b.periods_run);
  CHECK(bitwise_equal(a.phi, b.phi));
  CHECK(bitwise_equal(a.p, b.p));
  CHECK(bitwise_equal(a.u, b.u));
  CHECK(bitwise_equal(a.p_L, b.p_L));
  CHECK(bitwise_equal(a.p_t_L, b.p_t_L));
  CHECK(bitwise_equal(a.u_t_L, b.u_t_L));
}

TEST_CASE("lossless tube keeps period energy") {
  // eta = 1 removes the thermal loss exactly; a vanishing viscosity makes
  // the viscous loss negligible at double precision
  const AirProperties air =
      AirProperties::make(1.2, 343.0, 1e-300, 1.0, 0.0262, 1005.0,
                          2.0 * kPi * kF0);
  const Scene sc;
  const FdmSolution sol =
      run_to_steady_state(sc.geom, air, sc.src, sc.rad, small_config(301));
  CHECK(sol.steady_residual <= 1e-8 * sol.max_abs_phi);
  CHECK(sol.p_l2_drift < 1e-6);
}

TEST_CASE("non-convergence raises with the residual") {
  const Scene sc;
  FdmConfig cfg = small_config(101);
  cfg.max_periods = 3;
  CHECK_THROWS_WITH_AS(
      run_to_steady_state(sc.geom, sc.air, sc.src, sc.rad, cfg),
      doctest::Contains("not steady after"), SolverError);
}

TEST_CASE("runner argument validation") {
  const Scene sc;
  FdmConfig cfg = small_config(3);
  CHECK_THROWS_AS(run_to_steady_state(sc.geom, sc.air, sc.src, sc.rad, cfg),
                  std::invalid_argument);
  cfg = small_config(101);
  cfg.steady_tol = 0.0;
  CHECK_THROWS_AS(run_to_steady_state(sc.geom, sc.air, sc.src, sc.rad, cfg),
                  std::invalid_argument);
  cfg = small_config(101);
  cfg.max_periods = 0;
  CHECK_THROWS_AS(run_to_steady_state(sc.geom, sc.air, sc.src, sc.rad, cfg),
                  std::invalid_argument);
}

TEST_CASE("resampling onto the native grid is the identity") {
  const FdmSolution& sol = default_sol();
  const Eigen::Index spp = sol.grid.steps_per_period;
  const Mat out = resample_to_grid(sol, sol.phi, sol.grid.nx, spp + 1);
  CHECK(out.rows() == spp + 1);
  CHECK(out.cols() == sol.grid.nx);
  CHECK(bitwise_equal(out, sol.phi.middleRows(1, spp + 1)));
}

TEST_CASE("resampling reproduces bilinear fields exactly") {
  FdmSolution sol;
  sol.grid.nx = 11;
  sol.grid.dx = 0.1;
  sol.grid.dt = 1e-3;
  sol.grid.steps_per_period = 7;
  sol.x = linspace(0.0, 1.0, 11);
  sol.t.resize(10);
  for (Eigen::Index r = 0; r < 10; ++r)
    sol.t[r] = (static_cast<double>(r) - 1.0) * sol.grid.dt;
  auto f = [](double x, double t) {
    return 2.0 + 3.0 * x - 400.0 * t + 150.0 * x * t;
  };
  Mat field(10, 11);
  for (Eigen::Index r = 0; r < 10; ++r)
    for (Eigen::Index i = 0; i < 11; ++i) field(r, i) = f(sol.x[i], sol.t[r]);

  const Mat out = resample_to_grid(sol, field, 17, 13);
  const double T = 7e-3;
  for (Eigen::Index j = 0; j < 13; ++j) {
    const double t = T * static_cast<double>(j) / 12.0;
    for (Eigen::Index i = 0; i < 17; ++i) {
      const double x = static_cast<double>(i) / 16.0;
      CHECK(out(j, i) == doctest::Approx(f(x, t)).epsilon(1e-12));
    }
  }

  CHECK_THROWS_AS(resample_to_grid(sol, field, 1, 13), std::invalid_argument);
  CHECK_THROWS_AS(resample_to_grid(sol, field, 17, 1), std::invalid_argument);
  CHECK_THROWS_AS(resample_to_grid(sol, Mat::Zero(4, 11), 17, 13),
                  std::invalid_argument);
}

TEST_CASE("resampled pressure agrees with a finer reference") {
  const Scene sc;
  const FdmSolution& sol = default_sol();
  FdmConfig fine_cfg;
  fine_cfg.nx = 2001;
  const FdmSolution fine =
      run_to_steady_state(sc.geom, sc.air, sc.src, sc.rad, fine_cfg);
  const Mat a = resample_to_grid(sol, sol.p, 1251, 401);
  const Mat b = resample_to_grid(fine, fine.p, 1251, 401);
  CHECK((a - b).norm() / b.norm() < 1e-3);
}

TEST_CASE("boundary signals interpolate the stored series") {
  const FdmSolution& sol = default_sol();
  const Eigen::Index spp = sol.grid.steps_per_period;

  SUBCASE("node times are returned verbatim") {
    Vec times(3);
    times << sol.t[1], sol.t[5], sol.t[spp + 1];
    const BoundarySignals sig = boundary_signals(sol, times);
    CHECK(sig.p[0] == sol.p_L[1]);
    CHECK(sig.p[1] == sol.p_L[5]);
    CHECK(sig.p[2] == sol.p_L[spp + 1]);
    CHECK(sig.p_t[1] == sol.p_t_L[5]);
    CHECK(sig.u_t[1] == sol.u_t_L[5]);
  }
  SUBCASE("observation times satisfy the radiation condition") {
    const Scene sc;
    const Vec times = linspace_half_open(0.0, kT, 1000);
    const BoundarySignals sig = boundary_signals(sol, times);
    const double scale = sc.air.rho * sc.air.c / sc.geom.area(1.0);
    const Vec lhs = scale * sig.u_t;
    const Vec rhs = sc.rad.alpha * sig.p + sc.rad.beta * sig.p_t;
    CHECK(rel_l2(rhs, lhs) < 1e-6);
  }
  SUBCASE("times outside the period are rejected") {
    Vec times(1);
    times << -sol.grid.dt;
    CHECK_THROWS_AS(boundary_signals(sol, times), std::invalid_argument);
    times << kT + 2.0 * sol.grid.dt;
    CHECK_THROWS_AS(boundary_signals(sol, times), std::invalid_argument);
  }
}

TEST_CASE("boundary interpolation is exact on linear series") {
  FdmSolution sol;
  sol.grid.nx = 5;
  sol.grid.dx = 0.25;
  sol.grid.dt = 1e-3;
  sol.grid.steps_per_period = 7;
  sol.t.resize(10);
  sol.p_L.resize(10);
  sol.p_t_L.resize(10);
  sol.u_t_L.resize(10);
  for (Eigen::Index r = 0; r < 10; ++r) {
    sol.t[r] = (static_cast<double>(r) - 1.0) * sol.grid.dt;
    sol.p_L[r] = 3.0 + 500.0 * sol.t[r];
    sol.p_t_L[r] = 500.0;
    sol.u_t_L[r] = -2.0 * sol.t[r];
  }
  Vec times(4);
  times << 0.0, 1.3e-3, 4.77e-3, 6.9e-3;
  const BoundarySignals sig = boundary_signals(sol, times);
  for (Eigen::Index k = 0; k < 4; ++k) {
    CHECK(sig.p[k] == doctest::Approx(3.0 + 500.0 * times[k]).epsilon(1e-12));
    CHECK(sig.p_t[k] == doctest::Approx(500.0).epsilon(1e-12));
    CHECK(sig.u_t[k] ==
          doctest::Approx(-2.0 * times[k]).scale(1e-2).epsilon(1e-12));
  }
}

}
