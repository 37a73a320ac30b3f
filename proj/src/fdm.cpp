#include "tubefield/fdm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "tubefield/io.hpp"

namespace tubefield {

namespace {

constexpr double kSnapTol = 1e-9;  // node snapping in index space

double snap_index(double s) {
  const double r = std::round(s);
  return std::abs(s - r) < kSnapTol ? r : s;
}

bool is_node(double s) { return s == std::floor(s); }

// Catmull-Rom weights; exact on linear data.
void catmull_rom(double u, double w[4]) {
  const double u2 = u * u, u3 = u2 * u;
  w[0] = 0.5 * (-u3 + 2.0 * u2 - u);
  w[1] = 0.5 * (3.0 * u3 - 5.0 * u2 + 2.0);
  w[2] = 0.5 * (-3.0 * u3 + 4.0 * u2 + u);
  w[3] = 0.5 * (u3 - u2);
}

void rotate_levels(Vec& prev2, Vec& prev, Vec& curr, Vec& next) {
  std::swap(prev2, prev);
  std::swap(prev, curr);
  std::swap(curr, next);
}

// GMRES for (I - M) x = r0 where apply_map evaluates y -> M y. Arnoldi with
// one reorthogonalization pass, Givens-rotated Hessenberg least squares.
template <class MapFn>
Vec gmres_fixed_point_correction(const MapFn& apply_map, const Vec& r0,
                                 int maxit, double tol) {
  Vec x = Vec::Zero(r0.size());
  const double beta = r0.norm();
  if (beta == 0.0 || maxit < 1) return x;
  std::vector<Vec> basis;
  basis.push_back(r0 / beta);
  Mat H = Mat::Zero(maxit + 1, maxit);
  Vec cs(maxit), sn(maxit);
  Vec gv = Vec::Zero(maxit + 1);
  gv[0] = beta;
  int m = 0;
  for (int j = 0; j < maxit; ++j) {
    Vec w = basis[static_cast<size_t>(j)] -
            apply_map(basis[static_cast<size_t>(j)]);
    for (int pass = 0; pass < 2; ++pass)
      for (int i = 0; i <= j; ++i) {
        const double h = basis[static_cast<size_t>(i)].dot(w);
        H(i, j) += h;
        w -= h * basis[static_cast<size_t>(i)];
      }
    const double hnorm = w.norm();
    H(j + 1, j) = hnorm;
    for (int i = 0; i < j; ++i) {
      const double t = cs[i] * H(i, j) + sn[i] * H(i + 1, j);
      H(i + 1, j) = -sn[i] * H(i, j) + cs[i] * H(i + 1, j);
      H(i, j) = t;
    }
    const double r = std::hypot(H(j, j), H(j + 1, j));
    cs[j] = r > 0.0 ? H(j, j) / r : 1.0;
    sn[j] = r > 0.0 ? H(j + 1, j) / r : 0.0;
    H(j, j) = r;
    H(j + 1, j) = 0.0;
    gv[j + 1] = -sn[j] * gv[j];
    gv[j] *= cs[j];
    m = j + 1;
    if (std::abs(gv[j + 1]) <= tol * beta || hnorm == 0.0) break;
    if (j + 1 < maxit) basis.push_back(w / hnorm);
  }
  const Vec y =
      H.topLeftCorner(m, m).triangularView<Eigen::Upper>().solve(gv.head(m));
  for (int i = 0; i < m; ++i) x += y[i] * basis[static_cast<size_t>(i)];
  return x;
}

}  // namespace

FdmGrid FdmGrid::make(double L, double T, double c, Eigen::Index nx,
                      double courant_max) {
  if (!(L > 0.0) || !(T > 0.0) || !(c > 0.0))
    throw std::invalid_argument("FdmGrid: L, T and c must be positive");
  if (nx < 3) throw std::invalid_argument("FdmGrid: nx must be >= 3");
  if (!(courant_max > 0.0) || courant_max > 1.0)
    throw std::invalid_argument("FdmGrid: courant must be in (0, 1]");
  FdmGrid g;
  g.nx = nx;
  g.dx = L / static_cast<double>(nx - 1);
  const double dt_max = courant_max * g.dx / c;
  g.steps_per_period =
      static_cast<Eigen::Index>(std::ceil((T / dt_max) * (1.0 - 1e-12)));
  g.dt = T / static_cast<double>(g.steps_per_period);
  g.courant = c * g.dt / g.dx;
  return g;
}

FdmCoefficients FdmCoefficients::make(const TubeGeometry& geom,
                                      const AirProperties& air, const Vec& x,
                                      PdeForm form) {
  air.validate();
  const Eigen::Index n = x.size();
  if (n < 1) throw std::invalid_argument("FdmCoefficients: empty grid");
  FdmCoefficients c;
  c.ax_over_a.resize(n);
  c.gr.resize(n);
  c.coef_t.resize(n);
  const double sign = form == PdeForm::Eq1 ? 1.0 : -1.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto [R, G] = loss_coefficients(air, geom, x[i]);
    const double A = geom.area(x[i]);
    c.ax_over_a[i] = geom.area_x_over_area(x[i]);
    c.gr[i] = G * R;
    c.coef_t[i] = G * air.rho / A + sign * R * A / air.K;
  }
  c.k_over_rho = air.K / air.rho;
  return c;
}

void fdm_interior_step(const Vec& phi_prev, const Vec& phi_curr,
                       const FdmGrid& grid, const FdmCoefficients& coef,
                       Vec& phi_next, const Vec* forcing) {
  const Eigen::Index nx = phi_curr.size();
  if (nx < 3) throw std::invalid_argument("fdm_interior_step: nx must be >= 3");
  if (phi_prev.size() != nx || phi_next.size() != nx ||
      coef.ax_over_a.size() != nx || coef.gr.size() != nx ||
      coef.coef_t.size() != nx)
    throw std::invalid_argument("fdm_interior_step: size mismatch");
  if (forcing && forcing->size() != nx)
    throw std::invalid_argument("fdm_interior_step: forcing size mismatch");

  const Eigen::Index m = nx - 2;
  const auto mid = Eigen::seqN(1, m);
  const auto lo = Eigen::seqN(0, m);
  const auto hi = Eigen::seqN(2, m);
  const double inv_dx2 = 1.0 / (grid.dx * grid.dx);
  const double inv_2dx = 0.5 / grid.dx;
  const double kappa = coef.k_over_rho;

  Vec s = (phi_curr(hi) - 2.0 * phi_curr(mid) + phi_curr(lo)) * inv_dx2 +
          coef.ax_over_a(mid).cwiseProduct((phi_curr(hi) - phi_curr(lo)) *
                                           inv_2dx) -
          coef.gr(mid).cwiseProduct(phi_curr(mid));
  if (forcing) s += (*forcing)(mid);

  const Vec q = (0.5 * grid.dt * kappa) * coef.coef_t(mid);
  const double dt2k = grid.dt * grid.dt * kappa;
  phi_next(mid) =
      (2.0 * phi_curr(mid) -
       (1.0 - q.array()).matrix().cwiseProduct(phi_prev(mid)) + dt2k * s)
          .cwiseQuotient((1.0 + q.array()).matrix());

  if (!phi_next(mid).allFinite()) {
    for (Eigen::Index i = 1; i < nx - 1; ++i)
      if (!std::isfinite(phi_next[i]))
        throw SolverError("fdm_interior_step: non-finite value at node " +
                          std::to_string(i));
  }
}

double apply_source_bc(const Vec& phi_next, double u_source, double area0,
                       double dx) {
  if (phi_next.size() < 3)
    throw std::invalid_argument("apply_source_bc: needs at least 3 nodes");
  if (!(area0 > 0.0) || !(dx > 0.0))
    throw std::invalid_argument("apply_source_bc: area0 and dx must be positive");
  return (4.0 * phi_next[1] - phi_next[2] + 2.0 * dx * u_source / area0) / 3.0;
}

std::pair<double, int> apply_radiation_bc(const RadiationBcParams& bc,
                                          const Vec& phi_prev2,
                                          const Vec& phi_prev,
                                          const Vec& phi_curr,
                                          const Vec& phi_next) {
  const Eigen::Index n = phi_curr.size();
  if (n < 4)
    throw std::invalid_argument("apply_radiation_bc: needs at least 4 nodes");
  if (phi_prev2.size() != n || phi_prev.size() != n || phi_next.size() != n)
    throw std::invalid_argument("apply_radiation_bc: size mismatch");
  if (!(bc.dx > 0.0) || !(bc.dt > 0.0))
    throw std::invalid_argument("apply_radiation_bc: dx and dt must be positive");

  const Eigen::Index i = n - 1;
  const double inv_2dx = 0.5 / bc.dx;
  const double inv_2dt = 0.5 / bc.dt;
  const double inv_dt2 = 1.0 / (bc.dt * bc.dt);
  const double rc = bc.rho * bc.c;
  const double c0 = phi_curr[i];
  const double p0 = phi_prev[i];
  const double phix_prev =
      (3.0 * phi_prev[i] - 4.0 * phi_prev[i - 1] + phi_prev[i - 2]) * inv_2dx;

  auto residual = [&](double xv) {
    const double phix_next =
        (3.0 * xv - 4.0 * phi_next[i - 1] + phi_next[i - 2]) * inv_2dx;
    const double phi_xt = (phix_next - phix_prev) * inv_2dt;
    const double phi_t = (xv - p0) * inv_2dt;
    const double phi_tt = (xv - 2.0 * c0 + p0) * inv_dt2;
    const double p = bc.ra_l * c0 + bc.rho * phi_t;
    const double p_t = bc.ra_l * phi_t + bc.rho * phi_tt;
    return -rc * phi_xt - bc.alpha * p - bc.beta * p_t;
  };
  const double slope = -rc * 3.0 * inv_2dx * inv_2dt -
                       bc.alpha * bc.rho * inv_2dt -
                       bc.beta * (bc.ra_l * inv_2dt + bc.rho * inv_dt2);
  if (!(std::abs(slope) > 0.0))
    throw SolverError("apply_radiation_bc: degenerate boundary equation");

  double x0 = 3.0 * c0 - 3.0 * p0 + phi_prev2[i];
  for (int k = 1; k <= bc.max_iters; ++k) {
    const double x1 = x0 - residual(x0) / slope;
    if (std::abs(x1 - x0) <= bc.tol * std::max(1.0, std::abs(x1)))
      return {x1, k};
    x0 = x1;
  }
  throw SolverError("apply_radiation_bc: corrector stalled after " +
                    std::to_string(bc.max_iters) + " iterations, residual " +
                    format_full(residual(x0)));
}

FdmSolution run_to_steady_state(const TubeGeometry& geom,
                                const AirProperties& air,
                                const SourceWaveform& src,
                                const RadiationCoefficients& rad,
                                const FdmConfig& cfg) {
  air.validate();
  src.validate();
  rad.validate();
  if (cfg.nx < 4)
    throw std::invalid_argument("run_to_steady_state: nx must be >= 4");
  if (!(cfg.steady_tol > 0.0))
    throw std::invalid_argument("run_to_steady_state: steady_tol must be positive");
  if (cfg.max_periods < 1)
    throw std::invalid_argument("run_to_steady_state: max_periods must be >= 1");

  const double L = geom.length();
  const double T = src.T;
  FdmSolution sol;
  sol.grid = FdmGrid::make(L, T, air.c, cfg.nx, cfg.courant);
  const FdmGrid& g = sol.grid;
  const Eigen::Index nx = g.nx;
  const Eigen::Index spp = g.steps_per_period;
  if (spp < 5)
    throw std::invalid_argument("run_to_steady_state: grid too coarse in time");

  sol.x = linspace(0.0, L, nx);
  const FdmCoefficients coef = FdmCoefficients::make(geom, air, sol.x, cfg.form);
  Vec a_vec(nx), ra_vec(nx);
  for (Eigen::Index i = 0; i < nx; ++i) {
    a_vec[i] = geom.area(sol.x[i]);
    ra_vec[i] = loss_coefficients(air, geom, sol.x[i]).first * a_vec[i];
  }
  const SmoothedRosenberg source(src);
  RadiationBcParams bc;
  bc.alpha = rad.alpha;
  bc.beta = rad.beta;
  bc.ra_l = ra_vec[nx - 1];
  bc.rho = air.rho;
  bc.c = air.c;
  bc.dx = g.dx;
  bc.dt = g.dt;

  Mat bprev = Mat::Zero(spp, nx);
  Mat bcur = Mat::Zero(spp, nx);
  Vec prev2 = Vec::Zero(nx), prev = Vec::Zero(nx), curr = Vec::Zero(nx);
  Vec next = Vec::Zero(nx);
  const Eigen::Index nt = spp + 3;
  Mat record(spp + 5, nx);

  const double inv_2dt = 0.5 / g.dt;
  // ||p||_2 over a period buffer, away from the buffer edges where the
  // centered time difference would cross into the neighbouring period
  auto period_p_norm = [&](const Mat& b) {
    const Eigen::Index m = spp - 2;
    return ((b.middleRows(1, m).array().rowwise() *
             ra_vec.transpose().array()) +
            (air.rho * inv_2dt) *
                (b.middleRows(2, m).array() - b.middleRows(0, m).array()))
        .matrix()
        .norm();
  };

  auto march_step = [&](const Vec& p2, const Vec& p1, const Vec& c0, Vec& out,
                        Eigen::Index ph, bool with_source) {
    fdm_interior_step(p1, c0, g, coef, out);
    const double u =
        with_source ? source(static_cast<double>(ph) * g.dt) : 0.0;
    out[0] = apply_source_bc(out, u, a_vec[0], g.dx);
    const auto [xb, iters] = apply_radiation_bc(bc, p2, p1, c0, out);
    out[nx - 1] = xb;
    return iters;
  };

  // One source-free period march of the state (phi^{m-2}, phi^{m-1}, phi^m).
  auto apply_map = [&](const Vec& y) {
    Vec p2 = y.segment(0, nx);
    Vec p1 = y.segment(nx, nx);
    Vec c0 = y.segment(2 * nx, nx);
    Vec out(nx);
    for (Eigen::Index ph = 0; ph < spp; ++ph) {
      march_step(p2, p1, c0, out, ph, false);
      rotate_levels(p2, p1, c0, out);
    }
    Vec r(3 * nx);
    r << p2, p1, c0;
    return r;
  };

  // The near-uniform phi component drains through the radiation condition
  // at a rate of order alpha ~ 1 1/s, so the plain period map would need
  // thousands of periods to settle. The map is affine in the three-level
  // state, so its fixed point is solved for directly: GMRES on (I - M)
  // with the one-period march as the matvec, seeded by the residual of
  // two consecutive marched periods. Steady state is still declared only
  // when two consecutive marched periods agree to tolerance.
  constexpr int kMaxRounds = 5;
  constexpr int kRoundSpacing = 8;
  constexpr int kGmresMaxIt = 80;
  constexpr double kGmresTol = 1e-12;
  long long skip_check_at = -1, next_round = 3;
  int rounds = 0;
  Vec y_prev;
  bool have_yprev = false;

  bool recording = false;
  long long rec_start = 0;
  double p_norm_prev = 0.0;
  for (long long s = 2;; ++s) {
    const Eigen::Index ph = static_cast<Eigen::Index>(s % spp);
    try {
      const int iters = march_step(prev2, prev, curr, next, ph, true);
      sol.max_corrector_iters = std::max(sol.max_corrector_iters, iters);
    } catch (const SolverError& e) {
      throw SolverError("run_to_steady_state: step " + std::to_string(s) +
                        ": " + e.what());
    }

    if (recording) {
      record.row(static_cast<Eigen::Index>(s - rec_start) + 2) =
          next.transpose();
      if (s == rec_start + spp + 2) break;
    } else {
      bcur.row(ph) = next.transpose();
      if (ph == spp - 1) {
        const long long k = s / spp;
        const double fmax = bcur.cwiseAbs().maxCoeff();
        sol.run_max_abs_phi = std::max(sol.run_max_abs_phi, fmax);
        const double p_norm = period_p_norm(bcur);
        if (k == 0) sol.first_period_max = fmax;
        bool did_round = false;
        if (k >= 1) {
          const double diff = (bcur - bprev).cwiseAbs().maxCoeff();
          sol.steady_residual = diff;
          sol.p_l2_drift =
              p_norm > 0.0 ? std::abs(p_norm - p_norm_prev) / p_norm : 0.0;
          if (diff <= cfg.steady_tol * fmax && k != skip_check_at) {
            sol.periods_run = static_cast<int>(k);
            sol.max_abs_phi = fmax;
            recording = true;
            rec_start = s + 1;
            record.row(0) = bcur.row(spp - 2);
            record.row(1) = bcur.row(spp - 1);
          } else if (have_yprev && k >= next_round && rounds < kMaxRounds &&
                     diff > cfg.steady_tol * fmax) {
            Vec y_now(3 * nx);
            y_now << prev, curr, next;
            try {
              const Vec delta = gmres_fixed_point_correction(
                  apply_map, Vec(y_now - y_prev), kGmresMaxIt, kGmresTol);
              const Vec y_star = y_prev + delta;
              prev = y_star.segment(0, nx);
              curr = y_star.segment(nx, nx);
              next = y_star.segment(2 * nx, nx);
            } catch (const SolverError& e) {
              throw SolverError("run_to_steady_state: fixed-point solve: " +
                                std::string(e.what()));
            }
            skip_check_at = k + 1;
            next_round = k + kRoundSpacing;
            ++rounds;
            did_round = true;
          }
        }
        if (!recording) {
          if (k + 1 >= cfg.max_periods)
            throw SolverError(
                "run_to_steady_state: not steady after " +
                std::to_string(k + 1) + " periods; period residual " +
                format_full(sol.steady_residual) + " exceeds " +
                format_full(cfg.steady_tol * fmax));
          if (did_round) {
            have_yprev = false;
          } else {
            y_prev.resize(3 * nx);
            y_prev << prev, curr, next;
            have_yprev = true;
          }
          std::swap(bprev, bcur);
        }
        p_norm_prev = p_norm;
      }
    }
    rotate_levels(prev2, prev, curr, next);
  }
  sol.run_max_abs_phi =
      std::max(sol.run_max_abs_phi, record.cwiseAbs().maxCoeff());

  sol.t.resize(nt);
  for (Eigen::Index r = 0; r < nt; ++r)
    sol.t[r] = (static_cast<double>(r) - 1.0) * g.dt;

  const double inv_dt2 = 1.0 / (g.dt * g.dt);
  const double inv_2dx = 0.5 / g.dx;
  sol.phi = record.middleRows(1, nt);
  const Mat phit =
      (record.middleRows(2, nt) - record.middleRows(0, nt)) * inv_2dt;
  const Mat phitt = (record.middleRows(2, nt) - 2.0 * record.middleRows(1, nt) +
                     record.middleRows(0, nt)) *
                    inv_dt2;
  sol.p = (sol.phi.array().rowwise() * ra_vec.transpose().array() +
           air.rho * phit.array())
              .matrix();

  Mat phix(nt, nx);
  phix.col(0) =
      (-3.0 * sol.phi.col(0) + 4.0 * sol.phi.col(1) - sol.phi.col(2)) * inv_2dx;
  phix.col(nx - 1) = (3.0 * sol.phi.col(nx - 1) - 4.0 * sol.phi.col(nx - 2) +
                      sol.phi.col(nx - 3)) *
                     inv_2dx;
  phix.middleCols(1, nx - 2) =
      (sol.phi.middleCols(2, nx - 2) - sol.phi.middleCols(0, nx - 2)) * inv_2dx;
  sol.u = (phix.array().rowwise() * (-a_vec).transpose().array()).matrix();

  sol.p_L = sol.p.col(nx - 1);
  sol.p_t_L = bc.ra_l * phit.col(nx - 1) + air.rho * phitt.col(nx - 1);
  sol.u_L = sol.u.col(nx - 1);
  const Vec phix_l = (3.0 * record.col(nx - 1) - 4.0 * record.col(nx - 2) +
                      record.col(nx - 3)) *
                     inv_2dx;
  sol.u_t_L = -a_vec[nx - 1] * inv_2dt *
              (phix_l.segment(2, nt) - phix_l.segment(0, nt));
  return sol;
}

Mat resample_to_grid(const FdmSolution& sol, const Mat& field,
                     Eigen::Index nx_out, Eigen::Index nt_out) {
  const Eigen::Index nx = sol.grid.nx;
  const Eigen::Index nt = sol.t.size();
  if (field.rows() != nt || field.cols() != nx)
    throw std::invalid_argument("resample_to_grid: field shape mismatch");
  if (nx_out < 2 || nt_out < 2)
    throw std::invalid_argument(
        "resample_to_grid: need at least two output points per axis");

  const double L = sol.x[nx - 1];
  const double T =
      static_cast<double>(sol.grid.steps_per_period) * sol.grid.dt;
  Mat out(nt_out, nx_out);
  for (Eigen::Index j = 0; j < nt_out; ++j) {
    const double t = T * static_cast<double>(j) / static_cast<double>(nt_out - 1);
    const double st = snap_index(t / sol.grid.dt + 1.0);
    const bool t_node = is_node(st);
    Eigen::Index j0 = 0;
    double wt[4] = {0.0, 1.0, 0.0, 0.0};
    if (!t_node) {
      j0 = std::clamp<Eigen::Index>(
          static_cast<Eigen::Index>(std::floor(st)), 1, nt - 3);
      catmull_rom(st - static_cast<double>(j0), wt);
    }
    for (Eigen::Index i = 0; i < nx_out; ++i) {
      const double x =
          L * static_cast<double>(i) / static_cast<double>(nx_out - 1);
      const double sx = snap_index(x / sol.grid.dx);
      const bool x_node = is_node(sx);
      Eigen::Index i0 = std::clamp<Eigen::Index>(
          static_cast<Eigen::Index>(std::floor(sx)), 0, nx - 2);
      const double wx = sx - static_cast<double>(i0);
      auto row_value = [&](Eigen::Index r) {
        if (x_node) return field(r, static_cast<Eigen::Index>(sx));
        return (1.0 - wx) * field(r, i0) + wx * field(r, i0 + 1);
      };
      if (t_node)
        out(j, i) = row_value(static_cast<Eigen::Index>(st));
      else
        out(j, i) = wt[0] * row_value(j0 - 1) + wt[1] * row_value(j0) +
                    wt[2] * row_value(j0 + 1) + wt[3] * row_value(j0 + 2);
    }
  }
  return out;
}

BoundarySignals boundary_signals(const FdmSolution& sol, const Vec& times) {
  const Eigen::Index nt = sol.t.size();
  const Eigen::Index spp = sol.grid.steps_per_period;
  BoundarySignals out;
  out.t = times;
  out.p.resize(times.size());
  out.p_t.resize(times.size());
  out.u_t.resize(times.size());
  for (Eigen::Index k = 0; k < times.size(); ++k) {
    const double st = snap_index(times[k] / sol.grid.dt + 1.0);
    if (st < 1.0 || st > static_cast<double>(spp + 1))
      throw std::invalid_argument("boundary_signals: time outside [0, T]");
    if (is_node(st)) {
      const auto r = static_cast<Eigen::Index>(st);
      out.p[k] = sol.p_L[r];
      out.p_t[k] = sol.p_t_L[r];
      out.u_t[k] = sol.u_t_L[r];
      continue;
    }
    const auto j0 = std::clamp<Eigen::Index>(
        static_cast<Eigen::Index>(std::floor(st)), 1, nt - 3);
    double w[4];
    catmull_rom(st - static_cast<double>(j0), w);
    auto blend = [&](const Vec& series) {
      return w[0] * series[j0 - 1] + w[1] * series[j0] + w[2] * series[j0 + 1] +
             w[3] * series[j0 + 2];
    };
    out.p[k] = blend(sol.p_L);
    out.p_t[k] = blend(sol.p_t_L);
    out.u_t[k] = blend(sol.u_t_L);
  }
  return out;
}

double fdm_manufactured_error(const TubeGeometry& geom,
                              const AirProperties& air, double T,
                              Eigen::Index nx, double courant, double periods,
                              PdeForm form) {
  if (!(T > 0.0) || !(periods > 0.0))
    throw std::invalid_argument(
        "fdm_manufactured_error: T and periods must be positive");
  const double L = geom.length();
  const FdmGrid g = FdmGrid::make(L, T, air.c, nx, courant);
  const Vec x = linspace(0.0, L, nx);
  const FdmCoefficients coef = FdmCoefficients::make(geom, air, x, form);

  const double omega = 2.0 * std::numbers::pi / T;
  const double kx = std::numbers::pi / L;
  const Vec cosx = (kx * x).array().cos();
  const Vec sinx = (kx * x).array().sin();
  // forcing f(x, t) = fa(x) sin(omega t) + fb(x) cos(omega t) makes
  // phi* = cos(kx x) sin(omega t) an exact solution
  const Vec fa = kx * kx * cosx + kx * coef.ax_over_a.cwiseProduct(sinx) +
                 coef.gr.cwiseProduct(cosx) -
                 (omega * omega / coef.k_over_rho) * cosx;
  const Vec fb = omega * coef.coef_t.cwiseProduct(cosx);

  Vec prev = Vec::Zero(nx);
  Vec curr = std::sin(omega * g.dt) * cosx;
  Vec next(nx), f(nx);
  const auto steps = static_cast<long long>(
      std::llround(periods * static_cast<double>(g.steps_per_period)));
  for (long long s = 2; s <= steps; ++s) {
    const double tc = static_cast<double>(s - 1) * g.dt;
    f = std::sin(omega * tc) * fa + std::cos(omega * tc) * fb;
    fdm_interior_step(prev, curr, g, coef, next, &f);
    const double tn = static_cast<double>(s) * g.dt;
    next[0] = cosx[0] * std::sin(omega * tn);
    next[nx - 1] = cosx[nx - 1] * std::sin(omega * tn);
    std::swap(prev, curr);
    std::swap(curr, next);
  }
  const double tf = static_cast<double>(steps) * g.dt;
  return (curr - std::sin(omega * tf) * cosx).cwiseAbs().maxCoeff();
}

}  // namespace tubefield
