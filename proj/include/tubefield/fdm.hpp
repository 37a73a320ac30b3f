#ifndef TUBEFIELD_FDM_HPP
#define TUBEFIELD_FDM_HPP

#include <utility>

#include "tubefield/common.hpp"
#include "tubefield/physics.hpp"
#include "tubefield/training.hpp"

namespace tubefield {

struct FdmConfig {
  Eigen::Index nx = 1001;
  double courant = 0.9;    // target c dt / dx; realized value is <= this
  double steady_tol = 1e-8;  // period-to-period L-inf, relative to max |phi|
  int max_periods = 200;
  PdeForm form = PdeForm::Eq1;
};

struct FdmGrid {
  Eigen::Index nx = 0;
  double dx = 0.0;
  double dt = 0.0;
  double courant = 0.0;  // realized c dt / dx
  Eigen::Index steps_per_period = 0;

  /// dx = L/(nx-1); dt = T / ceil(c T / (courant_max dx)) so an integer
  /// number of steps covers the period exactly and the realized Courant
  /// number never exceeds the requested one.
  static FdmGrid make(double L, double T, double c, Eigen::Index nx,
                      double courant_max);
};

/// Horn-equation coefficients sampled on the grid nodes.
struct FdmCoefficients {
  Vec ax_over_a;
  Vec gr;
  Vec coef_t;
  double k_over_rho = 0.0;

  static FdmCoefficients make(const TubeGeometry& geom,
                              const AirProperties& air, const Vec& x,
                              PdeForm form = PdeForm::Eq1);
};

/// Leapfrog update of the interior nodes 1..nx-2 centered at phi_curr's
/// time level; the first-order time term is centered, which makes the
/// update pointwise implicit and unconditionally consistent:
///   phi_next (1+q) = 2 phi_curr - (1-q) phi_prev + dt^2 (K/rho) (S + f),
///   q = dt (K/rho) coef_t / 2.
/// Boundary entries of phi_next are left untouched. `forcing`, when given,
/// is added inside the spatial operator (manufactured-solution source).
/// Throws SolverError naming the first non-finite node.
void fdm_interior_step(const Vec& phi_prev, const Vec& phi_curr,
                       const FdmGrid& grid, const FdmCoefficients& coef,
                       Vec& phi_next, const Vec* forcing = nullptr);

/// Solves the one-sided second-order discretization of
/// -A(0) phi_x(0,t) = u_source for the boundary node:
///   phi0 = (4 phi1 - phi2 + 2 dx u_source / A(0)) / 3.
double apply_source_bc(const Vec& phi_next, double u_source, double area0,
                       double dx);

struct RadiationBcParams {
  double alpha = 0.0;
  double beta = 0.0;
  double ra_l = 0.0;  // R(L) A(L)
  double rho = 0.0;
  double c = 0.0;
  double dx = 0.0;
  double dt = 0.0;
  double tol = 1e-10;
  int max_iters = 50;
};

/// Predictor-corrector update of the open-end node. The predictor
/// extrapolates the boundary node quadratically from the three known
/// levels; the corrector re-solves the discretized radiation condition
///   (rho c / A) u_t = alpha p + beta p_t
/// (centered at phi_curr's level, one-sided phi_x) until successive
/// iterates agree to `tol` relative. phi_next must already hold interior
/// values at nx-2 and nx-3. Returns the boundary value and the number of
/// corrector iterations. Throws SolverError if the corrector stalls.
std::pair<double, int> apply_radiation_bc(const RadiationBcParams& bc,
                                          const Vec& phi_prev2,
                                          const Vec& phi_prev,
                                          const Vec& phi_curr,
                                          const Vec& phi_next);

/// One steady-state period with a one-step margin on both sides.
/// Row r of the arrays corresponds to t = (r-1) dt, r = 0..spp+2, so the
/// period [0, T] is rows 1..spp+1 and time interpolation or centered
/// differences never leave the stored range.
struct FdmSolution {
  FdmGrid grid;
  Vec x;  // nx nodes
  Vec t;  // spp+3 times, t[0] = -dt, t[spp+2] = T + dt
  Mat phi, p, u;  // (spp+3) x nx
  Vec p_L, p_t_L, u_L, u_t_L;  // boundary series at x = L per row
  int periods_run = 0;         // period comparisons until steady
  double steady_residual = 0.0;   // absolute L-inf period difference at exit
  double p_l2_drift = 0.0;  // relative change of ||p|| between last two periods
  double max_abs_phi = 0.0;       // over the final period
  double first_period_max = 0.0;  // max |phi| during the first period
  double run_max_abs_phi = 0.0;   // max |phi| over the whole march
  int max_corrector_iters = 0;
};

/// Marches from rest with the phase-stepped source until the L-inf
/// difference between consecutive periods drops below
/// steady_tol * max|phi|, then records one more period. The march is
/// accelerated by solving the periodic fixed point of the (affine)
/// one-period map with GMRES; the tolerance is still verified on two
/// consecutive marched periods. Throws SolverError if max_periods is
/// exhausted (message carries the last residual).
FdmSolution run_to_steady_state(const TubeGeometry& geom,
                                const AirProperties& air,
                                const SourceWaveform& src,
                                const RadiationCoefficients& rad,
                                const FdmConfig& cfg);

/// Resamples one of the solution's field arrays onto the inclusive grid
/// [0,L] x [0,T] with nx_out x nt_out points: linear in x, Catmull-Rom in
/// t. Sample points that land on grid nodes are taken verbatim, so
/// resampling onto the solution's own grid is an identity.
/// Returns nt_out rows by nx_out columns.
Mat resample_to_grid(const FdmSolution& sol, const Mat& field,
                     Eigen::Index nx_out, Eigen::Index nt_out);

struct BoundarySignals {
  Vec t, p, p_t, u_t;
};

/// Boundary series at x = L interpolated to the given times in [0, T]
/// (Catmull-Rom over the stored rows).
BoundarySignals boundary_signals(const FdmSolution& sol, const Vec& times);

/// L-inf error of the scheme against the manufactured solution
/// phi*(x,t) = cos(pi x / L) sin(2 pi t / T) with the analytic forcing
/// added and exact Dirichlet ends, marched for `periods` periods from an
/// exact two-level start. Halving dx (with dt tied through the Courant
/// number) should reduce this error by about 4x.
double fdm_manufactured_error(const TubeGeometry& geom,
                              const AirProperties& air, double T,
                              Eigen::Index nx, double courant,
                              double periods = 1.0,
                              PdeForm form = PdeForm::Eq1);

}  // namespace tubefield

#endif
