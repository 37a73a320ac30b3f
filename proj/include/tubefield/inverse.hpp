#ifndef TUBEFIELD_INVERSE_HPP
#define TUBEFIELD_INVERSE_HPP

#include <filesystem>
#include <string>

#include "tubefield/common.hpp"
#include "tubefield/fdm.hpp"
#include "tubefield/network.hpp"
#include "tubefield/optimize.hpp"
#include "tubefield/physics.hpp"
#include "tubefield/training.hpp"

namespace tubefield {

/// Boundary signal triple for the time-domain optimization method: the fit
///   minimize sum_i (scale * u_t_i - alpha * p_i - beta * p_t_i)^2
/// over (alpha, beta) in the box [lo, hi]^2.
struct TomProblem {
  Vec times;
  Vec p, p_t, u_t;     // series at x = L on `times`
  double scale = 0.0;  // rho c / A at x = L
  double lo = 0.0, hi = 5.0;

  void validate() const;
};

/// Outcome of one radiation-coefficient estimation.
struct EstimationResult {
  std::string method;  // "FTM", "TOM" or "TOMB"
  double alpha_hat = 0.0;
  double beta_hat = 0.0;
  double residual = 0.0;  // L2 norm of the fit residual
  Mat trace;              // FTM rows: epoch, alpha, beta, total_loss
  std::string trace_csv_path;
  bool has_gt = false;
  double gt_alpha = 0.0, gt_beta = 0.0;
  double rel_err_alpha = 0.0, rel_err_beta = 0.0;

  /// Fills the relative errors (absolute error when the true value is 0).
  void set_ground_truth(double alpha, double beta);
};

/// JSON body {method, alpha_hat, beta_hat, residual, trace_csv_path, gt,
/// rel_errors}; gt and rel_errors are null without ground truth.
std::string estimation_to_json(const EstimationResult& r);

struct FtmConfig {
  int adam_epochs = 20000;
  int lbfgs_epochs = 1500;
  AdamConfig adam_net{1e-4};  // network parameters
  AdamConfig adam_rad{1e-2};  // (alpha, beta)
  LbfgsConfig lbfgs;
  double alpha_init = 1.0;
  double beta_init = 1.0;
  double divergence_limit = 10.0;  // |alpha| or |beta| beyond this warns
  bool freeze_net = false;         // keep network parameters fixed (bitwise)
  bool freeze_rad = false;         // keep (alpha, beta) fixed (bitwise)
  std::filesystem::path trace_path;  // optional CSV (epoch, alpha, beta, total_loss)
  int progress_every = 0;
};

/// Fine-tunes a trained network jointly with the radiation coefficients.
/// Each Adam epoch takes one full-batch gradient of the fine-tuning loss
/// (the usual total plus the weighted radiation misfit) and applies two
/// optimizers: adam_net on the parameters (lr decayed from 1e-4) and
/// adam_rad on (alpha, beta) (lr decayed from 1e-2). The L-BFGS phase then
/// refines parameters and coefficients jointly. The trace records the state
/// at the start of every epoch plus a final row. Throws SolverError on a
/// non-finite loss after flushing the trace; coefficients leaving
/// [-divergence_limit, divergence_limit] only warn.
EstimationResult ftm_train(NetworkParams& params, LossEvaluator& loss,
                           const FtmConfig& cfg);

/// Assembles a TomProblem from network jets at x = L on n_times uniform
/// times in [0, T]:
///   p = R A phi + rho phi_t,  p_t = R A phi_t + rho phi_tt,
///   u_t = -A phi_xt
/// with phi_xt from the second-order mixed jet.
TomProblem tom_collect_signals(const NetworkParams& params,
                               const AirProperties& air,
                               const TubeGeometry& geom, double T,
                               Eigen::Index n_times);

/// Same assembly from already evaluated jets (phi, phi_t, phi_tt, phi_xt).
TomProblem tom_problem_from_jets(const Vec& times, const FieldEval& ev,
                                 const AirProperties& air,
                                 const TubeGeometry& geom);

/// Exact box-constrained linear least squares on the radiation relation.
/// The residual is linear in (alpha, beta), so the minimizer is the 2x2
/// normal-equation solution when it lies inside the box and otherwise the
/// best of the clamped one-variable face solutions. Throws SolverError when
/// the design columns are linearly dependent.
EstimationResult tom_fit(const TomProblem& problem);

/// tom_fit on the solver's own boundary series (noise-free baseline). The
/// rows of the recorded period are used verbatim.
EstimationResult tomb_fit(const FdmSolution& sol, const AirProperties& air,
                          const TubeGeometry& geom);

}  // namespace tubefield

#endif
