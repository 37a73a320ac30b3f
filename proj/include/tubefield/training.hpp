#ifndef TUBEFIELD_TRAINING_HPP
#define TUBEFIELD_TRAINING_HPP

#include <cstdint>
#include <filesystem>
#include <string>

#include "tubefield/batch_eval.hpp"
#include "tubefield/common.hpp"
#include "tubefield/network.hpp"
#include "tubefield/optimize.hpp"
#include "tubefield/physics.hpp"

namespace tubefield {

struct CollocationConfig {
  Eigen::Index n_pde = 5000;
  Eigen::Index n_bc = 1000;
  Eigen::Index n_pc = 1000;
  Eigen::Index n_obs = 1000;
};

/// Fixed full-batch collocation points. PDE points come from the 2D Sobol
/// sequence (skip = 1) scaled to [0,L] x [0,T]; boundary and observation
/// times are uniform on the half-open period [0,T); periodicity positions
/// span [0,L] inclusively and are evaluated at both t = 0 and t = T.
struct CollocationSets {
  Mat2X pde;
  Vec bc_times;
  Vec pc_x;
  Vec obs_times;

  static CollocationSets make(const CollocationConfig& cfg, double L, double T);
};

struct LossWeights {
  double pde = 5e-6;
  double bc = 3.4e5;
  double obs = 1.0;
  double pc = 1.0;
  double pc_u = 5e4;
  double pc_p = 1.0;
  double pc_phitt = 1e-8;
  double rad = 1.0;  // radiation-model misfit (fine-tuning only)
};

/// Raw (unweighted) mean-square loss terms.
struct LossTerms {
  double pde = 0.0;
  double bc = 0.0;
  double obs = 0.0;
  double pc_u = 0.0;
  double pc_p = 0.0;
  double pc_phitt = 0.0;
  double rad = 0.0;

  double total(const LossWeights& w) const {
    return w.pde * pde + w.bc * bc + w.obs * obs +
           w.pc * (w.pc_u * pc_u + w.pc_p * pc_p + w.pc_phitt * pc_phitt) +
           w.rad * rad;
  }
};

/// Sign convention of the first-order time term in the PDE residual. Eq1
/// carries Gρ/A + RA/K (consistent with the governing equation); LiteralEq11
/// flips the RA/K sign as printed in the loss definition.
enum class PdeForm { Eq1, LiteralEq11 };

struct ObservationData {
  Vec times;
  Vec pressures;
  double snr_db = 0.0;  // realized, informational
  std::uint64_t noise_seed = 0;
};

/// Pointwise horn-equation residual from precomputed coefficient arrays:
///   r = phi_xx + (A_x/A) phi_x - G R phi - coef_t phi_t - (rho/K) phi_tt.
Vec pde_residual(const FieldEval& ev, const Vec& ax_over_a, const Vec& gr,
                 const Vec& coef_t, double rho_over_k);

/// Same residual with coefficients evaluated from geometry and air at the
/// given positions.
Vec pde_residual(const FieldEval& ev, const TubeGeometry& geom,
                 const AirProperties& air, const Vec& x,
                 PdeForm form = PdeForm::Eq1);

/// Radiation-model coefficients treated as trainable unknowns during
/// fine-tuning; both start at 1.
struct RadiationUnknowns {
  double alpha = 1.0;
  double beta = 1.0;
};

/// Full-batch loss assembly over fixed collocation sets.
///
/// Streams of the frozen Fourier embedding are cached per batch (keyed by a
/// fingerprint of the embedding matrix), so repeated evaluations only pay
/// for the network layers. Gradients accumulate in a fixed batch order
/// (PDE, BC, OBS with the optional radiation term, PC at t=0, PC at t=T)
/// with one reverse pass per batch; loss weights are folded into the
/// adjoint seeds.
class LossEvaluator {
 public:
  LossEvaluator(const TubeGeometry& geom, const AirProperties& air,
                const SourceWaveform& src, CollocationSets sets,
                ObservationData obs, LossWeights weights,
                PdeForm form = PdeForm::Eq1);

  LossTerms value(const NetworkParams& params);
  LossTerms value_and_grad(const NetworkParams& params, Vec& grad);

  /// Fine-tuning variants: include the radiation misfit at the observation
  /// times and (for the gradient form) its alpha/beta derivatives of the
  /// weighted total.
  LossTerms value_ftm(const NetworkParams& params, const RadiationUnknowns& rad);
  LossTerms value_and_grad_ftm(const NetworkParams& params,
                               const RadiationUnknowns& rad, Vec& grad,
                               double& grad_alpha, double& grad_beta);

  const CollocationSets& collocation() const { return sets_; }
  const ObservationData& observations() const { return obs_; }
  const LossWeights& weights() const { return w_; }
  double length() const { return L_; }
  double period() const { return T_; }

 private:
  LossTerms evaluate(const NetworkParams& params, Vec* grad,
                     const RadiationUnknowns* rad, double* grad_alpha,
                     double* grad_beta);
  void refresh_streams(const NetworkParams& params, bool with_rad);

  AirProperties air_;
  SmoothedRosenberg source_;
  CollocationSets sets_;
  ObservationData obs_;
  LossWeights w_;
  PdeForm form_;
  double L_ = 0.0;
  double T_ = 0.0;

  // Position-dependent coefficients, fixed at construction.
  Vec pde_axa_, pde_gr_, pde_coef_t_;
  double rho_over_k_ = 0.0;
  double a0_ = 0.0;       // A(0)
  Vec bc_u_src_;          // source volume velocity at bc times
  double obs_ra_ = 0.0;   // R(L) A(L)
  double rho_c_ = 0.0;
  Vec pc_a_, pc_ra_;

  // Embedding stream caches.
  std::uint64_t ffe_hash_ = 0;
  bool have_rad_stream_ = false;
  Mat z_pde_, z_bc_, z_obs_, z_obs_rad_, z_pc0_, z_pc1_;
};

struct TrainConfig {
  int adam_epochs = 20000;
  int lbfgs_epochs = 3000;
  AdamConfig adam;
  LbfgsConfig lbfgs;
  int checkpoint_every = 1000;             // epochs between checkpoints
  std::filesystem::path checkpoint_path;   // empty disables checkpointing
  std::filesystem::path log_path;          // empty disables the CSV log
  std::filesystem::path resume_from;       // optional checkpoint to continue
  int progress_every = 0;                  // stderr progress cadence, 0 = off
};

struct TrainReport {
  LossTerms initial_terms, final_terms;
  double initial_total = 0.0;
  double final_total = 0.0;
  int epochs_run = 0;  // epochs executed by this invocation
  int lbfgs_line_search_failures = 0;
  std::string checkpoint;  // last checkpoint written, empty if none
};

/// Adam phase (learning-rate decay per epoch) followed by L-BFGS epochs.
///
/// The CSV log has one row per epoch with columns epoch, phase (0 = Adam,
/// 1 = L-BFGS), lr, the raw loss terms, and the weighted total, recorded
/// before that epoch's update. Checkpoints carry the optimizer state, so a
/// resumed run continues bitwise identically to an uninterrupted one. A
/// non-finite loss or gradient aborts with a SolverError naming the last
/// good checkpoint. A failed L-BFGS line search warns and ends that epoch;
/// if the epoch made no progress at all the phase stops early (the state
/// could only repeat).
TrainReport train_gamma(NetworkParams& params, LossEvaluator& loss,
                        const TrainConfig& cfg);

}  // namespace tubefield

#endif
