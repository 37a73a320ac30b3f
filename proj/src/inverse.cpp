#include "tubefield/inverse.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "tubefield/batch_eval.hpp"
#include "tubefield/io.hpp"

namespace tubefield {

void TomProblem::validate() const {
  const Eigen::Index n = times.size();
  if (n < 2) throw std::invalid_argument("TomProblem: needs at least 2 samples");
  if (p.size() != n || p_t.size() != n || u_t.size() != n)
    throw std::invalid_argument(
        "TomProblem: series lengths must match the time base");
  if (!std::isfinite(scale) || scale == 0.0)
    throw std::invalid_argument("TomProblem: scale must be finite and nonzero");
  if (!(lo <= hi))
    throw std::invalid_argument("TomProblem: bounds must satisfy lo <= hi");
}

void EstimationResult::set_ground_truth(double alpha, double beta) {
  has_gt = true;
  gt_alpha = alpha;
  gt_beta = beta;
  rel_err_alpha = alpha == 0.0 ? std::abs(alpha_hat)
                               : std::abs(alpha_hat - alpha) / std::abs(alpha);
  rel_err_beta = beta == 0.0 ? std::abs(beta_hat)
                             : std::abs(beta_hat - beta) / std::abs(beta);
}

std::string estimation_to_json(const EstimationResult& r) {
  nlohmann::json j{{"method", r.method},
                   {"alpha_hat", r.alpha_hat},
                   {"beta_hat", r.beta_hat},
                   {"residual", r.residual}};
  j["trace_csv_path"] = r.trace_csv_path.empty()
                            ? nlohmann::json()
                            : nlohmann::json(r.trace_csv_path);
  if (r.has_gt) {
    j["gt"] = {{"alpha", r.gt_alpha}, {"beta", r.gt_beta}};
    j["rel_errors"] = {{"alpha", r.rel_err_alpha}, {"beta", r.rel_err_beta}};
  } else {
    j["gt"] = nullptr;
    j["rel_errors"] = nullptr;
  }
  return j.dump();
}

TomProblem tom_problem_from_jets(const Vec& times, const FieldEval& ev,
                                 const AirProperties& air,
                                 const TubeGeometry& geom) {
  const Eigen::Index n = times.size();
  if (ev.phi.size() != n || ev.phi_t.size() != n || ev.phi_tt.size() != n ||
      ev.phi_xt.size() != n)
    throw std::invalid_argument(
        "tom_problem_from_jets: needs phi, phi_t, phi_tt and phi_xt on the "
        "time base");
  const double L = geom.length();
  const double A = geom.area(L);
  const double ra = loss_coefficients(air, geom, L).first * A;
  TomProblem prob;
  prob.times = times;
  prob.p = ra * ev.phi + air.rho * ev.phi_t;
  prob.p_t = ra * ev.phi_t + air.rho * ev.phi_tt;
  prob.u_t = -A * ev.phi_xt;
  prob.scale = air.rho * air.c / A;
  return prob;
}

TomProblem tom_collect_signals(const NetworkParams& params,
                               const AirProperties& air,
                               const TubeGeometry& geom, double T,
                               Eigen::Index n_times) {
  if (n_times < 2)
    throw std::invalid_argument("tom_collect_signals: n_times must be >= 2");
  if (!(T > 0.0))
    throw std::invalid_argument("tom_collect_signals: T must be positive");
  const double L = geom.length();
  const Vec times = linspace(0.0, T, n_times);
  Mat2X pts(2, n_times);
  pts.row(0).setConstant(L);
  pts.row(1) = times.transpose();
  const FieldEval ev =
      forward_batch(params, pts, L, T, JetRequest{false, false, true});
  return tom_problem_from_jets(times, ev, air, geom);
}

EstimationResult tom_fit(const TomProblem& problem) {
  problem.validate();
  const Vec& a = problem.p;
  const Vec& b = problem.p_t;
  const Vec y = problem.scale * problem.u_t;
  const double aa = a.squaredNorm();
  const double bb = b.squaredNorm();
  const double ab = a.dot(b);
  const double ay = a.dot(y);
  const double by = b.dot(y);
  const double det = aa * bb - ab * ab;
  if (!(aa > 0.0) || !(bb > 0.0) || !(det > 1e-12 * aa * bb))
    throw SolverError("tom_fit: design columns are linearly dependent");

  const double lo = problem.lo, hi = problem.hi;
  auto clamp = [&](double v) { return std::clamp(v, lo, hi); };
  std::vector<std::pair<double, double>> cands;
  const double ai = (bb * ay - ab * by) / det;
  const double bi = (aa * by - ab * ay) / det;
  if (ai >= lo && ai <= hi && bi >= lo && bi <= hi) cands.emplace_back(ai, bi);
  // Face solutions: fix one coefficient at a bound, solve the other in 1D
  // and clamp it; the corners are covered by the clamping.
  for (const double av : {lo, hi}) cands.emplace_back(av, clamp((by - av * ab) / bb));
  for (const double bv : {lo, hi}) cands.emplace_back(clamp((ay - bv * ab) / aa), bv);

  double best = std::numeric_limits<double>::infinity();
  double alpha = lo, beta = lo;
  for (const auto& [ca, cb] : cands) {
    const double f = (y - ca * a - cb * b).squaredNorm();
    if (f < best) {
      best = f;
      alpha = ca;
      beta = cb;
    }
  }

  EstimationResult r;
  r.method = "TOM";
  r.alpha_hat = alpha;
  r.beta_hat = beta;
  r.residual = (y - alpha * a - beta * b).norm();
  return r;
}

EstimationResult tomb_fit(const FdmSolution& sol, const AirProperties& air,
                          const TubeGeometry& geom) {
  const Eigen::Index spp = sol.grid.steps_per_period;
  if (sol.t.size() != spp + 3)
    throw std::invalid_argument("tomb_fit: solution lacks the recorded period");
  const BoundarySignals bs = boundary_signals(sol, sol.t.segment(1, spp + 1));
  TomProblem prob;
  prob.times = bs.t;
  prob.p = bs.p;
  prob.p_t = bs.p_t;
  prob.u_t = bs.u_t;
  prob.scale = air.rho * air.c / geom.area(geom.length());
  EstimationResult r = tom_fit(prob);
  r.method = "TOMB";
  return r;
}

namespace {

const std::vector<std::string> kTraceColumns = {"epoch", "alpha", "beta",
                                                "total_loss"};

Mat trace_matrix(const std::vector<double>& rows) {
  using RowMat =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Index ncol = static_cast<Eigen::Index>(kTraceColumns.size());
  const Eigen::Index nrow = static_cast<Eigen::Index>(rows.size()) / ncol;
  Mat m(nrow, ncol);
  if (nrow > 0) m = Eigen::Map<const RowMat>(rows.data(), nrow, ncol);
  return m;
}

}  // namespace

EstimationResult ftm_train(NetworkParams& params, LossEvaluator& loss,
                           const FtmConfig& cfg) {
  if (cfg.adam_epochs < 0 || cfg.lbfgs_epochs < 0)
    throw std::invalid_argument("ftm_train: epoch counts must be >= 0");
  if (cfg.freeze_net && cfg.freeze_rad)
    throw std::invalid_argument("ftm_train: both parameter blocks frozen");
  const LossWeights& w = loss.weights();
  RadiationUnknowns rad{cfg.alpha_init, cfg.beta_init};

  std::vector<double> rows;
  auto push_trace = [&](int epoch, double total) {
    rows.insert(rows.end(),
                {static_cast<double>(epoch), rad.alpha, rad.beta, total});
  };
  auto flush_trace = [&]() {
    if (!cfg.trace_path.empty())
      write_csv(cfg.trace_path, kTraceColumns, trace_matrix(rows));
  };
  auto abort_ftm = [&](int epoch, const std::string& why) -> SolverError {
    flush_trace();
    std::string msg =
        "ftm_train: aborted at epoch " + std::to_string(epoch) + ": " + why;
    if (!cfg.trace_path.empty()) msg += "; trace: " + cfg.trace_path.string();
    return SolverError(msg);
  };
  bool warned = false;
  auto check_divergence = [&](int epoch) {
    if (warned || (std::abs(rad.alpha) <= cfg.divergence_limit &&
                   std::abs(rad.beta) <= cfg.divergence_limit))
      return;
    std::cerr << "ftm_train: (alpha, beta) = (" << rad.alpha << ", "
              << rad.beta << ") left [-" << cfg.divergence_limit << ", "
              << cfg.divergence_limit << "] at epoch " << epoch << "\n";
    warned = true;
  };

  AdamState adam_net, adam_rad;
  Vec grad;
  int epoch_next = 0;
  for (int e = 0; e < cfg.adam_epochs; ++e) {
    double ga = 0.0, gb = 0.0;
    LossTerms t;
    try {
      t = loss.value_and_grad_ftm(params, rad, grad, ga, gb);
    } catch (const SolverError& err) {
      throw abort_ftm(e, err.what());
    }
    const double total = t.total(w);
    push_trace(e, total);
    if (!std::isfinite(total) || !grad.allFinite() || !std::isfinite(ga) ||
        !std::isfinite(gb))
      throw abort_ftm(e, "non-finite loss or gradient");
    if (!cfg.freeze_net)
      adam_net.update(params.theta, grad, cfg.adam_net,
                      lr_decay(cfg.adam_net.lr_init, e, cfg.adam_net.decay));
    if (!cfg.freeze_rad) {
      Vec rv(2), gv(2);
      rv << rad.alpha, rad.beta;
      gv << ga, gb;
      adam_rad.update(rv, gv, cfg.adam_rad,
                      lr_decay(cfg.adam_rad.lr_init, e, cfg.adam_rad.decay));
      rad.alpha = rv[0];
      rad.beta = rv[1];
    }
    check_divergence(e);
    if (cfg.progress_every > 0 && e % cfg.progress_every == 0)
      std::cerr << "ftm adam epoch " << e << " total " << total << " alpha "
                << rad.alpha << " beta " << rad.beta << "\n";
  }
  epoch_next = cfg.adam_epochs;

  if (cfg.lbfgs_epochs > 0) {
    const Eigen::Index nth = cfg.freeze_net ? 0 : params.theta.size();
    const Eigen::Index nrad = cfg.freeze_rad ? 0 : 2;
    Vec z(nth + nrad);
    if (nth > 0) z.head(nth) = params.theta;
    if (nrad > 0) z.tail(2) << rad.alpha, rad.beta;
    LbfgsSolver lbfgs(cfg.lbfgs);
    const double inf = std::numeric_limits<double>::infinity();
    Vec gtheta;
    auto unpack = [&](const Vec& zv) {
      if (nth > 0) params.theta = zv.head(nth);
      if (nrad > 0) {
        rad.alpha = zv[nth];
        rad.beta = zv[nth + 1];
      }
    };
    auto objective = [&](const Vec& zv, Vec& g) -> double {
      unpack(zv);
      double ga = 0.0, gb = 0.0;
      LossTerms t;
      try {
        t = loss.value_and_grad_ftm(params, rad, gtheta, ga, gb);
      } catch (const SolverError&) {
        g.setZero();
        return inf;
      }
      if (nth > 0) g.head(nth) = gtheta;
      if (nrad > 0) {
        g[nth] = ga;
        g[nth + 1] = gb;
      }
      return t.total(w);
    };
    for (int le = 0; le < cfg.lbfgs_epochs; ++le) {
      const int ge = cfg.adam_epochs + le;
      LossTerms t;
      try {
        t = loss.value_ftm(params, rad);
      } catch (const SolverError& err) {
        throw abort_ftm(ge, err.what());
      }
      const double total = t.total(w);
      push_trace(ge, total);
      if (!std::isfinite(total)) throw abort_ftm(ge, "non-finite loss");
      const LbfgsEpochResult res = lbfgs.run_epoch(objective, z);
      unpack(z);
      epoch_next = ge + 1;
      if (!std::isfinite(res.f))
        throw abort_ftm(ge, "non-finite objective after epoch");
      check_divergence(ge);
      if (cfg.progress_every > 0 && le % cfg.progress_every == 0)
        std::cerr << "ftm lbfgs epoch " << le << " total " << res.f
                  << " alpha " << rad.alpha << " beta " << rad.beta << "\n";
      if (res.line_search_failed && res.iterations == 0) break;
      if (res.converged && res.iterations == 0) break;
    }
  }

  LossTerms tf;
  try {
    tf = loss.value_ftm(params, rad);
  } catch (const SolverError& err) {
    throw abort_ftm(epoch_next, err.what());
  }
  push_trace(epoch_next, tf.total(w));
  flush_trace();

  EstimationResult r;
  r.method = "FTM";
  r.alpha_hat = rad.alpha;
  r.beta_hat = rad.beta;
  r.residual = std::sqrt(
      tf.rad * static_cast<double>(loss.collocation().obs_times.size()));
  r.trace = trace_matrix(rows);
  r.trace_csv_path = cfg.trace_path.string();
  return r;
}

}  // namespace tubefield
