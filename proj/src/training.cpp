#include "tubefield/training.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tubefield/io.hpp"
#include "tubefield/sobol.hpp"

namespace tubefield {
namespace {

const JetRequest kPdeReq{true, true, false};
const JetRequest kBcReq{true, false, false};
const JetRequest kObsReq{false, true, false};
const JetRequest kObsRadReq{false, false, true};
const JetRequest kPcReq{true, true, false};

double mse(const Vec& r) {
  return r.squaredNorm() / static_cast<double>(r.size());
}

Mat2X points_at_x(double x, const Vec& t) {
  Mat2X pts(2, t.size());
  pts.row(0).setConstant(x);
  pts.row(1) = t.transpose();
  return pts;
}

Mat2X points_at_t(const Vec& x, double t) {
  Mat2X pts(2, x.size());
  pts.row(0) = x.transpose();
  pts.row(1).setConstant(t);
  return pts;
}

}  // namespace

CollocationSets CollocationSets::make(const CollocationConfig& cfg, double L,
                                      double T) {
  if (cfg.n_pde < 1 || cfg.n_bc < 1 || cfg.n_pc < 1 || cfg.n_obs < 1)
    throw std::invalid_argument("CollocationSets: counts must be positive");
  if (!(L > 0.0) || !(T > 0.0))
    throw std::invalid_argument("CollocationSets: L and T must be positive");
  CollocationSets s;
  const Mat u = sobol2d(cfg.n_pde);
  s.pde.resize(2, cfg.n_pde);
  s.pde.row(0) = (L * u.col(0)).transpose();
  s.pde.row(1) = (T * u.col(1)).transpose();
  s.bc_times = linspace_half_open(0.0, T, cfg.n_bc);
  s.pc_x = linspace(0.0, L, cfg.n_pc);
  s.obs_times = linspace_half_open(0.0, T, cfg.n_obs);
  return s;
}

Vec pde_residual(const FieldEval& ev, const Vec& ax_over_a, const Vec& gr,
                 const Vec& coef_t, double rho_over_k) {
  const Eigen::Index n = ev.phi.size();
  if (ev.phi_x.size() != n || ev.phi_t.size() != n || ev.phi_xx.size() != n ||
      ev.phi_tt.size() != n)
    throw std::invalid_argument(
        "pde_residual: needs phi, phi_x, phi_t, phi_xx and phi_tt");
  if (ax_over_a.size() != n || gr.size() != n || coef_t.size() != n)
    throw std::invalid_argument("pde_residual: coefficient size mismatch");
  return ev.phi_xx + ax_over_a.cwiseProduct(ev.phi_x) -
         gr.cwiseProduct(ev.phi) - coef_t.cwiseProduct(ev.phi_t) -
         rho_over_k * ev.phi_tt;
}

Vec pde_residual(const FieldEval& ev, const TubeGeometry& geom,
                 const AirProperties& air, const Vec& x, PdeForm form) {
  const Eigen::Index n = x.size();
  Vec axa(n), gr(n), coef_t(n);
  const double sign = form == PdeForm::Eq1 ? 1.0 : -1.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto [R, G] = loss_coefficients(air, geom, x[i]);
    const double A = geom.area(x[i]);
    axa[i] = geom.area_x_over_area(x[i]);
    gr[i] = G * R;
    coef_t[i] = G * air.rho / A + sign * R * A / air.K;
  }
  return pde_residual(ev, axa, gr, coef_t, air.rho / air.K);
}

LossEvaluator::LossEvaluator(const TubeGeometry& geom, const AirProperties& air,
                             const SourceWaveform& src, CollocationSets sets,
                             ObservationData obs, LossWeights weights,
                             PdeForm form)
    : air_(air),
      source_(src),
      sets_(std::move(sets)),
      obs_(std::move(obs)),
      w_(weights),
      form_(form),
      L_(geom.length()),
      T_(src.T) {
  air_.validate();
  if (sets_.pde.cols() < 1 || sets_.bc_times.size() < 1 ||
      sets_.pc_x.size() < 1 || sets_.obs_times.size() < 1)
    throw std::invalid_argument("LossEvaluator: empty collocation set");
  if (obs_.times.size() != sets_.obs_times.size() ||
      obs_.pressures.size() != obs_.times.size())
    throw std::invalid_argument("LossEvaluator: observation size mismatch");
  if ((obs_.times - sets_.obs_times).cwiseAbs().maxCoeff() > 1e-9 * T_)
    throw std::invalid_argument(
        "LossEvaluator: observation times must match the collocation times");

  const Eigen::Index np = sets_.pde.cols();
  pde_axa_.resize(np);
  pde_gr_.resize(np);
  pde_coef_t_.resize(np);
  const double sign = form_ == PdeForm::Eq1 ? 1.0 : -1.0;
  for (Eigen::Index i = 0; i < np; ++i) {
    const double x = sets_.pde(0, i);
    const auto [R, G] = loss_coefficients(air_, geom, x);
    const double A = geom.area(x);
    pde_axa_[i] = geom.area_x_over_area(x);
    pde_gr_[i] = G * R;
    pde_coef_t_[i] = G * air_.rho / A + sign * R * A / air_.K;
  }
  rho_over_k_ = air_.rho / air_.K;
  a0_ = geom.area(0.0);
  bc_u_src_.resize(sets_.bc_times.size());
  for (Eigen::Index i = 0; i < sets_.bc_times.size(); ++i)
    bc_u_src_[i] = source_(sets_.bc_times[i]);
  obs_ra_ = loss_coefficients(air_, geom, L_).first * geom.area(L_);
  rho_c_ = air_.rho * air_.c;
  const Eigen::Index npc = sets_.pc_x.size();
  pc_a_.resize(npc);
  pc_ra_.resize(npc);
  for (Eigen::Index i = 0; i < npc; ++i) {
    pc_a_[i] = geom.area(sets_.pc_x[i]);
    pc_ra_[i] = loss_coefficients(air_, geom, sets_.pc_x[i]).first * pc_a_[i];
  }
}

void LossEvaluator::refresh_streams(const NetworkParams& params,
                                    bool with_rad) {
  const std::uint64_t h = fnv1a64(
      params.ffe.data(), sizeof(double) * static_cast<std::size_t>(params.ffe.size()));
  if (h != ffe_hash_ || z_pde_.size() == 0) {
    z_pde_ = ffe_stream(params, sets_.pde, L_, T_, kPdeReq);
    z_bc_ = ffe_stream(params, points_at_x(0.0, sets_.bc_times), L_, T_, kBcReq);
    z_obs_ = ffe_stream(params, points_at_x(L_, sets_.obs_times), L_, T_, kObsReq);
    z_pc0_ = ffe_stream(params, points_at_t(sets_.pc_x, 0.0), L_, T_, kPcReq);
    z_pc1_ = ffe_stream(params, points_at_t(sets_.pc_x, T_), L_, T_, kPcReq);
    z_obs_rad_.resize(0, 0);
    have_rad_stream_ = false;
    ffe_hash_ = h;
  }
  if (with_rad && !have_rad_stream_) {
    z_obs_rad_ =
        ffe_stream(params, points_at_x(L_, sets_.obs_times), L_, T_, kObsRadReq);
    have_rad_stream_ = true;
  }
}

LossTerms LossEvaluator::evaluate(const NetworkParams& params, Vec* grad,
                                  const RadiationUnknowns* rad,
                                  double* grad_alpha, double* grad_beta) {
  const bool with_grad = grad != nullptr;
  const bool with_rad = rad != nullptr;
  refresh_streams(params, with_rad);
  if (with_grad) {
    grad->resize(params.theta.size());
    grad->setZero();
  }
  LossTerms terms;

  {
    const Eigen::Index n = sets_.pde.cols();
    EvalTape tape;
    const FieldEval ev = forward_from_ffe(params, z_pde_, n, kPdeReq, L_, T_,
                                          with_grad ? &tape : nullptr);
    const Vec r = pde_residual(ev, pde_axa_, pde_gr_, pde_coef_t_, rho_over_k_);
    terms.pde = mse(r);
    if (with_grad) {
      const double s = 2.0 / static_cast<double>(n) * w_.pde;
      HeadAdjoints adj;
      adj.phi_xx = s * r;
      adj.phi_x = s * pde_axa_.cwiseProduct(r);
      adj.phi = (-s) * pde_gr_.cwiseProduct(r);
      adj.phi_t = (-s) * pde_coef_t_.cwiseProduct(r);
      adj.phi_tt = (-s * rho_over_k_) * r;
      backward_from_ffe(params, tape, z_pde_, adj, L_, T_, *grad);
    }
  }

  {
    const Eigen::Index n = sets_.bc_times.size();
    EvalTape tape;
    const FieldEval ev = forward_from_ffe(params, z_bc_, n, kBcReq, L_, T_,
                                          with_grad ? &tape : nullptr);
    const Vec r = ev.velocity(a0_) - bc_u_src_;
    terms.bc = mse(r);
    if (with_grad) {
      const double s = 2.0 / static_cast<double>(n) * w_.bc;
      HeadAdjoints adj;
      adj.phi_x = (-a0_ * s) * r;
      backward_from_ffe(params, tape, z_bc_, adj, L_, T_, *grad);
    }
  }

  {
    const Eigen::Index n = sets_.obs_times.size();
    const JetRequest req = with_rad ? kObsRadReq : kObsReq;
    const Mat& z = with_rad ? z_obs_rad_ : z_obs_;
    EvalTape tape;
    const FieldEval ev =
        forward_from_ffe(params, z, n, req, L_, T_, with_grad ? &tape : nullptr);
    const Vec p_hat = obs_ra_ * ev.phi + air_.rho * ev.phi_t;
    const Vec r_obs = p_hat - obs_.pressures;
    terms.obs = mse(r_obs);
    HeadAdjoints adj;
    if (with_grad) {
      const double s = 2.0 / static_cast<double>(n) * w_.obs;
      adj.phi = (s * obs_ra_) * r_obs;
      adj.phi_t = (s * air_.rho) * r_obs;
    }
    if (with_rad) {
      const Vec p_hat_t = obs_ra_ * ev.phi_t + air_.rho * ev.phi_tt;
      const Vec r_rad =
          (-rho_c_) * ev.phi_xt - rad->alpha * p_hat - rad->beta * p_hat_t;
      terms.rad = mse(r_rad);
      const double s = 2.0 / static_cast<double>(n) * w_.rad;
      if (grad_alpha) *grad_alpha = -s * r_rad.dot(p_hat);
      if (grad_beta) *grad_beta = -s * r_rad.dot(p_hat_t);
      if (with_grad) {
        adj.phi += (-s * rad->alpha * obs_ra_) * r_rad;
        adj.phi_t +=
            (-s * (rad->alpha * air_.rho + rad->beta * obs_ra_)) * r_rad;
        adj.phi_tt = (-s * rad->beta * air_.rho) * r_rad;
        adj.phi_xt = (-s * rho_c_) * r_rad;
      }
    }
    if (with_grad) backward_from_ffe(params, tape, z, adj, L_, T_, *grad);
  }

  {
    const Eigen::Index n = sets_.pc_x.size();
    EvalTape tape0, tape1;
    const FieldEval e0 = forward_from_ffe(params, z_pc0_, n, kPcReq, L_, T_,
                                          with_grad ? &tape0 : nullptr);
    const FieldEval e1 = forward_from_ffe(params, z_pc1_, n, kPcReq, L_, T_,
                                          with_grad ? &tape1 : nullptr);
    const Vec r_u = e0.velocity(pc_a_) - e1.velocity(pc_a_);
    const Vec r_p = e0.pressure(pc_ra_, air_.rho) - e1.pressure(pc_ra_, air_.rho);
    const Vec r_tt = e0.phi_tt - e1.phi_tt;
    terms.pc_u = mse(r_u);
    terms.pc_p = mse(r_p);
    terms.pc_phitt = mse(r_tt);
    if (with_grad) {
      const double su = 2.0 / static_cast<double>(n) * w_.pc * w_.pc_u;
      const double sp = 2.0 / static_cast<double>(n) * w_.pc * w_.pc_p;
      const double st = 2.0 / static_cast<double>(n) * w_.pc * w_.pc_phitt;
      HeadAdjoints adj0;
      adj0.phi_x = (-su) * pc_a_.cwiseProduct(r_u);
      adj0.phi = sp * pc_ra_.cwiseProduct(r_p);
      adj0.phi_t = (sp * air_.rho) * r_p;
      adj0.phi_tt = st * r_tt;
      backward_from_ffe(params, tape0, z_pc0_, adj0, L_, T_, *grad);
      HeadAdjoints adj1;
      adj1.phi_x = su * pc_a_.cwiseProduct(r_u);
      adj1.phi = (-sp) * pc_ra_.cwiseProduct(r_p);
      adj1.phi_t = (-sp * air_.rho) * r_p;
      adj1.phi_tt = (-st) * r_tt;
      backward_from_ffe(params, tape1, z_pc1_, adj1, L_, T_, *grad);
    }
  }

  return terms;
}

LossTerms LossEvaluator::value(const NetworkParams& params) {
  return evaluate(params, nullptr, nullptr, nullptr, nullptr);
}

LossTerms LossEvaluator::value_and_grad(const NetworkParams& params, Vec& grad) {
  return evaluate(params, &grad, nullptr, nullptr, nullptr);
}

LossTerms LossEvaluator::value_ftm(const NetworkParams& params,
                                   const RadiationUnknowns& rad) {
  return evaluate(params, nullptr, &rad, nullptr, nullptr);
}

LossTerms LossEvaluator::value_and_grad_ftm(const NetworkParams& params,
                                            const RadiationUnknowns& rad,
                                            Vec& grad, double& grad_alpha,
                                            double& grad_beta) {
  return evaluate(params, &grad, &rad, &grad_alpha, &grad_beta);
}

namespace {

const std::vector<std::string> kLogColumns = {
    "epoch", "phase", "lr",   "pde",      "bc",  "obs",
    "pc_u",  "pc_p",  "pc_phitt", "rad", "total"};

class TrainLog {
 public:
  explicit TrainLog(std::filesystem::path path) : path_(std::move(path)) {}

  void push(int epoch, int phase, double lr, const LossTerms& t, double total) {
    if (path_.empty()) return;
    const double row[] = {static_cast<double>(epoch),
                          static_cast<double>(phase),
                          lr,
                          t.pde,
                          t.bc,
                          t.obs,
                          t.pc_u,
                          t.pc_p,
                          t.pc_phitt,
                          t.rad,
                          total};
    rows_.insert(rows_.end(), std::begin(row), std::end(row));
  }

  void flush() {
    if (path_.empty()) return;
    using RowMat =
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Index ncol = static_cast<Eigen::Index>(kLogColumns.size());
    const Eigen::Index nrow = static_cast<Eigen::Index>(rows_.size()) / ncol;
    Mat m(nrow, ncol);
    if (nrow > 0) m = Eigen::Map<const RowMat>(rows_.data(), nrow, ncol);
    write_csv(path_, kLogColumns, m);
  }

 private:
  std::filesystem::path path_;
  std::vector<double> rows_;
};

const Vec* find_extra(const std::vector<std::pair<std::string, Vec>>& extra,
                      const std::string& name) {
  for (const auto& [k, v] : extra)
    if (k == name) return &v;
  return nullptr;
}

const Vec& require_extra(const std::vector<std::pair<std::string, Vec>>& extra,
                         const std::string& name) {
  const Vec* v = find_extra(extra, name);
  if (!v)
    throw FormatError("train_gamma: checkpoint lacks training state '" + name +
                      "'");
  return *v;
}

}  // namespace

TrainReport train_gamma(NetworkParams& params, LossEvaluator& loss,
                        const TrainConfig& cfg) {
  if (cfg.adam_epochs < 0 || cfg.lbfgs_epochs < 0)
    throw std::invalid_argument("train_gamma: epoch counts must be >= 0");
  const LossWeights& w = loss.weights();
  TrainReport report;
  TrainLog log(cfg.log_path);
  std::string last_checkpoint;

  int epoch_next = 0;
  AdamState adam;
  LbfgsSolver lbfgs(cfg.lbfgs);
  if (!cfg.resume_from.empty()) {
    std::vector<std::pair<std::string, Vec>> extra;
    params = load_checkpoint(cfg.resume_from, &extra);
    epoch_next =
        static_cast<int>(std::llround(require_extra(extra, "epoch_next")[0]));
    if (epoch_next < 0)
      throw FormatError("train_gamma: negative epoch in checkpoint");
    if (epoch_next > 0 && epoch_next < cfg.adam_epochs) {
      adam.m = require_extra(extra, "adam_m");
      adam.v = require_extra(extra, "adam_v");
      adam.step =
          std::llround(require_extra(extra, "adam_step")[0]);
    } else if (epoch_next >= cfg.adam_epochs) {
      const int pairs =
          static_cast<int>(std::llround(require_extra(extra, "lbfgs_pairs")[0]));
      std::vector<Vec> s(pairs), y(pairs);
      for (int i = 0; i < pairs; ++i) {
        s[i] = require_extra(extra, "lbfgs_s_" + std::to_string(i));
        y[i] = require_extra(extra, "lbfgs_y_" + std::to_string(i));
      }
      lbfgs.set_history(std::move(s), std::move(y));
    }
  }

  auto write_checkpoint = [&](int next) {
    if (cfg.checkpoint_path.empty()) return;
    std::vector<std::pair<std::string, Vec>> extra;
    extra.emplace_back("epoch_next", Vec::Constant(1, static_cast<double>(next)));
    if (adam.m.size() > 0) {
      extra.emplace_back("adam_m", adam.m);
      extra.emplace_back("adam_v", adam.v);
      extra.emplace_back("adam_step",
                         Vec::Constant(1, static_cast<double>(adam.step)));
    }
    const auto& s = lbfgs.history_s();
    const auto& y = lbfgs.history_y();
    extra.emplace_back("lbfgs_pairs",
                       Vec::Constant(1, static_cast<double>(s.size())));
    for (std::size_t i = 0; i < s.size(); ++i) {
      extra.emplace_back("lbfgs_s_" + std::to_string(i), s[i]);
      extra.emplace_back("lbfgs_y_" + std::to_string(i), y[i]);
    }
    save_checkpoint(params, cfg.checkpoint_path, extra);
    last_checkpoint = cfg.checkpoint_path.string();
  };

  auto abort_training = [&](int epoch, const std::string& why) -> SolverError {
    log.flush();
    std::string msg = "train_gamma: aborted at epoch " + std::to_string(epoch) +
                      ": " + why + "; last good checkpoint: " +
                      (last_checkpoint.empty() ? std::string("none")
                                               : last_checkpoint);
    return SolverError(msg);
  };

  report.initial_terms = loss.value(params);
  report.initial_total = report.initial_terms.total(w);

  const int lbfgs_start = std::max(0, epoch_next - cfg.adam_epochs);
  Vec grad;

  for (int e = epoch_next; e < cfg.adam_epochs; ++e) {
    const double lr = lr_decay(cfg.adam.lr_init, e, cfg.adam.decay);
    LossTerms t;
    try {
      t = loss.value_and_grad(params, grad);
    } catch (const SolverError& err) {
      throw abort_training(e, err.what());
    }
    const double total = t.total(w);
    log.push(e, 0, lr, t, total);
    if (!std::isfinite(total) || !grad.allFinite())
      throw abort_training(e, "non-finite loss or gradient");
    adam.update(params.theta, grad, cfg.adam, lr);
    ++report.epochs_run;
    if (cfg.progress_every > 0 && e % cfg.progress_every == 0)
      std::cerr << "adam epoch " << e << " lr " << lr << " total " << total
                << "\n";
    if (cfg.checkpoint_every > 0 && (e + 1) % cfg.checkpoint_every == 0)
      write_checkpoint(e + 1);
  }
  epoch_next = std::max(epoch_next, cfg.adam_epochs);

  if (lbfgs_start < cfg.lbfgs_epochs) {
    Vec th = params.theta;
    const double inf = std::numeric_limits<double>::infinity();
    auto objective = [&](const Vec& x, Vec& g) -> double {
      params.theta = x;
      LossTerms t;
      try {
        t = loss.value_and_grad(params, g);
      } catch (const SolverError&) {
        g.setZero();
        return inf;
      }
      return t.total(w);
    };
    for (int le = lbfgs_start; le < cfg.lbfgs_epochs; ++le) {
      const int ge = cfg.adam_epochs + le;
      LossTerms t;
      try {
        t = loss.value(params);
      } catch (const SolverError& err) {
        throw abort_training(ge, err.what());
      }
      const double total = t.total(w);
      log.push(ge, 1, 0.0, t, total);
      if (!std::isfinite(total))
        throw abort_training(ge, "non-finite loss");
      const LbfgsEpochResult res = lbfgs.run_epoch(objective, th);
      params.theta = th;
      ++report.epochs_run;
      epoch_next = ge + 1;
      if (!std::isfinite(res.f))
        throw abort_training(ge, "non-finite objective after epoch");
      if (cfg.progress_every > 0 && le % cfg.progress_every == 0)
        std::cerr << "lbfgs epoch " << le << " total " << res.f << " iters "
                  << res.iterations << "\n";
      if (cfg.checkpoint_every > 0 && (ge + 1) % cfg.checkpoint_every == 0)
        write_checkpoint(ge + 1);
      if (res.line_search_failed) {
        ++report.lbfgs_line_search_failures;
        std::cerr << "train_gamma: line search failed at epoch " << ge << "\n";
        if (res.iterations == 0) break;
      }
      if (res.converged && res.iterations == 0) break;
    }
  }

  report.final_terms = loss.value(params);
  report.final_total = report.final_terms.total(w);
  write_checkpoint(std::max(epoch_next, cfg.adam_epochs));
  report.checkpoint = last_checkpoint;
  log.flush();
  return report;
}

}  // namespace tubefield
