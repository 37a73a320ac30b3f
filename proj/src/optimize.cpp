#include "tubefield/optimize.hpp"

#include <cmath>
#include <stdexcept>

namespace tubefield {

void AdamState::update(Vec& theta, const Vec& grad, const AdamConfig& cfg,
                       double lr) {
  if (m.size() == 0) {
    m = Vec::Zero(theta.size());
    v = Vec::Zero(theta.size());
  }
  if (theta.size() != grad.size() || theta.size() != m.size()) {
    throw std::invalid_argument("AdamState::update: dimension mismatch");
  }
  step += 1;
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  theta.array() -=
      lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
}

void LbfgsSolver::set_history(std::vector<Vec> s, std::vector<Vec> y) {
  if (s.size() != y.size()) {
    throw std::invalid_argument("LbfgsSolver::set_history: pair count mismatch");
  }
  if (static_cast<int>(s.size()) > cfg_.history) {
    throw std::invalid_argument("LbfgsSolver::set_history: too many pairs");
  }
  // Pairs are installed verbatim (already damped when they were recorded),
  // so a restored solver is bitwise identical to the original.
  reset();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double sy = s[i].dot(y[i]);
    if (!(sy > 0.0)) {
      throw std::invalid_argument("LbfgsSolver::set_history: non-positive curvature pair");
    }
    rho_.push_back(1.0 / sy);
  }
  s_ = std::move(s);
  y_ = std::move(y);
}

void LbfgsSolver::push_pair(const Vec& s, const Vec& y_raw) {
  const double ss = s.squaredNorm();
  if (!(ss > 0.0)) return;
  // Armijo acceptance alone does not guarantee s.y > 0, and a skipped pair
  // leaves the curvature scale stale. Powell damping blends y toward B0 s
  // (B0 = I/gamma) just enough to keep the implicit Hessian positive
  // definite, so every accepted step refreshes the history.
  double gamma = 1.0;
  if (!y_.empty()) {
    const Vec& yl = y_.back();
    gamma = s_.back().dot(yl) / yl.dot(yl);
  }
  const double sy = s.dot(y_raw);
  const double sBs = ss / gamma;
  Vec y = y_raw;
  if (sy < 0.2 * sBs) {
    const double theta = 0.8 * sBs / (sBs - sy);
    y = theta * y_raw + ((1.0 - theta) / gamma) * s;
  }
  const double sy_safe = s.dot(y);
  if (!(sy_safe > 0.0) || !std::isfinite(sy_safe)) return;
  if (static_cast<int>(s_.size()) == cfg_.history) {
    s_.erase(s_.begin());
    y_.erase(y_.begin());
    rho_.erase(rho_.begin());
  }
  s_.push_back(s);
  y_.push_back(std::move(y));
  rho_.push_back(1.0 / sy_safe);
}

Vec LbfgsSolver::search_direction(const Vec& g) const {
  const int k = static_cast<int>(s_.size());
  Vec q = g;
  std::vector<double> alpha(static_cast<std::size_t>(k));
  for (int i = k - 1; i >= 0; --i) {
    alpha[static_cast<std::size_t>(i)] = rho_[static_cast<std::size_t>(i)] *
                                         s_[static_cast<std::size_t>(i)].dot(q);
    q -= alpha[static_cast<std::size_t>(i)] * y_[static_cast<std::size_t>(i)];
  }
  if (k > 0) {
    const Vec& y = y_.back();
    q *= s_.back().dot(y) / y.dot(y);
  }
  for (int i = 0; i < k; ++i) {
    const double beta = rho_[static_cast<std::size_t>(i)] *
                        y_[static_cast<std::size_t>(i)].dot(q);
    q += (alpha[static_cast<std::size_t>(i)] - beta) * s_[static_cast<std::size_t>(i)];
  }
  return -q;
}

LbfgsEpochResult LbfgsSolver::run_epoch(const Objective& fg, Vec& theta) {
  LbfgsEpochResult res;
  const Eigen::Index n = theta.size();
  Vec g(n), g_new(n);
  double f = fg(theta, g);

  for (int it = 0; it < cfg_.max_inner; ++it) {
    res.grad_norm = g.norm();
    if (res.grad_norm <= cfg_.grad_tol) {
      res.converged = true;
      break;
    }
    Vec d = search_direction(g);
    double gd = g.dot(d);
    if (!(gd < 0.0)) {
      // Stale curvature produced an ascent direction; fall back to steepest
      // descent with a fresh history.
      reset();
      d = -g;
      gd = g.dot(d);
    }

    double step = 1.0;
    bool accepted = false;
    Vec theta_new(n);
    for (int bt = 0; bt < cfg_.max_backtracks; ++bt) {
      theta_new = theta + step * d;
      const double f_new = fg(theta_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + cfg_.c1 * step * gd) {
        const Vec s = theta_new - theta;
        const Vec y = g_new - g;
        push_pair(s, y);
        theta = theta_new;
        f = f_new;
        g.swap(g_new);
        accepted = true;
        ++res.iterations;
        break;
      }
      step *= cfg_.backtrack;
    }
    if (!accepted) {
      res.line_search_failed = true;
      break;
    }
  }

  res.f = f;
  res.grad_norm = g.norm();
  return res;
}

}  // namespace tubefield
