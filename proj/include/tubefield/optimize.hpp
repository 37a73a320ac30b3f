#ifndef TUBEFIELD_OPTIMIZE_HPP
#define TUBEFIELD_OPTIMIZE_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "tubefield/common.hpp"

namespace tubefield {

/// lr = lr_init / (1 + rate * epoch).
inline double lr_decay(double lr_init, std::int64_t epoch, double rate = 0.007) {
  return lr_init / (1.0 + rate * static_cast<double>(epoch));
}

struct AdamConfig {
  double lr_init = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay = 0.007;  // lr_decay rate per epoch
};

/// Bias-corrected Adam. The learning rate is supplied per call so the
/// caller owns the decay schedule.
struct AdamState {
  Vec m, v;
  std::int64_t step = 0;

  AdamState() = default;
  explicit AdamState(Eigen::Index n) : m(Vec::Zero(n)), v(Vec::Zero(n)) {}

  void update(Vec& theta, const Vec& grad, const AdamConfig& cfg, double lr);
};

struct LbfgsConfig {
  int history = 10;
  int max_inner = 20;     // iterations per outer epoch
  double c1 = 1e-4;       // Armijo sufficient-decrease constant
  double backtrack = 0.5;
  int max_backtracks = 20;
  double grad_tol = 1e-12;  // inner convergence exit on ||g||
};

struct LbfgsEpochResult {
  double f = 0.0;          // objective after the epoch
  double grad_norm = 0.0;  // gradient norm after the epoch
  int iterations = 0;      // accepted inner steps
  bool line_search_failed = false;
  bool converged = false;
};

/// Two-loop-recursion L-BFGS over a value-and-gradient closure. History
/// persists across run_epoch calls, so consecutive epochs continue one
/// minimization; an epoch is a logging/checkpoint boundary. A failed line
/// search ends the epoch early with the state preserved.
class LbfgsSolver {
 public:
  /// Fills grad (preallocated to theta's size) and returns the objective.
  using Objective = std::function<double(const Vec& theta, Vec& grad)>;

  explicit LbfgsSolver(LbfgsConfig cfg = {}) : cfg_(cfg) {}

  LbfgsEpochResult run_epoch(const Objective& fg, Vec& theta);
  void reset() {
    s_.clear();
    y_.clear();
    rho_.clear();
  }

  const LbfgsConfig& config() const { return cfg_; }
  const std::vector<Vec>& history_s() const { return s_; }
  const std::vector<Vec>& history_y() const { return y_; }
  /// Restores a checkpointed history (oldest first).
  void set_history(std::vector<Vec> s, std::vector<Vec> y);

 private:
  Vec search_direction(const Vec& g) const;
  void push_pair(const Vec& s, const Vec& y);

  LbfgsConfig cfg_;
  std::vector<Vec> s_, y_;  // oldest first
  std::vector<double> rho_;
};

}  // namespace tubefield

#endif
