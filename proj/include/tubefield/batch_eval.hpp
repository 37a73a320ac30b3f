#ifndef TUBEFIELD_BATCH_EVAL_HPP
#define TUBEFIELD_BATCH_EVAL_HPP

#include <vector>

#include "tubefield/common.hpp"
#include "tubefield/network.hpp"

namespace tubefield {

/// Which input-derivative jets a batch evaluation should propagate.
/// `mixed` adds the diagonal direction used to extract phi_xt and implies
/// both axis directions.
struct JetRequest {
  bool dx = false;
  bool dt = false;
  bool mixed = false;

  JetRequest normalized() const {
    JetRequest r = *this;
    if (r.mixed) r.dx = r.dt = true;
    return r;
  }
  int n_dirs() const {
    const JetRequest r = normalized();
    return (r.dx ? 1 : 0) + (r.dt ? 1 : 0) + (r.mixed ? 1 : 0);
  }
  // Direction slots in stream order: x, t, diagonal.
  int dir_x() const { return 0; }
  int dir_t() const { return normalized().dx ? 1 : 0; }
  int dir_diag() const { return 2; }
  bool operator==(const JetRequest& o) const {
    const JetRequest a = normalized(), b = o.normalized();
    return a.dx == b.dx && a.dt == b.dt && a.mixed == b.mixed;
  }
};

/// Batched field values and physical-axis derivatives; vectors are empty
/// when the request did not cover them.
struct FieldEval {
  Vec phi, phi_x, phi_t, phi_xx, phi_tt, phi_xt;

  /// p = R A phi + rho phi_t, per point.
  Vec pressure(double R, double A, double rho) const {
    return (R * A) * phi + rho * phi_t;
  }
  Vec pressure(const Vec& RA, double rho) const {
    return RA.cwiseProduct(phi) + rho * phi_t;
  }
  /// p_t = R A phi_t + rho phi_tt.
  Vec pressure_t(double R, double A, double rho) const {
    return (R * A) * phi_t + rho * phi_tt;
  }
  /// u = -A phi_x.
  Vec velocity(double A) const { return (-A) * phi_x; }
  Vec velocity(const Vec& A) const { return -A.cwiseProduct(phi_x); }
  /// u_t = -A phi_xt.
  Vec velocity_t(double A) const { return (-A) * phi_xt; }
};

/// Adjoints of a scalar loss with respect to each head; empty means zero.
struct HeadAdjoints {
  Vec phi, phi_x, phi_t, phi_xx, phi_tt, phi_xt;
};

/// Recorded layer inputs from a taped forward pass, consumed in reverse by
/// backward_from_ffe. `zffe` is only populated by the point-based
/// convenience wrapper; the stream-based API leaves the embedding with the
/// caller (it is cacheable across epochs since the frequencies are frozen).
struct EvalTape {
  std::vector<Mat> stored;
  Mat zffe;
  Eigen::Index n = 0;
  JetRequest req;
};

/// Stacked jet streams of the Fourier-feature embedding for a batch.
/// Column layout: [values | d1 per direction | d2 per direction], each block
/// n columns wide; jets are with respect to the normalized coordinates (the
/// physical scaling enters at the output heads). Row layout: sin(x-tilde)
/// block, cos(x-tilde) block, sin(t-tilde) block, cos(t-tilde) block.
Mat ffe_stream(const NetworkParams& params, const Mat2X& pts, double L,
               double T, const JetRequest& req);

/// Forward pass over a prebuilt embedding stream.
FieldEval forward_from_ffe(const NetworkParams& params, const Mat& zffe,
                           Eigen::Index n, const JetRequest& req, double L,
                           double T, EvalTape* tape = nullptr);

/// Reverse pass: accumulates the parameter gradient of
/// sum_heads <adjoint, head> into grad (layout mirrors params.theta).
void backward_from_ffe(const NetworkParams& params, const EvalTape& tape,
                       const Mat& zffe, const HeadAdjoints& adj, double L,
                       double T, Vec& grad);

/// Point-based convenience wrappers.
FieldEval forward_batch(const NetworkParams& params, const Mat2X& pts,
                        double L, double T, const JetRequest& req,
                        EvalTape* tape = nullptr);
void backward_batch(const NetworkParams& params, const EvalTape& tape,
                    const HeadAdjoints& adj, double L, double T, Vec& grad);

}  // namespace tubefield

#endif
