#include "tubefield/batch_eval.hpp"

#include <cmath>
#include <string>

namespace tubefield {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

void check_finite(const Mat& m, const std::string& layer) {
  if (!m.allFinite()) {
    throw SolverError("network forward: non-finite values at layer " + layer);
  }
}

/// Direction weights (x-tilde component, t-tilde component) per slot.
struct Dirs {
  double wx[3];
  double wt[3];
  int K;
};

Dirs direction_table(const JetRequest& req_in) {
  const JetRequest req = req_in.normalized();
  Dirs d{};
  d.K = 0;
  if (req.dx) {
    d.wx[d.K] = 1.0;
    d.wt[d.K] = 0.0;
    ++d.K;
  }
  if (req.dt) {
    d.wx[d.K] = 0.0;
    d.wt[d.K] = 1.0;
    ++d.K;
  }
  if (req.mixed) {
    d.wx[d.K] = 1.0;
    d.wt[d.K] = 1.0;
    ++d.K;
  }
  return d;
}

/// Y = W Z (+ bias on the value block).
Mat fc_forward(const NetworkParams& p, const TensorRef& wr, const TensorRef& br,
               const Mat& Z, Eigen::Index n) {
  const auto W = p.mat(wr);
  Mat Y(W.rows(), Z.cols());
  Y.noalias() = W * Z;
  Y.leftCols(n).colwise() += p.theta.segment(br.offset, br.rows);
  return Y;
}

Mat snake_forward(const Mat& Z, Eigen::Index n, int K, double a) {
  const auto V = Z.leftCols(n).array();
  const Mat sa = (a * V).sin().matrix();
  const Mat ca = (a * V).cos().matrix();
  // s' = 1 + sin(2az) = 1 + 2 sin cos; s'' = 2a cos(2az) = 2a (cos^2 - sin^2)
  const Mat s1 = (1.0 + 2.0 * sa.array() * ca.array()).matrix();
  const Mat s2 = (2.0 * a * (ca.array().square() - sa.array().square())).matrix();
  Mat R(Z.rows(), Z.cols());
  R.leftCols(n).array() = V + sa.array().square() / a;
  for (int k = 0; k < K; ++k) {
    const auto D1 = Z.middleCols(n * (1 + k), n).array();
    const auto D2 = Z.middleCols(n * (1 + K + k), n).array();
    R.middleCols(n * (1 + K + k), n).array() =
        s2.array() * D1.square() + s1.array() * D2;
    R.middleCols(n * (1 + k), n).array() = s1.array() * D1;
  }
  return R;
}

/// Adjoint of snake_forward: maps output-stream adjoints (in zbar, modified
/// in place) to input-stream adjoints, given the recorded layer input.
void snake_backward(Mat& zbar, const Mat& zin, Eigen::Index n, int K, double a) {
  const auto V = zin.leftCols(n).array();
  const Mat sa = (a * V).sin().matrix();
  const Mat ca = (a * V).cos().matrix();
  const Mat s1 = (1.0 + 2.0 * sa.array() * ca.array()).matrix();
  const Mat s2 = (2.0 * a * (ca.array().square() - sa.array().square())).matrix();
  const Mat s3 = (-8.0 * a * a * sa.array() * ca.array()).matrix();  // s''' = -4a^2 sin(2az)

  Mat vbar_new = zbar.leftCols(n).cwiseProduct(s1);
  for (int k = 0; k < K; ++k) {
    const auto D1 = zin.middleCols(n * (1 + k), n).array();
    const auto D2 = zin.middleCols(n * (1 + K + k), n).array();
    auto d1bar = zbar.middleCols(n * (1 + k), n);
    auto d2bar = zbar.middleCols(n * (1 + K + k), n);
    vbar_new.array() += d1bar.array() * s2.array() * D1 +
                        d2bar.array() * (s3.array() * D1.square() + s2.array() * D2);
    d1bar.array() = d1bar.array() * s1.array() + d2bar.array() * 2.0 * s2.array() * D1;
    d2bar.array() *= s1.array();
  }
  zbar.leftCols(n) = vbar_new;
}

}  // namespace

Mat ffe_stream(const NetworkParams& params, const Mat2X& pts, double L,
               double T, const JetRequest& req_in) {
  const JetRequest req = req_in.normalized();
  const Dirs dirs = direction_table(req);
  const Eigen::Index n = pts.cols();
  const int F = params.config.ffe_size;
  const Eigen::Index M = n * (1 + 2 * dirs.K);

  const Eigen::RowVectorXd xt = ((2.0 / L) * pts.row(0).array() - 1.0).matrix();
  const Eigen::RowVectorXd tt = ((2.0 / T) * pts.row(1).array() - 1.0).matrix();

  Mat Z(4 * F, M);
  for (int k = 0; k < F; ++k) {
    const double wx = kTwoPi * params.ffe(k, 0);
    const double wt = kTwoPi * params.ffe(k, 1);
    const Eigen::RowVectorXd sx = (wx * xt.array()).sin().matrix();
    const Eigen::RowVectorXd cx = (wx * xt.array()).cos().matrix();
    const Eigen::RowVectorXd st = (wt * tt.array()).sin().matrix();
    const Eigen::RowVectorXd ct = (wt * tt.array()).cos().matrix();
    Z.block(k, 0, 1, n) = sx;
    Z.block(F + k, 0, 1, n) = cx;
    Z.block(2 * F + k, 0, 1, n) = st;
    Z.block(3 * F + k, 0, 1, n) = ct;
    for (int d = 0; d < dirs.K; ++d) {
      const double ax = dirs.wx[d], at = dirs.wt[d];
      auto d1 = [&](int row, const Eigen::RowVectorXd& v) {
        Z.block(row, n * (1 + d), 1, n) = v;
      };
      auto d2 = [&](int row, const Eigen::RowVectorXd& v) {
        Z.block(row, n * (1 + dirs.K + d), 1, n) = v;
      };
      d1(k, (wx * ax) * cx);
      d1(F + k, (-wx * ax) * sx);
      d1(2 * F + k, (wt * at) * ct);
      d1(3 * F + k, (-wt * at) * st);
      d2(k, (-wx * wx * ax * ax) * sx);
      d2(F + k, (-wx * wx * ax * ax) * cx);
      d2(2 * F + k, (-wt * wt * at * at) * st);
      d2(3 * F + k, (-wt * wt * at * at) * ct);
    }
  }
  return Z;
}

FieldEval forward_from_ffe(const NetworkParams& params, const Mat& zffe,
                           Eigen::Index n, const JetRequest& req_in, double L,
                           double T, EvalTape* tape) {
  const JetRequest req = req_in.normalized();
  const NetworkConfig& cfg = params.config;
  const Dirs dirs = direction_table(req);
  const int K = dirs.K;
  if (zffe.rows() != cfg.feature_dim() || zffe.cols() != n * (1 + 2 * K)) {
    throw std::invalid_argument("forward_from_ffe: stream shape mismatch");
  }
  if (tape) {
    tape->stored.clear();
    tape->stored.reserve(2 * static_cast<std::size_t>(cfg.n_b) * cfg.layers_per_block + 1);
    tape->n = n;
    tape->req = req;
  }

  // Either the tape or a local slot owns stored layer inputs; `keep` returns
  // a stable reference to the stored matrix.
  Mat local_block_in, local_tmp;
  auto keep = [&](Mat&& z, bool is_block_in) -> const Mat& {
    if (tape) {
      tape->stored.emplace_back(std::move(z));
      return tape->stored.back();
    }
    Mat& slot = is_block_in ? local_block_in : local_tmp;
    slot = std::move(z);
    return slot;
  };

  Mat Z = fc_forward(params, params.layout.w_in, params.layout.b_in, zffe, n);
  check_finite(Z, "input_fc");

  for (int b = 0; b < cfg.n_b; ++b) {
    const Mat* block_in = nullptr;
    for (int l = 0; l < cfg.layers_per_block; ++l) {
      const int li = b * cfg.layers_per_block + l;
      const std::string tag = "block" + std::to_string(b + 1) + "/" + std::to_string(l + 1);
      const Mat& fc_in = keep(std::move(Z), l == 0);
      if (l == 0) block_in = &fc_in;
      Z = fc_forward(params, params.layout.w_hidden[li], params.layout.b_hidden[li], fc_in, n);
      check_finite(Z, "fc_" + tag);
      const Mat& sn_in = keep(std::move(Z), false);
      Z = cfg.activation == Activation::Snake ? snake_forward(sn_in, n, K, cfg.snake_a)
                                              : sn_in;
      check_finite(Z, "snake_" + tag);
    }
    Z += *block_in;
  }

  const Mat& out_in = keep(std::move(Z), true);
  Mat out = fc_forward(params, params.layout.w_out, params.layout.b_out, out_in, n);
  check_finite(out, "output_fc");

  const double xi = cfg.xi;
  const double sx = 2.0 / L, st = 2.0 / T;
  FieldEval ev;
  ev.phi = xi * out.block(0, 0, 1, n).transpose();
  auto d1 = [&](int d) { return out.block(0, n * (1 + d), 1, n).transpose(); };
  auto d2 = [&](int d) { return out.block(0, n * (1 + K + d), 1, n).transpose(); };
  if (req.dx) {
    ev.phi_x = (xi * sx) * d1(req.dir_x());
    ev.phi_xx = (xi * sx * sx) * d2(req.dir_x());
  }
  if (req.dt) {
    ev.phi_t = (xi * st) * d1(req.dir_t());
    ev.phi_tt = (xi * st * st) * d2(req.dir_t());
  }
  if (req.mixed) {
    // The diagonal jet gives phi_dd = phi_xx + 2 phi_xt + phi_tt in
    // normalized coordinates; subtract the axis jets to isolate phi_xt.
    Vec cross = 0.5 * (d2(req.dir_diag()) - d2(req.dir_x()) - d2(req.dir_t()));
    ev.phi_xt = (xi * sx * st) * cross;
  }
  return ev;
}

void backward_from_ffe(const NetworkParams& params, const EvalTape& tape,
                       const Mat& zffe, const HeadAdjoints& adj, double L,
                       double T, Vec& grad) {
  const NetworkConfig& cfg = params.config;
  const JetRequest req = tape.req;
  const Dirs dirs = direction_table(req);
  const int K = dirs.K;
  const Eigen::Index n = tape.n;
  const Eigen::Index M = n * (1 + 2 * K);
  if (grad.size() != params.layout.total) {
    throw std::invalid_argument("backward_from_ffe: gradient size mismatch");
  }
  if (tape.stored.size() != 2 * static_cast<std::size_t>(cfg.n_b) * cfg.layers_per_block + 1) {
    throw std::invalid_argument("backward_from_ffe: tape not from a taped forward");
  }

  const double xi = cfg.xi;
  const double sx = 2.0 / L, st = 2.0 / T;

  // Seed the output-stream adjoint from the head adjoints.
  Mat ybar = Mat::Zero(1, M);
  auto add_block = [&](Eigen::Index c0, const Vec& v, double scale) {
    if (v.size() == 0) return;
    if (v.size() != n) throw std::invalid_argument("backward_from_ffe: adjoint length mismatch");
    ybar.block(0, c0, 1, n) += scale * v.transpose();
  };
  add_block(0, adj.phi, xi);
  if (req.dx) {
    add_block(n * (1 + req.dir_x()), adj.phi_x, xi * sx);
    add_block(n * (1 + K + req.dir_x()), adj.phi_xx, xi * sx * sx);
  } else if (adj.phi_x.size() != 0 || adj.phi_xx.size() != 0) {
    throw std::invalid_argument("backward_from_ffe: x adjoints without dx jets");
  }
  if (req.dt) {
    add_block(n * (1 + req.dir_t()), adj.phi_t, xi * st);
    add_block(n * (1 + K + req.dir_t()), adj.phi_tt, xi * st * st);
  } else if (adj.phi_t.size() != 0 || adj.phi_tt.size() != 0) {
    throw std::invalid_argument("backward_from_ffe: t adjoints without dt jets");
  }
  if (req.mixed) {
    const double cs = 0.5 * xi * sx * st;
    add_block(n * (1 + K + req.dir_diag()), adj.phi_xt, cs);
    add_block(n * (1 + K + req.dir_x()), adj.phi_xt, -cs);
    add_block(n * (1 + K + req.dir_t()), adj.phi_xt, -cs);
  } else if (adj.phi_xt.size() != 0) {
    throw std::invalid_argument("backward_from_ffe: phi_xt adjoint without mixed jets");
  }

  auto gmat = [&grad](const TensorRef& r) {
    return Eigen::Map<Mat>(grad.data() + r.offset, r.rows, r.cols);
  };
  auto gvec = [&grad](const TensorRef& r) {
    return Eigen::Map<Vec>(grad.data() + r.offset, r.rows);
  };

  std::size_t pos = tape.stored.size();
  const Mat& out_in = tape.stored[--pos];
  gmat(params.layout.w_out).noalias() += ybar * out_in.transpose();
  gvec(params.layout.b_out)(0) += ybar.block(0, 0, 1, n).sum();
  Mat zbar(cfg.n_f, M);
  zbar.noalias() = params.mat(params.layout.w_out).transpose() * ybar;

  for (int b = cfg.n_b - 1; b >= 0; --b) {
    Mat skip_bar = zbar;
    for (int l = cfg.layers_per_block - 1; l >= 0; --l) {
      const int li = b * cfg.layers_per_block + l;
      const Mat& sn_in = tape.stored[--pos];
      if (cfg.activation == Activation::Snake) {
        snake_backward(zbar, sn_in, n, K, cfg.snake_a);
      }
      const Mat& fc_in = tape.stored[--pos];
      gmat(params.layout.w_hidden[li]).noalias() += zbar * fc_in.transpose();
      gvec(params.layout.b_hidden[li]).noalias() += zbar.leftCols(n).rowwise().sum();
      Mat prev(cfg.n_f, M);
      prev.noalias() = params.mat(params.layout.w_hidden[li]).transpose() * zbar;
      zbar = std::move(prev);
    }
    zbar += skip_bar;
  }

  gmat(params.layout.w_in).noalias() += zbar * zffe.transpose();
  gvec(params.layout.b_in).noalias() += zbar.leftCols(n).rowwise().sum();
}

FieldEval forward_batch(const NetworkParams& params, const Mat2X& pts,
                        double L, double T, const JetRequest& req,
                        EvalTape* tape) {
  Mat zffe = ffe_stream(params, pts, L, T, req);
  if (tape) {
    tape->zffe = std::move(zffe);
    return forward_from_ffe(params, tape->zffe, pts.cols(), req, L, T, tape);
  }
  return forward_from_ffe(params, zffe, pts.cols(), req, L, T, nullptr);
}

void backward_batch(const NetworkParams& params, const EvalTape& tape,
                    const HeadAdjoints& adj, double L, double T, Vec& grad) {
  backward_from_ffe(params, tape, tape.zffe, adj, L, T, grad);
}

}  // namespace tubefield
