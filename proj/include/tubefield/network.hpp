#ifndef TUBEFIELD_NETWORK_HPP
#define TUBEFIELD_NETWORK_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tubefield/common.hpp"
#include "tubefield/jet.hpp"

namespace tubefield {

enum class Activation { Snake, Identity };

/// Architecture of the field estimator: Fourier-feature embedding into a
/// residual Snake MLP with a scaled scalar head. The Identity activation
/// exists for test configurations (it makes the network affine in the
/// embedded features, so derivatives have closed forms).
struct NetworkConfig {
  int n_f = 200;             // hidden width
  int n_b = 5;               // residual block count
  int layers_per_block = 3;  // FC+Snake pairs inside each block
  int ffe_size = 50;         // frequencies per input coordinate
  double ffe_sigma = 0.1;    // std dev of the frozen frequency draws
  double xi = 1e-2;          // output scale, velocity-potential units
  double snake_a = 1.0;      // Snake frequency (fixed, not trainable)
  Activation activation = Activation::Snake;
  std::uint64_t seed = 0;

  int feature_dim() const { return 4 * ffe_size; }
  void validate() const;
};

/// Trainable parameter count for a config; 643,401 with the defaults.
std::int64_t param_count(const NetworkConfig& cfg);

struct TensorRef {
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 1;
  Eigen::Index size() const { return rows * cols; }
};

/// Offsets of every trainable tensor inside the flat parameter vector, in
/// declaration order: input FC, the per-block FC stacks, output FC. Matrices
/// are stored column-major.
struct ParamLayout {
  TensorRef w_in, b_in;
  std::vector<TensorRef> w_hidden, b_hidden;  // n_b * layers_per_block each
  TensorRef w_out, b_out;
  Eigen::Index total = 0;

  static ParamLayout make(const NetworkConfig& cfg);
};

/// Frozen embedding plus the flat trainable vector. theta is the single
/// source of truth; layers are Map views into it.
struct NetworkParams {
  NetworkConfig config;
  ParamLayout layout;
  Mat ffe;    // ffe_size x 2; column 0 drives x-tilde, column 1 t-tilde
  Vec theta;  // flat trainable parameters

  Eigen::Map<const Mat> mat(const TensorRef& r) const {
    return {theta.data() + r.offset, r.rows, r.cols};
  }
  Eigen::Map<Mat> mat(const TensorRef& r) {
    return {theta.data() + r.offset, r.rows, r.cols};
  }
};

/// Glorot-uniform weights, zero biases, Normal(0, ffe_sigma^2) frozen
/// frequencies. Draw order (a determinism contract): the ffe matrix in
/// column-major order first, then each weight matrix in declaration order,
/// column-major within the matrix. Biases draw nothing.
NetworkParams init_params(const NetworkConfig& cfg);

enum class Axis { X, T };

/// Scalar reference forward pass. Inputs are physical (x, t) in
/// [0,L] x [0,T]; they are normalized to [-1,1]^2 internally. Loop-based and
/// slow by design: the independent cross-check for the batched engine.
double forward_scalar(const NetworkParams& params, double x, double t,
                      double L, double T);

/// Jet-propagated forward pass along one physical axis; returns exact
/// (phi, dphi/daxis, d2phi/daxis2).
Jet2d forward_jet(const NetworkParams& params, double x, double t, double L,
                  double T, Axis axis);

/// Binary checkpoint I/O. Layout (all little-endian):
///   bytes 0..7   magic "TFCHKPT1"
///   u32 version (=1), u32 reserved (=0)
///   u64 body_len, body_len bytes of body, u64 fnv1a-64 checksum of the body
/// Body: u64 seed; u32 config_len, config JSON; u32 n_tensors; per tensor
/// {u16 name_len, name, u64 count, count f64 values}. Tensors "ffe"
/// (column-major) and "theta" are always present; callers may append named
/// extras (optimizer state) for resumable training.
void save_checkpoint(const NetworkParams& params,
                     const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, Vec>>& extra = {});

NetworkParams load_checkpoint(const std::filesystem::path& path,
                              std::vector<std::pair<std::string, Vec>>* extra = nullptr);

std::string config_to_json(const NetworkConfig& cfg);
NetworkConfig config_from_json(const std::string& text);

}  // namespace tubefield

#endif
