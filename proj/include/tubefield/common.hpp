#ifndef TUBEFIELD_COMMON_HPP
#define TUBEFIELD_COMMON_HPP

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tubefield {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Mat2X = Eigen::Matrix<double, 2, Eigen::Dynamic>;

/// Raised when a numerical scheme leaves its validity domain (blow-up,
/// corrector stall, non-finite loss).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on malformed or inconsistent persisted state (checkpoints, configs).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Vec linspace(double a, double b, Eigen::Index n) {
  if (n < 1) throw std::invalid_argument("linspace: n must be >= 1");
  if (n == 1) return Vec::Constant(1, a);
  return Vec::LinSpaced(n, a, b);
}

/// n points uniform on [a, b): a + i*(b-a)/n. Used for time samples on a
/// periodic interval where b wraps to a.
inline Vec linspace_half_open(double a, double b, Eigen::Index n) {
  if (n < 1) throw std::invalid_argument("linspace_half_open: n must be >= 1");
  Vec out(n);
  const double h = (b - a) / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = a + h * static_cast<double>(i);
  return out;
}

constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(s.data(), s.size());
}

std::string to_hex(std::uint64_t v);

}  // namespace tubefield

#endif
