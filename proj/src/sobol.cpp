#include "tubefield/sobol.hpp"

#include <array>
#include <stdexcept>

namespace tubefield {

namespace {
constexpr int kBits = 32;

struct Directions {
  std::array<std::uint32_t, kBits> dim1;
  std::array<std::uint32_t, kBits> dim2;
};

Directions make_directions() {
  Directions d{};
  // Dimension 1: v_k = 2^-k, stored as v_k * 2^32.
  for (int k = 0; k < kBits; ++k) d.dim1[k] = 1u << (31 - k);
  // Dimension 2: polynomial x + 1 (degree 1), m_1 = 1,
  // recurrence m_k = 2 m_{k-1} XOR m_{k-1}.
  std::uint32_t m_prev = 1;
  for (int k = 0; k < kBits; ++k) {
    const std::uint32_t m = (k == 0) ? 1u : ((m_prev << 1) ^ m_prev);
    d.dim2[k] = m << (31 - k);
    m_prev = m;
  }
  return d;
}

// X_i = XOR of v_k over the set bits of gray(i) = i ^ (i >> 1).
std::uint32_t point_at(const std::array<std::uint32_t, kBits>& v, std::uint64_t i) {
  std::uint64_t g = i ^ (i >> 1);
  std::uint32_t x = 0;
  for (int k = 0; g != 0 && k < kBits; ++k, g >>= 1) {
    if (g & 1u) x ^= v[k];
  }
  return x;
}
}  // namespace

Mat sobol2d(Eigen::Index n, std::uint64_t skip) {
  if (n < 1) throw std::invalid_argument("sobol2d: n must be >= 1");
  static const Directions dirs = make_directions();
  Mat pts(n, 2);
  constexpr double scale = 0x1.0p-32;
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::uint64_t idx = skip + static_cast<std::uint64_t>(i);
    pts(i, 0) = static_cast<double>(point_at(dirs.dim1, idx)) * scale;
    pts(i, 1) = static_cast<double>(point_at(dirs.dim2, idx)) * scale;
  }
  return pts;
}

}  // namespace tubefield
