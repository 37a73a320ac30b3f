#ifndef TUBEFIELD_SOBOL_HPP
#define TUBEFIELD_SOBOL_HPP

#include "tubefield/common.hpp"

namespace tubefield {

/// n points of the 2D Sobol sequence starting at index `skip` (Gray-code
/// order, 32-bit direction numbers). Dimension 1 is the van der Corput
/// sequence in base 2; dimension 2 uses the primitive polynomial x + 1 with
/// m_1 = 1. skip = 1 drops the origin point, matching the usual convention.
///
/// Returned as an n x 2 matrix with rows in sequence order, all entries in
/// [0, 1). Fully deterministic integer arithmetic.
Mat sobol2d(Eigen::Index n, std::uint64_t skip = 1);

}  // namespace tubefield

#endif
