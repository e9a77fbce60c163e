#pragma once

#include "sqr/common.hpp"

namespace sqr::linalg {

/// Symmetric part (A + A')/2, exactly symmetric in floating point.
Matrix symmetrize(const Matrix& a);

/// Inverse of a symmetric PSD matrix after flooring its eigenvalues at
/// floor_rel * trace / m. Computed by eigendecomposition so the result is
/// exactly symmetric.
Matrix floored_inverse(const Matrix& a, double floor_rel = 1e-10);

/// Symmetric square root of a PSD matrix (negative eigenvalues clipped to 0).
Matrix sqrt_psd(const Matrix& a);

/// Symmetric inverse square root of a positive definite matrix.
Matrix inv_sqrt_pd(const Matrix& a);

double min_eigenvalue(const Matrix& a);

}  // namespace sqr::linalg
