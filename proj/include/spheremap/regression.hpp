#pragma once

#include <vector>

#include "spheremap/types.hpp"

// Orthogonal Procrustes estimation of the translation matrix W.

namespace spheremap {

/// argmin_{W W^T = I} |Y - X W|_F^2 = U(X^T Y). Requires n > p and a
/// nonsingular X^T Y; fails reporting sigma_p(X^T Y) otherwise.
OrthogonalMatrix procrustes_fit(const SphericalMatrix& x, const SphericalMatrix& y);

/// Procrustes fit restricted to the given rows (e.g. the estimated matched
/// set). Requires |rows| > p.
OrthogonalMatrix procrustes_fit_subset(const SphericalMatrix& x, const SphericalMatrix& y,
                                       const std::vector<Index>& rows);

/// |y - x w|_F^2. For unit-row inputs this equals 2n - 2 sum_i cos(Y_i, W'X_i).
double frobenius_loss(const Matrix& x, const Matrix& y, const Matrix& w);

namespace detail {
// Shared by procrustes_fit and the pipeline's corrected refinement, where the
// paired rows are assembled by the caller.
OrthogonalMatrix procrustes_on_rows(const Matrix& x, const Matrix& y);
}  // namespace detail

}  // namespace spheremap
