#include "spheremap/regression.hpp"

#include <cstdio>
#include <string>

#include "spheremap/linalg.hpp"

namespace spheremap {

namespace detail {

OrthogonalMatrix procrustes_on_rows(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw InvalidInputError("procrustes_fit: x and y must have the same shape");
  if (x.rows() <= x.cols())
    throw ModelError("procrustes_fit: requires n > p (got n=" + std::to_string(x.rows()) +
                     ", p=" + std::to_string(x.cols()) + ")");
  const Matrix c = x.transpose() * y;
  const auto dec = linalg::svd(c);
  const double smax = dec.singular_values(0);
  const double smin = dec.singular_values(dec.singular_values.size() - 1);
  if (!(smin > 1e-12 * smax)) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "procrustes_fit: X^T Y is rank-deficient, sigma_p=%.6g",
                  smin);
    throw NumericalError(buf);
  }
  return OrthogonalMatrix(dec.u * dec.vt);
}

}  // namespace detail

OrthogonalMatrix procrustes_fit(const SphericalMatrix& x, const SphericalMatrix& y) {
  return detail::procrustes_on_rows(x.matrix(), y.matrix());
}

OrthogonalMatrix procrustes_fit_subset(const SphericalMatrix& x, const SphericalMatrix& y,
                                       const std::vector<Index>& rows) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw InvalidInputError("procrustes_fit_subset: x and y must have the same shape");
  if (static_cast<Index>(rows.size()) <= x.cols())
    throw ModelError("procrustes_fit_subset: needs more than p=" + std::to_string(x.cols()) +
                     " rows, got " + std::to_string(rows.size()));
  Matrix xs(static_cast<Index>(rows.size()), x.cols());
  Matrix ys(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Index i = rows[r];
    if (i < 0 || i >= x.rows())
      throw InvalidInputError("procrustes_fit_subset: row index out of range");
    xs.row(static_cast<Index>(r)) = x.matrix().row(i);
    ys.row(static_cast<Index>(r)) = y.matrix().row(i);
  }
  return detail::procrustes_on_rows(xs, ys);
}

double frobenius_loss(const Matrix& x, const Matrix& y, const Matrix& w) {
  if (x.cols() != w.rows() || y.rows() != x.rows() || y.cols() != w.cols())
    throw InvalidInputError("frobenius_loss: shapes do not conform");
  return (y - x * w).squaredNorm();
}

}  // namespace spheremap
