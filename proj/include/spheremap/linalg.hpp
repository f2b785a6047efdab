#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "spheremap/errors.hpp"

// Dense linear-algebra kernels shared by every module. Free functions over
// Eigen expressions, templated on the scalar through MatrixBase.

namespace spheremap::linalg {

template <class Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
struct SvdResult {
  DenseMatrix<Scalar> u;                 // m x r, orthonormal columns
  DenseVector<Scalar> singular_values;   // length r, nonincreasing, nonnegative
  DenseMatrix<Scalar> vt;                // r x n, orthonormal rows
};

namespace detail {

inline std::string sigma_message(double smin, double smax) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "(sigma_min=%.6g, sigma_max=%.6g)", smin, smax);
  return buf;
}

}  // namespace detail

/// Thin SVD a = u * diag(s) * vt. Signs are fixed so that the
/// largest-magnitude entry of each left singular vector is positive, which
/// makes the factors reproducible; the products u*vt and u*s*vt are unchanged.
template <class Derived>
SvdResult<typename Derived::Scalar> svd(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  DenseMatrix<Scalar> dense = a.derived();
  if (!dense.allFinite()) throw InvalidInputError("svd: input has non-finite entries");

  Eigen::BDCSVD<DenseMatrix<Scalar>> dec(dense, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (dec.info() != Eigen::Success) throw NumericalError("svd: decomposition did not converge");

  SvdResult<Scalar> out;
  out.u = dec.matrixU();
  out.singular_values = dec.singularValues();
  out.vt = dec.matrixV().transpose();
  for (Eigen::Index j = 0; j < out.u.cols(); ++j) {
    Eigen::Index imax = 0;
    out.u.col(j).cwiseAbs().maxCoeff(&imax);
    if (out.u(imax, j) < Scalar(0)) {
      out.u.col(j) = -out.u.col(j);
      out.vt.row(j) = -out.vt.row(j);
    }
  }
  return out;
}

/// Singular values only (no factors).
template <class Derived>
DenseVector<typename Derived::Scalar> singular_values(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  DenseMatrix<Scalar> dense = a.derived();
  if (!dense.allFinite()) throw InvalidInputError("singular_values: input has non-finite entries");
  Eigen::BDCSVD<DenseMatrix<Scalar>> dec(dense);
  if (dec.info() != Eigen::Success)
    throw NumericalError("singular_values: decomposition did not converge");
  return dec.singularValues();
}

/// Orthogonal polar factor U(a) = a (a^T a)^{-1/2} of a nonsingular square
/// matrix, computed as u * vt of the SVD.
template <class Derived>
DenseMatrix<typename Derived::Scalar> polar_factor(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  if (a.rows() != a.cols()) throw InvalidInputError("polar_factor: matrix must be square");
  auto dec = svd(a);
  const Scalar smax = dec.singular_values.size() ? dec.singular_values(0) : Scalar(0);
  const Scalar smin =
      dec.singular_values.size() ? dec.singular_values(dec.singular_values.size() - 1) : Scalar(0);
  if (!(smin > Scalar(1e-12) * smax)) {
    throw NumericalError("polar_factor: rank-deficient input " +
                         detail::sigma_message(static_cast<double>(smin),
                                               static_cast<double>(smax)));
  }
  return dec.u * dec.vt;
}

/// Moore-Penrose pseudo-inverse; singular values below rel_tol * sigma_max are
/// treated as zero.
template <class Derived>
DenseMatrix<typename Derived::Scalar> pseudo_inverse(const Eigen::MatrixBase<Derived>& a,
                                                     typename Derived::Scalar rel_tol = 1e-10) {
  using Scalar = typename Derived::Scalar;
  if (rel_tol < Scalar(0)) throw InvalidInputError("pseudo_inverse: rel_tol must be >= 0");
  auto dec = svd(a);
  const Eigen::Index r = dec.singular_values.size();
  const Scalar smax = r ? dec.singular_values(0) : Scalar(0);
  const Scalar cutoff = rel_tol * smax;
  DenseVector<Scalar> inv = DenseVector<Scalar>::Zero(r);
  for (Eigen::Index i = 0; i < r; ++i) {
    const Scalar s = dec.singular_values(i);
    if (s > cutoff && s > Scalar(0)) inv(i) = Scalar(1) / s;
  }
  return dec.vt.transpose() * inv.asDiagonal() * dec.u.transpose();
}

/// Cosine similarity u'v / (|u||v|), clamped to [-1, 1] against round-off.
template <class DerivedU, class DerivedV>
typename DerivedU::Scalar cosine(const Eigen::MatrixBase<DerivedU>& u,
                                 const Eigen::MatrixBase<DerivedV>& v) {
  using Scalar = typename DerivedU::Scalar;
  if (u.size() != v.size()) throw InvalidInputError("cosine: vectors must have equal length");
  const Scalar nu = u.norm();
  const Scalar nv = v.norm();
  if (nu == Scalar(0) || nv == Scalar(0))
    throw InvalidInputError("cosine: zero-norm input");
  return std::clamp(Scalar(u.dot(v) / (nu * nv)), Scalar(-1), Scalar(1));
}

/// Divide each row by its Euclidean norm. Fails on an all-zero row.
template <class Derived>
DenseMatrix<typename Derived::Scalar> row_normalize(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  DenseMatrix<Scalar> out = a.derived();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const Scalar n = out.row(i).norm();
    if (n == Scalar(0))
      throw InvalidInputError("row_normalize: zero row at index " + std::to_string(i));
    out.row(i) /= n;
  }
  return out;
}

}  // namespace spheremap::linalg
