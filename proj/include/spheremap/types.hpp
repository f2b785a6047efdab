#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "spheremap/errors.hpp"
#include "spheremap/linalg.hpp"

namespace spheremap {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// n x p matrix whose rows are unit-length vectors on S^{p-1}.
class SphericalMatrix {
 public:
  static constexpr double kRowNormTol = 1e-10;

  explicit SphericalMatrix(Matrix m, double tol = kRowNormTol) : m_(std::move(m)) {
    if (m_.rows() < 1 || m_.cols() < 2)
      throw InvalidInputError("SphericalMatrix: need at least 1 row and 2 columns");
    if (!m_.allFinite()) throw InvalidInputError("SphericalMatrix: non-finite entries");
    for (Index i = 0; i < m_.rows(); ++i) {
      if (std::abs(m_.row(i).norm() - 1.0) > tol)
        throw InvalidInputError("SphericalMatrix: row " + std::to_string(i) +
                                " is not unit length");
    }
  }

  /// Row-normalizes first; fails on all-zero rows.
  static SphericalMatrix normalizing(const Matrix& m) {
    return SphericalMatrix(linalg::row_normalize(m), 1e-12);
  }

  const Matrix& matrix() const { return m_; }
  Index rows() const { return m_.rows(); }
  Index cols() const { return m_.cols(); }

 private:
  Matrix m_;
};

/// p x p matrix W with W W^T = I within 1e-10 max-abs.
class OrthogonalMatrix {
 public:
  static constexpr double kOrthoTol = 1e-10;

  explicit OrthogonalMatrix(Matrix w, double tol = kOrthoTol) : w_(std::move(w)) {
    if (w_.rows() != w_.cols()) throw InvalidInputError("OrthogonalMatrix: must be square");
    const Index p = w_.rows();
    const double defect = (w_ * w_.transpose() - Matrix::Identity(p, p)).cwiseAbs().maxCoeff();
    if (!(defect <= tol))
      throw InvalidInputError("OrthogonalMatrix: W W^T deviates from identity by " +
                              std::to_string(defect));
  }

  const Matrix& matrix() const { return w_; }
  Index dim() const { return w_.rows(); }

 private:
  Matrix w_;
};

/// Ordered partition of row indices 0..n-1 into K contiguous groups.
class GroupPartition {
 public:
  static GroupPartition from_sizes(const std::vector<Index>& sizes) {
    if (sizes.empty()) throw InvalidInputError("GroupPartition: no groups");
    std::vector<Index> starts;
    starts.reserve(sizes.size() + 1);
    starts.push_back(0);
    for (Index s : sizes) {
      if (s < 1) throw InvalidInputError("GroupPartition: group sizes must be >= 1");
      starts.push_back(starts.back() + s);
    }
    return GroupPartition(std::move(starts));
  }

  /// From one group id per row; ids must form contiguous runs.
  static GroupPartition from_group_ids(const std::vector<long long>& ids) {
    if (ids.empty()) throw InvalidInputError("GroupPartition: no rows");
    std::vector<Index> sizes;
    std::vector<long long> seen;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i == 0 || ids[i] != ids[i - 1]) {
        if (std::find(seen.begin(), seen.end(), ids[i]) != seen.end())
          throw InvalidInputError(
              "GroupPartition: group id " + std::to_string(ids[i]) +
              " is not contiguous; reorder rows so each group forms one block");
        seen.push_back(ids[i]);
        sizes.push_back(0);
      }
      ++sizes.back();
    }
    return from_sizes(sizes);
  }

  Index rows() const { return starts_.back(); }
  Index groups() const { return static_cast<Index>(starts_.size()) - 1; }
  Index start(Index k) const { return starts_[static_cast<std::size_t>(k)]; }
  Index size(Index k) const {
    return starts_[static_cast<std::size_t>(k) + 1] - starts_[static_cast<std::size_t>(k)];
  }
  Index group_of(Index row) const {
    auto it = std::upper_bound(starts_.begin(), starts_.end(), row);
    return static_cast<Index>(it - starts_.begin()) - 1;
  }
  std::vector<Index> sizes() const {
    std::vector<Index> out(static_cast<std::size_t>(groups()));
    for (Index k = 0; k < groups(); ++k) out[static_cast<std::size_t>(k)] = size(k);
    return out;
  }
  Index max_size() const {
    Index m = 0;
    for (Index k = 0; k < groups(); ++k) m = std::max(m, size(k));
    return m;
  }
  Index min_size() const {
    Index m = rows();
    for (Index k = 0; k < groups(); ++k) m = std::min(m, size(k));
    return m;
  }

  bool operator==(const GroupPartition& other) const { return starts_ == other.starts_; }

 private:
  explicit GroupPartition(std::vector<Index> starts) : starts_(std::move(starts)) {}
  std::vector<Index> starts_;  // K+1 entries, starts_[K] = n
};

}  // namespace spheremap
