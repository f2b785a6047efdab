#pragma once

#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "spheremap/types.hpp"

// Step II of the estimator: blockwise OLS estimate of the mapping matrix,
// hard-thresholding with a tuned (or adaptive) threshold, and coordinate-fold
// cross-validation for the threshold.

namespace spheremap {

/// Thresholds live in the open interval (0, 1 - 1/sqrt(2)): past the upper
/// bound at most one in-group indicator can be that close to a row.
inline constexpr double kLambdaMax = 1.0 - 1.0 / std::numbers::sqrt2;

enum class RowKind {
  Identity,  // row equals its own indicator I_i
  Permuted,  // row equals an in-group indicator I_j, j != i
  Weighted,  // dense weight vector over the group block, |row X| = 1
  Unmapped   // all-zero row (diagnostic; the model allows unlinked units)
};

struct MappingRow {
  RowKind kind = RowKind::Identity;
  Index target = -1;  // absolute column of the indicator (Identity/Permuted)
  Vector weights;     // group-block weights (Weighted only)
};

struct RowClasses {
  std::vector<Index> matched;      // S: rows equal to their own identity row
  std::vector<Index> mismatched;   // D = S^c
  std::vector<Index> one_to_many;  // C-hat: weighted rows, subset of D
};

/// Block-diagonal n x n mapping matrix: each row only touches its own group
/// block, stored per row as an indicator or a weight vector.
class BlockMappingMatrix {
 public:
  explicit BlockMappingMatrix(GroupPartition partition);

  static BlockMappingMatrix identity(GroupPartition partition) {
    return BlockMappingMatrix(std::move(partition));
  }

  Index rows() const { return static_cast<Index>(rows_.size()); }
  const GroupPartition& partition() const { return partition_; }
  const MappingRow& row(Index i) const { return rows_[static_cast<std::size_t>(i)]; }

  void set_identity(Index i);
  void set_permuted(Index i, Index j);
  void set_weighted(Index i, Vector group_weights);
  void set_unmapped(Index i);

  /// Dense row of length n.
  Vector row_dense(Index i) const;
  Matrix to_dense() const;

  /// PI * x, computed blockwise.
  Matrix apply(const Matrix& x) const;

  RowClasses classify() const;

  /// Same tags and targets everywhere, and weighted rows within weight_tol in
  /// max-abs. Used as the iteration convergence test.
  bool same_mapping(const BlockMappingMatrix& other, double weight_tol) const;

  /// Largest absolute weight difference over rows weighted in both (0 when
  /// none are).
  double max_weight_delta(const BlockMappingMatrix& other) const;

 private:
  void check_row(Index i) const;
  GroupPartition partition_;
  std::vector<MappingRow> rows_;
};

/// Per-group dense blocks of the OLS estimate PI~.
struct BlockwiseMatrix {
  GroupPartition partition;
  std::vector<Matrix> blocks;  // blocks[k] is n_k x n_k
};

struct ThresholdConfig {
  enum class Mode { Fixed, GroupSize, PriorFraction, Flatness };
  Mode mode = Mode::Fixed;
  double lambda = 0.1;  // base threshold, in (0, kLambdaMax)
  std::vector<double> group_priors;  // eta_k per group (PriorFraction mode)

  void validate(Index groups) const;
};

/// PI~^k = Y_k (X_k W)' (X_k X_k')^{-1}. Requires n_k < p and a
/// well-conditioned group Gram matrix.
Matrix ols_block(const Matrix& y_k, const Matrix& x_k, const Matrix& w_hat);

/// All group blocks; groups are independent and run in parallel.
BlockwiseMatrix ols_blocks(const SphericalMatrix& y, const SphericalMatrix& x,
                           const OrthogonalMatrix& w_hat, const GroupPartition& partition);

struct BetaResult {
  double beta;     // 1 - max_j cos(row, e_j); 1 for an all-zero row
  Index j_star;    // argmax, local to the block, ties to the lowest index
  bool zero_row;   // flagged: beta defined as 1
};

/// beta_i = 1 - max over in-group indicators of cos(pi_row, e_j).
BetaResult beta_of_row(const Eigen::Ref<const Vector>& pi_row);

/// Hard-thresholding rule: an indicator row when beta <= lambda, otherwise the
/// row rescaled so |(PI_i. X)'| = 1. Rows whose translated vector is
/// numerically zero come out as flagged zero rows.
BlockMappingMatrix hard_threshold(const BlockwiseMatrix& pi_tilde, const SphericalMatrix& x,
                                  const ThresholdConfig& config);

/// The Appendix-style adaptive variants: per-group or per-row thresholds
/// proportional to log(n_k), eta_k, or the flatness of the OLS row, scaled so
/// the mean effective threshold equals base_lambda.
BlockMappingMatrix adaptive_threshold(const BlockwiseMatrix& pi_tilde, const SphericalMatrix& x,
                                      double base_lambda, ThresholdConfig::Mode mode,
                                      const std::vector<double>& priors = {});

struct CvEntry {
  double lambda;
  double loss;
};

struct LambdaSelection {
  double lambda;
  std::vector<CvEntry> table;
};

/// 20 evenly spaced values in [0.01, 0.28].
std::vector<double> default_lambda_grid();

/// Cross-validated threshold choice. Folds split the p embedding coordinates
/// (columns of X and Y): rows cannot be held out because PI is row-indexed.
/// For each fold, PI~ is refit on the training coordinates and the prediction
/// loss |Y_cv - PI^ X_cv W|_F^2 is accumulated on the held-out ones. Ties pick
/// the smallest lambda. W is held fixed across folds.
LambdaSelection select_lambda(const SphericalMatrix& y, const SphericalMatrix& x,
                              const OrthogonalMatrix& w_hat, const GroupPartition& partition,
                              const std::vector<double>& grid, int folds, std::uint64_t seed,
                              ThresholdConfig::Mode mode = ThresholdConfig::Mode::Fixed,
                              const std::vector<double>& priors = {});

/// (S, D, C-hat) index sets of an estimated mapping.
RowClasses classify_rows(const BlockMappingMatrix& pi_hat);

/// Lemma-style feasibility interval for a unit-mapped row of group k:
/// 1/sqrt(n_k) <= |PI_i.|_2 <= 1/sigma_{n_k}(X_k). Reported for diagnostics.
struct RowFeasibility {
  double norm;
  double lower;
  double upper;
};
std::vector<RowFeasibility> row_feasibility(const BlockMappingMatrix& pi,
                                            const SphericalMatrix& x);

}  // namespace spheremap
