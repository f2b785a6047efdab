#include "spheremap/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "spheremap/linalg.hpp"
#include "spheremap/parallel.hpp"
#include "spheremap/rng.hpp"

namespace spheremap {

namespace {

constexpr double kZeroRowTol = 1e-12;

std::string sigma_nk_message(double sigma) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "sigma_{n_k}(X_k)=%.6g", sigma);
  return buf;
}

}  // namespace

BlockMappingMatrix::BlockMappingMatrix(GroupPartition partition)
    : partition_(std::move(partition)),
      rows_(static_cast<std::size_t>(partition_.rows())) {
  for (Index i = 0; i < rows(); ++i) rows_[static_cast<std::size_t>(i)] = {RowKind::Identity, i, {}};
}

void BlockMappingMatrix::check_row(Index i) const {
  if (i < 0 || i >= rows()) throw InvalidInputError("BlockMappingMatrix: row index out of range");
}

void BlockMappingMatrix::set_identity(Index i) {
  check_row(i);
  rows_[static_cast<std::size_t>(i)] = {RowKind::Identity, i, {}};
}

void BlockMappingMatrix::set_permuted(Index i, Index j) {
  check_row(i);
  check_row(j);
  if (partition_.group_of(i) != partition_.group_of(j))
    throw InvalidInputError("BlockMappingMatrix: permuted target must stay in the row's group");
  if (j == i) {
    set_identity(i);
    return;
  }
  rows_[static_cast<std::size_t>(i)] = {RowKind::Permuted, j, {}};
}

void BlockMappingMatrix::set_weighted(Index i, Vector group_weights) {
  check_row(i);
  const Index k = partition_.group_of(i);
  if (group_weights.size() != partition_.size(k))
    throw InvalidInputError("BlockMappingMatrix: weight vector must span the group block");
  rows_[static_cast<std::size_t>(i)] = {RowKind::Weighted, -1, std::move(group_weights)};
}

void BlockMappingMatrix::set_unmapped(Index i) {
  check_row(i);
  rows_[static_cast<std::size_t>(i)] = {RowKind::Unmapped, -1, {}};
}

Vector BlockMappingMatrix::row_dense(Index i) const {
  check_row(i);
  Vector out = Vector::Zero(rows());
  const MappingRow& r = rows_[static_cast<std::size_t>(i)];
  switch (r.kind) {
    case RowKind::Identity:
    case RowKind::Permuted:
      out(r.target) = 1.0;
      break;
    case RowKind::Weighted: {
      const Index k = partition_.group_of(i);
      out.segment(partition_.start(k), partition_.size(k)) = r.weights;
      break;
    }
    case RowKind::Unmapped:
      break;
  }
  return out;
}

Matrix BlockMappingMatrix::to_dense() const {
  Matrix out = Matrix::Zero(rows(), rows());
  for (Index i = 0; i < rows(); ++i) out.row(i) = row_dense(i).transpose();
  return out;
}

Matrix BlockMappingMatrix::apply(const Matrix& x) const {
  if (x.rows() != rows()) throw InvalidInputError("BlockMappingMatrix::apply: shape mismatch");
  Matrix out(rows(), x.cols());
  for (Index i = 0; i < rows(); ++i) {
    const MappingRow& r = rows_[static_cast<std::size_t>(i)];
    switch (r.kind) {
      case RowKind::Identity:
      case RowKind::Permuted:
        out.row(i) = x.row(r.target);
        break;
      case RowKind::Weighted: {
        const Index k = partition_.group_of(i);
        out.row(i) =
            r.weights.transpose() * x.middleRows(partition_.start(k), partition_.size(k));
        break;
      }
      case RowKind::Unmapped:
        out.row(i).setZero();
        break;
    }
  }
  return out;
}

RowClasses BlockMappingMatrix::classify() const {
  RowClasses out;
  for (Index i = 0; i < rows(); ++i) {
    const MappingRow& r = rows_[static_cast<std::size_t>(i)];
    if (r.kind == RowKind::Identity && r.target == i) {
      out.matched.push_back(i);
    } else {
      out.mismatched.push_back(i);
      if (r.kind == RowKind::Weighted) out.one_to_many.push_back(i);
    }
  }
  return out;
}

bool BlockMappingMatrix::same_mapping(const BlockMappingMatrix& other, double weight_tol) const {
  if (rows() != other.rows() || !(partition_ == other.partition_)) return false;
  for (Index i = 0; i < rows(); ++i) {
    const MappingRow& a = rows_[static_cast<std::size_t>(i)];
    const MappingRow& b = other.rows_[static_cast<std::size_t>(i)];
    if (a.kind != b.kind || a.target != b.target) return false;
    if (a.kind == RowKind::Weighted &&
        (a.weights - b.weights).cwiseAbs().maxCoeff() > weight_tol)
      return false;
  }
  return true;
}

double BlockMappingMatrix::max_weight_delta(const BlockMappingMatrix& other) const {
  double delta = 0.0;
  for (Index i = 0; i < rows() && i < other.rows(); ++i) {
    const MappingRow& a = rows_[static_cast<std::size_t>(i)];
    const MappingRow& b = other.rows_[static_cast<std::size_t>(i)];
    if (a.kind == RowKind::Weighted && b.kind == RowKind::Weighted &&
        a.weights.size() == b.weights.size())
      delta = std::max(delta, (a.weights - b.weights).cwiseAbs().maxCoeff());
  }
  return delta;
}

void ThresholdConfig::validate(Index groups) const {
  if (!(lambda > 0.0 && lambda < kLambdaMax))
    throw InvalidInputError("ThresholdConfig: lambda must lie in (0, " +
                            std::to_string(kLambdaMax) + ")");
  if (mode == Mode::PriorFraction) {
    if (static_cast<Index>(group_priors.size()) != groups)
      throw InvalidInputError("ThresholdConfig: prior-fraction mode needs one eta_k per group");
    for (double e : group_priors)
      if (!(e >= 0.0 && e <= 1.0))
        throw InvalidInputError("ThresholdConfig: group priors must lie in [0, 1]");
  }
}

Matrix ols_block(const Matrix& y_k, const Matrix& x_k, const Matrix& w_hat) {
  const Index nk = x_k.rows();
  const Index p = x_k.cols();
  if (y_k.rows() != nk || y_k.cols() != p || w_hat.rows() != p || w_hat.cols() != p)
    throw InvalidInputError("ols_block: shapes do not conform");
  if (nk >= p)
    throw ModelError("ols_block: the model requires n_k < p (got n_k=" + std::to_string(nk) +
                     ", p=" + std::to_string(p) + ")");
  const Matrix gram = x_k * x_k.transpose();
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) {
    const auto sv = linalg::singular_values(x_k);
    throw NumericalError("ols_block: group Gram matrix is singular, " +
                         sigma_nk_message(sv(sv.size() - 1)));
  }
  // Solve (X_k X_k') Z = X_k W Y_k'  =>  PI~ = Z'.
  const Matrix rhs = x_k * w_hat * y_k.transpose();
  return llt.solve(rhs).transpose();
}

BlockwiseMatrix ols_blocks(const SphericalMatrix& y, const SphericalMatrix& x,
                           const OrthogonalMatrix& w_hat, const GroupPartition& partition) {
  if (x.rows() != y.rows() || x.cols() != y.cols() || partition.rows() != x.rows() ||
      w_hat.dim() != x.cols())
    throw InvalidInputError("ols_blocks: shapes do not conform");
  BlockwiseMatrix out{partition, std::vector<Matrix>(static_cast<std::size_t>(partition.groups()))};
  parallel_for(partition.groups(), [&](Index k) {
    const Index s = partition.start(k);
    const Index nk = partition.size(k);
    try {
      out.blocks[static_cast<std::size_t>(k)] =
          ols_block(y.matrix().middleRows(s, nk), x.matrix().middleRows(s, nk), w_hat.matrix());
    } catch (const ModelError& e) {
      throw ModelError(std::string(e.what()) + " (group " + std::to_string(k) + ")");
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " (group " + std::to_string(k) + ")");
    }
  });
  return out;
}

BetaResult beta_of_row(const Eigen::Ref<const Vector>& pi_row) {
  if (pi_row.size() == 0) throw InvalidInputError("beta_of_row: empty row");
  const double norm = pi_row.norm();
  if (norm < kZeroRowTol) return {1.0, 0, true};
  Index j = 0;
  pi_row.maxCoeff(&j);  // cos(row, e_j) = row_j / |row|; ties resolve low
  return {1.0 - pi_row(j) / norm, j, false};
}

namespace {

// Per-row effective thresholds for the chosen mode, scaled so the mean equals
// base_lambda. A nonpositive mean weight collapses every threshold to zero.
std::vector<double> effective_thresholds(const BlockwiseMatrix& pi_tilde, double base_lambda,
                                         ThresholdConfig::Mode mode,
                                         const std::vector<double>& priors) {
  const GroupPartition& part = pi_tilde.partition;
  const Index n = part.rows();
  std::vector<double> weights(static_cast<std::size_t>(n), 1.0);

  using Mode = ThresholdConfig::Mode;
  switch (mode) {
    case Mode::Fixed:
      return std::vector<double>(static_cast<std::size_t>(n), base_lambda);
    case Mode::GroupSize:
      for (Index k = 0; k < part.groups(); ++k)
        for (Index i = part.start(k); i < part.start(k) + part.size(k); ++i)
          weights[static_cast<std::size_t>(i)] = std::log(static_cast<double>(part.size(k)));
      break;
    case Mode::PriorFraction:
      if (static_cast<Index>(priors.size()) != part.groups())
        throw InvalidInputError("adaptive_threshold: prior-fraction mode needs eta_k per group");
      for (Index k = 0; k < part.groups(); ++k)
        for (Index i = part.start(k); i < part.start(k) + part.size(k); ++i)
          weights[static_cast<std::size_t>(i)] = priors[static_cast<std::size_t>(k)];
      break;
    case Mode::Flatness:
      for (Index k = 0; k < part.groups(); ++k) {
        const Matrix& block = pi_tilde.blocks[static_cast<std::size_t>(k)];
        for (Index r = 0; r < block.rows(); ++r) {
          const double mx = block.row(r).maxCoeff();
          double w = 0.0;
          if (mx > 0.0)
            w = (block.row(r) / mx - Eigen::RowVectorXd::Ones(block.cols())).norm();
          weights[static_cast<std::size_t>(part.start(k) + r)] = w;
        }
      }
      break;
  }

  double mean = 0.0;
  for (double w : weights) mean += w;
  mean /= static_cast<double>(n);
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  if (mean > 0.0) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = base_lambda * weights[i] / mean;
  }
  return out;
}

// Eq.-style thresholding with per-row thresholds.
BlockMappingMatrix apply_threshold(const BlockwiseMatrix& pi_tilde, const SphericalMatrix& x,
                                   const std::vector<double>& lambdas) {
  const GroupPartition& part = pi_tilde.partition;
  if (x.rows() != part.rows())
    throw InvalidInputError("hard_threshold: x and partition do not conform");
  if (static_cast<Index>(pi_tilde.blocks.size()) != part.groups())
    throw InvalidInputError("hard_threshold: block count does not match the partition");
  BlockMappingMatrix out(part);
  for (Index k = 0; k < part.groups(); ++k) {
    const Index s = part.start(k);
    const Index nk = part.size(k);
    const Matrix& block = pi_tilde.blocks[static_cast<std::size_t>(k)];
    if (block.rows() != nk || block.cols() != nk)
      throw InvalidInputError("hard_threshold: block " + std::to_string(k) +
                              " is not n_k x n_k");
    const auto x_k = x.matrix().middleRows(s, nk);
    for (Index r = 0; r < nk; ++r) {
      const Index i = s + r;
      const Vector row = block.row(r).transpose();
      const BetaResult b = beta_of_row(row);
      if (!b.zero_row && b.beta <= lambdas[static_cast<std::size_t>(i)]) {
        out.set_permuted(i, s + b.j_star);  // collapses to identity when j = i
      } else {
        const double norm = (row.transpose() * x_k).norm();
        if (norm < kZeroRowTol) {
          out.set_unmapped(i);
        } else {
          out.set_weighted(i, row / norm);
        }
      }
    }
  }
  return out;
}

}  // namespace

BlockMappingMatrix hard_threshold(const BlockwiseMatrix& pi_tilde, const SphericalMatrix& x,
                                  const ThresholdConfig& config) {
  config.validate(pi_tilde.partition.groups());
  return apply_threshold(
      pi_tilde, x, effective_thresholds(pi_tilde, config.lambda, config.mode,
                                        config.group_priors));
}

BlockMappingMatrix adaptive_threshold(const BlockwiseMatrix& pi_tilde, const SphericalMatrix& x,
                                      double base_lambda, ThresholdConfig::Mode mode,
                                      const std::vector<double>& priors) {
  ThresholdConfig config{mode, base_lambda, priors};
  config.validate(pi_tilde.partition.groups());
  return apply_threshold(pi_tilde, x, effective_thresholds(pi_tilde, base_lambda, mode, priors));
}

std::vector<double> default_lambda_grid() {
  std::vector<double> grid(20);
  for (int i = 0; i < 20; ++i) grid[static_cast<std::size_t>(i)] = 0.01 + i * (0.27 / 19.0);
  return grid;
}

LambdaSelection select_lambda(const SphericalMatrix& y, const SphericalMatrix& x,
                              const OrthogonalMatrix& w_hat, const GroupPartition& partition,
                              const std::vector<double>& grid, int folds, std::uint64_t seed,
                              ThresholdConfig::Mode mode, const std::vector<double>& priors) {
  if (grid.empty()) throw InvalidInputError("select_lambda: empty grid");
  for (double l : grid)
    if (!(l > 0.0 && l < kLambdaMax))
      throw InvalidInputError("select_lambda: grid values must lie in (0, 1 - 1/sqrt(2))");
  const Index p = x.cols();
  const Index n = x.rows();
  if (y.rows() != n || y.cols() != p || partition.rows() != n || w_hat.dim() != p)
    throw InvalidInputError("select_lambda: shapes do not conform");
  if (folds < 2) throw InvalidInputError("select_lambda: needs at least 2 folds");
  if (folds > p) throw InvalidInputError("select_lambda: more folds than coordinates");

  // Seeded assignment of the p coordinates to folds.
  std::vector<Index> perm(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i) perm[static_cast<std::size_t>(i)] = i;
  SplitMix64 rng = SplitMix64::derive(seed, 0x637620666f6c6473ULL);
  for (Index i = p - 1; i > 0; --i) {
    const Index j = static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  std::vector<int> fold_of(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i)
    fold_of[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] =
        static_cast<int>((i * folds) / p);

  const Index max_nk = partition.max_size();
  for (int f = 0; f < folds; ++f) {
    Index train = 0;
    for (Index c = 0; c < p; ++c)
      if (fold_of[static_cast<std::size_t>(c)] != f) ++train;
    if (train < max_nk)
      throw ModelError("select_lambda: fold " + std::to_string(f) + " leaves " +
                       std::to_string(train) + " training coordinates, fewer than max n_k=" +
                       std::to_string(max_nk));
  }

  const Matrix m = x.matrix() * w_hat.matrix();  // translated predictors

  // Per fold and row: validation loss under the indicator prediction, under
  // the weighted prediction, and the critical base threshold where the row
  // flips between them. Row i is one-to-one at base lambda iff
  // beta_i <= lambda * what_i, i.e. iff lambda >= flip_i (flip_i = +inf when
  // what_i = 0 or the row is zero).
  struct FoldScores {
    std::vector<double> loss_ind, loss_wgt, flip;
  };
  std::vector<FoldScores> fold_scores;
  fold_scores.reserve(static_cast<std::size_t>(folds));

  for (int f = 0; f < folds; ++f) {
    std::vector<Index> train_cols, val_cols;
    for (Index c = 0; c < p; ++c) {
      if (fold_of[static_cast<std::size_t>(c)] == f)
        val_cols.push_back(c);
      else
        train_cols.push_back(c);
    }
    const Index nt = static_cast<Index>(train_cols.size());
    const Index nv = static_cast<Index>(val_cols.size());

    Matrix mt(n, nt), mv(n, nv), yt(n, nt), yv(n, nv);
    for (Index c = 0; c < nt; ++c) {
      mt.col(c) = m.col(train_cols[static_cast<std::size_t>(c)]);
      yt.col(c) = y.matrix().col(train_cols[static_cast<std::size_t>(c)]);
    }
    for (Index c = 0; c < nv; ++c) {
      mv.col(c) = m.col(val_cols[static_cast<std::size_t>(c)]);
      yv.col(c) = y.matrix().col(val_cols[static_cast<std::size_t>(c)]);
    }

    BlockwiseMatrix pi_fold{partition, std::vector<Matrix>(
                                           static_cast<std::size_t>(partition.groups()))};
    parallel_for(partition.groups(), [&](Index k) {
      const Index s = partition.start(k);
      const Index nk = partition.size(k);
      const Matrix mt_k = mt.middleRows(s, nk);
      const Matrix gram = mt_k * mt_k.transpose();
      Eigen::LLT<Matrix> llt(gram);
      if (llt.info() != Eigen::Success) {
        const auto sv = linalg::singular_values(mt_k);
        throw NumericalError("select_lambda: training Gram singular in group " +
                             std::to_string(k) + ", " + sigma_nk_message(sv(sv.size() - 1)));
      }
      pi_fold.blocks[static_cast<std::size_t>(k)] =
          llt.solve(mt_k * yt.middleRows(s, nk).transpose()).transpose();
    });

    std::vector<double> what(static_cast<std::size_t>(n), 1.0);
    if (mode != ThresholdConfig::Mode::Fixed) {
      // Mean-normalized mode weights; base * what_i is the row threshold.
      auto lam1 = effective_thresholds(pi_fold, 1.0, mode, priors);
      what = lam1;
    }

    FoldScores scores;
    scores.loss_ind.assign(static_cast<std::size_t>(n), 0.0);
    scores.loss_wgt.assign(static_cast<std::size_t>(n), 0.0);
    scores.flip.assign(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    for (Index k = 0; k < partition.groups(); ++k) {
      const Index s = partition.start(k);
      const Index nk = partition.size(k);
      const Matrix& block = pi_fold.blocks[static_cast<std::size_t>(k)];
      const auto x_k = x.matrix().middleRows(s, nk);
      const Matrix pred_w = block * mv.middleRows(s, nk);  // unscaled weighted predictions
      for (Index r = 0; r < nk; ++r) {
        const Index i = s + r;
        const Vector row = block.row(r).transpose();
        const BetaResult b = beta_of_row(row);
        const double wh = what[static_cast<std::size_t>(i)];
        if (!b.zero_row && wh > 0.0) scores.flip[static_cast<std::size_t>(i)] = b.beta / wh;

        scores.loss_ind[static_cast<std::size_t>(i)] =
            (yv.row(i) - mv.row(s + b.j_star)).squaredNorm();
        const double norm = (row.transpose() * x_k).norm();
        if (norm < kZeroRowTol) {
          scores.loss_wgt[static_cast<std::size_t>(i)] = yv.row(i).squaredNorm();
        } else {
          scores.loss_wgt[static_cast<std::size_t>(i)] =
              (yv.row(i) - pred_w.row(r) / norm).squaredNorm();
        }
      }
    }
    fold_scores.push_back(std::move(scores));
  }

  LambdaSelection out;
  out.table.reserve(grid.size());
  out.lambda = grid.front();
  double best = std::numeric_limits<double>::infinity();
  for (double lambda : grid) {
    double total = 0.0;
    for (const FoldScores& scores : fold_scores) {
      for (std::size_t i = 0; i < scores.flip.size(); ++i) {
        total += lambda >= scores.flip[i] ? scores.loss_ind[i] : scores.loss_wgt[i];
      }
    }
    out.table.push_back({lambda, total});
    if (total < best || (total == best && lambda < out.lambda)) {  // ties: smallest lambda
      best = total;
      out.lambda = lambda;
    }
  }
  return out;
}

RowClasses classify_rows(const BlockMappingMatrix& pi_hat) { return pi_hat.classify(); }

std::vector<RowFeasibility> row_feasibility(const BlockMappingMatrix& pi,
                                            const SphericalMatrix& x) {
  if (x.rows() != pi.rows()) throw InvalidInputError("row_feasibility: shapes do not conform");
  const GroupPartition& part = pi.partition();
  std::vector<double> sigma_min(static_cast<std::size_t>(part.groups()));
  for (Index k = 0; k < part.groups(); ++k) {
    const auto sv = linalg::singular_values(
        x.matrix().middleRows(part.start(k), part.size(k)).eval());
    sigma_min[static_cast<std::size_t>(k)] = sv(sv.size() - 1);
  }
  std::vector<RowFeasibility> out(static_cast<std::size_t>(pi.rows()));
  for (Index i = 0; i < pi.rows(); ++i) {
    const Index k = part.group_of(i);
    const double nk = static_cast<double>(part.size(k));
    const double smin = sigma_min[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(i)] = {
        pi.row_dense(i).norm(), 1.0 / std::sqrt(nk),
        smin > 0.0 ? 1.0 / smin : std::numeric_limits<double>::infinity()};
  }
  return out;
}

}  // namespace spheremap
