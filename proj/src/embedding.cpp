#include "spheremap/embedding.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "spheremap/linalg.hpp"

namespace spheremap::embedding {

namespace {

constexpr double kSymmetryTol = 1e-12;
constexpr double kZeroRowTol = 1e-12;

void check_counts(const Matrix& counts) {
  if (counts.rows() != counts.cols())
    throw InvalidInputError("CooccurrenceTable: counts must be square");
  for (Index i = 0; i < counts.rows(); ++i)
    for (Index j = 0; j < counts.cols(); ++j) {
      const double c = counts(i, j);
      if (!(c >= 0.0) || c != std::floor(c))
        throw InvalidInputError("CooccurrenceTable: counts must be nonnegative integers");
    }
}

}  // namespace

CooccurrenceTable CooccurrenceTable::from_counts(std::vector<std::string> vocabulary,
                                                 Matrix counts) {
  if (static_cast<Index>(vocabulary.size()) != counts.rows())
    throw InvalidInputError("CooccurrenceTable: vocabulary size does not match counts");
  check_counts(counts);
  if (counts.sum() <= 0.0) throw InvalidInputError("CooccurrenceTable: |D| must be positive");
  return {std::move(vocabulary), std::move(counts)};
}

CooccurrenceTable CooccurrenceTable::from_triplets(std::vector<std::string> vocabulary,
                                                   const std::vector<Triplet>& triplets) {
  const Index v = static_cast<Index>(vocabulary.size());
  Matrix counts = Matrix::Zero(v, v);
  for (const Triplet& t : triplets) {
    if (t.i < 0 || t.i >= v || t.j < 0 || t.j >= v)
      throw InvalidInputError("CooccurrenceTable: triplet index out of range");
    counts(t.i, t.j) += t.count;
  }
  return from_counts(std::move(vocabulary), std::move(counts));
}

SppmiMatrix build_sppmi(const CooccurrenceTable& table, int k, double alpha) {
  if (k < 1) throw InvalidInputError("build_sppmi: shift k must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw InvalidInputError("build_sppmi: alpha must lie in (0, 1]");
  const Matrix& c = table.counts;
  const Index v = c.rows();
  const double total = table.total();
  if (total <= 0.0) throw InvalidInputError("build_sppmi: empty table");

  const Vector row_marginal = c.rowwise().sum();
  const Vector col_marginal = c.colwise().sum().transpose();

  SppmiMatrix out;
  out.shift_k = k;
  out.alpha = alpha;
  out.values = Matrix::Zero(v, v);
  const double log_k = std::log(static_cast<double>(k));
  const double log_total = std::log(total);
  for (Index w = 0; w < v; ++w) {
    if (row_marginal(w) == 0.0 && col_marginal(w) == 0.0) {
      out.zero_marginal.push_back(w);
      continue;  // row stays zero
    }
    for (Index ctx = 0; ctx < v; ++ctx) {
      if (c(w, ctx) == 0.0) continue;  // max with 0 absorbs -inf
      const double val = std::log(c(w, ctx)) - std::log(row_marginal(w)) -
                         alpha * (std::log(col_marginal(ctx)) - log_total) - log_k;
      if (val > 0.0) out.values(w, ctx) = val;
    }
  }
  return out;
}

EmbeddingResult embed(const SppmiMatrix& sppmi, Index p) {
  const Matrix& m = sppmi.values;
  const Index v = m.rows();
  if (m.cols() != v) throw InvalidInputError("embed: SPPMI matrix must be square");
  if (p < 2 || p > v)
    throw InvalidInputError("embed: dimension must lie in [2, |V|], got " + std::to_string(p));

  const auto dec = linalg::svd(m);
  const double smax = dec.singular_values(0);
  Index effective_rank = 0;
  for (Index i = 0; i < dec.singular_values.size(); ++i)
    if (dec.singular_values(i) > 1e-12 * smax && dec.singular_values(i) > 0.0) ++effective_rank;
  if (effective_rank < p)
    throw ModelError("embed: requested dimension " + std::to_string(p) +
                     " exceeds the effective rank " + std::to_string(effective_rank));

  const Vector sqrt_s = dec.singular_values.head(p).cwiseSqrt();
  const bool symmetric = (m - m.transpose()).cwiseAbs().maxCoeff() < kSymmetryTol;
  Matrix rows = dec.u.leftCols(p) * sqrt_s.asDiagonal();
  if (!symmetric) rows += dec.vt.topRows(p).transpose() * sqrt_s.asDiagonal();

  Matrix kept_rows(v, p);
  std::vector<Index> kept_idx, excluded;
  Index kept = 0;
  for (Index i = 0; i < v; ++i) {
    if (rows.row(i).norm() <= kZeroRowTol) {
      excluded.push_back(i);
    } else {
      kept_rows.row(kept++) = rows.row(i);
      kept_idx.push_back(i);
    }
  }
  if (kept == 0) throw ModelError("embed: every embedding row is zero");
  return {SphericalMatrix::normalizing(kept_rows.topRows(kept)), std::move(kept_idx),
          std::move(excluded)};
}

}  // namespace spheremap::embedding
