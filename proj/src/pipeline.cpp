#include "spheremap/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "spheremap/linalg.hpp"

namespace spheremap {

namespace {

constexpr double kConvergenceWeightTol = 1e-8;

double mean_translated_cosine(const Matrix& x, const Matrix& y, const Matrix& w,
                              const std::vector<Index>* rows) {
  const Matrix t = x * w;
  if (rows == nullptr) {
    return (y.array() * t.array()).rowwise().sum().mean();
  }
  if (rows->empty()) return 0.0;
  double acc = 0.0;
  for (Index i : *rows) acc += y.row(i).dot(t.row(i));
  return acc / static_cast<double>(rows->size());
}

bool one_to_one_rows_equal(const MappingRow& a, const MappingRow& b) {
  const bool a_ind = a.kind == RowKind::Identity || a.kind == RowKind::Permuted;
  const bool b_ind = b.kind == RowKind::Identity || b.kind == RowKind::Permuted;
  return a_ind && b_ind && a.target == b.target;
}

}  // namespace

void FitConfig::validate() const {
  if (max_iterations < 1) throw InvalidInputError("FitConfig: max_iterations must be >= 1");
  if (cv_folds < 2) throw InvalidInputError("FitConfig: cv_folds must be >= 2");
  if (!fixed_lambda) {
    if (lambda_grid.empty()) throw InvalidInputError("FitConfig: empty lambda grid");
    for (double l : lambda_grid)
      if (!(l > 0.0 && l < kLambdaMax))
        throw InvalidInputError("FitConfig: lambda grid values must lie in (0, 1 - 1/sqrt(2))");
  } else if (!(*fixed_lambda > 0.0 && *fixed_lambda < kLambdaMax)) {
    throw InvalidInputError("FitConfig: fixed lambda must lie in (0, 1 - 1/sqrt(2))");
  }
}

FitReport fit(const SphericalMatrix& x, const SphericalMatrix& y,
              const GroupPartition& partition, const FitConfig& config) {
  const auto start_time = std::chrono::steady_clock::now();
  config.validate();
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw InvalidInputError("fit: x and y must have the same shape");
  if (partition.rows() != x.rows())
    throw InvalidInputError("fit: partition does not cover the rows");
  const Index n = x.rows();
  const Index p = x.cols();
  if (n <= p)
    throw ModelError("fit: the model requires n > p (got n=" + std::to_string(n) +
                     ", p=" + std::to_string(p) + ")");
  for (Index k = 0; k < partition.groups(); ++k) {
    if (partition.size(k) >= p)
      throw ModelError("fit: the model requires max_k n_k < p; group " + std::to_string(k) +
                       " has n_k=" + std::to_string(partition.size(k)) +
                       " with p=" + std::to_string(p));
  }

  OrthogonalMatrix w1 = procrustes_fit(x, y);

  OrthogonalMatrix w_cur = w1;
  std::optional<BlockMappingMatrix> pi_prev;
  std::optional<BlockMappingMatrix> pi_hat;
  OrthogonalMatrix w2 = w1;
  double lambda = config.fixed_lambda.value_or(0.0);
  std::vector<CvEntry> cv_table;
  std::vector<IterationRecord> trace;

  for (int it = 0; it < config.max_iterations; ++it) {
    if (!config.fixed_lambda) {
      // The fold assignment is derived from the seed alone so that a fixed
      // point of steps 2-3 is a genuine fixed point of the whole iteration.
      const LambdaSelection sel =
          select_lambda(y, x, w_cur, partition, config.lambda_grid, config.cv_folds,
                        config.seed, config.threshold.mode, config.threshold.group_priors);
      lambda = sel.lambda;
      cv_table = sel.table;
    }

    const BlockwiseMatrix pi_tilde = ols_blocks(y, x, w_cur, partition);
    ThresholdConfig threshold = config.threshold;
    threshold.lambda = lambda;
    BlockMappingMatrix pi_new = hard_threshold(pi_tilde, x, threshold);

    const RowClasses classes = pi_new.classify();
    std::vector<Index> fit_rows = classes.matched;
    if (config.refine == RefineMode::CorrectedOneToOne) {
      for (Index i : classes.mismatched) {
        if (pi_new.row(i).kind == RowKind::Permuted) fit_rows.push_back(i);
      }
    }
    if (static_cast<Index>(fit_rows.size()) <= p) {
      if (config.refine == RefineMode::MatchedOnly)
        throw ModelError(
            "fit: estimated matched set has " + std::to_string(fit_rows.size()) +
            " rows, not more than p=" + std::to_string(p) +
            "; consider the corrected-one-to-one refinement mode");
      throw ModelError("fit: only " + std::to_string(fit_rows.size()) +
                       " one-to-one rows available for refinement, need more than p=" +
                       std::to_string(p));
    }

    // Step III: refined Procrustes on the kept rows; permuted rows (when
    // reused) pair Y_i with the X row selected by PI^.
    Matrix xs(static_cast<Index>(fit_rows.size()), p);
    Matrix ys(static_cast<Index>(fit_rows.size()), p);
    for (std::size_t r = 0; r < fit_rows.size(); ++r) {
      const Index i = fit_rows[r];
      xs.row(static_cast<Index>(r)) = x.matrix().row(pi_new.row(i).target);
      ys.row(static_cast<Index>(r)) = y.matrix().row(i);
    }
    w2 = detail::procrustes_on_rows(xs, ys);

    IterationRecord rec;
    rec.lambda = lambda;
    rec.matched = static_cast<Index>(classes.matched.size());
    rec.weighted = static_cast<Index>(classes.one_to_many.size());
    Index permuted = 0, unmapped = 0;
    for (Index i : classes.mismatched) {
      if (pi_new.row(i).kind == RowKind::Permuted) ++permuted;
      if (pi_new.row(i).kind == RowKind::Unmapped) ++unmapped;
    }
    rec.permuted = permuted;
    rec.unmapped = unmapped;
    rec.model_loss = frobenius_loss(pi_new.apply(x.matrix()), y.matrix(), w2.matrix());
    rec.converged = pi_prev && pi_new.same_mapping(*pi_prev, kConvergenceWeightTol);
    rec.max_weight_delta = pi_prev ? pi_new.max_weight_delta(*pi_prev) : 0.0;
    trace.push_back(rec);

    const bool stop = rec.converged;
    pi_prev = pi_new;
    pi_hat = std::move(pi_new);
    if (stop) break;
    w_cur = w2;
  }

  const RowClasses classes = pi_hat->classify();
  FitReport report{.w1 = w1,
                   .pi_hat = std::move(*pi_hat),
                   .w2 = w2,
                   .lambda = lambda,
                   .cv_table = std::move(cv_table),
                   .matched_count = static_cast<Index>(classes.matched.size()),
                   .permuted_count = trace.back().permuted,
                   .weighted_count = trace.back().weighted,
                   .unmapped_count = trace.back().unmapped,
                   .loss_w1 = frobenius_loss(x.matrix(), y.matrix(), w1.matrix()),
                   .loss_w2_matched = 0.0,
                   .loss_model = trace.back().model_loss,
                   .sigma_p_x = 0.0,
                   .gamma_hat_initial =
                       mean_translated_cosine(x.matrix(), y.matrix(), w1.matrix(), nullptr),
                   .gamma_hat_refined = 0.0,
                   .iterations = std::move(trace),
                   .runtime_seconds = 0.0};

  const auto sv = linalg::singular_values(x.matrix());
  report.sigma_p_x = sv(sv.size() - 1);
  report.gamma_hat_refined =
      mean_translated_cosine(x.matrix(), y.matrix(), w2.matrix(), &classes.matched);
  double loss_matched = 0.0;
  const Matrix xw2 = x.matrix() * w2.matrix();
  for (Index i : classes.matched) loss_matched += (y.matrix().row(i) - xw2.row(i)).squaredNorm();
  report.loss_w2_matched = loss_matched;

  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return report;
}

MetricSet evaluate_estimates(const OrthogonalMatrix& w1, const OrthogonalMatrix& w2,
                             const BlockMappingMatrix& pi_hat, const OrthogonalMatrix& true_w,
                             const BlockMappingMatrix& true_pi) {
  if (w1.dim() != true_w.dim() || w2.dim() != true_w.dim())
    throw InvalidInputError("evaluate: translation matrices do not conform");
  if (pi_hat.rows() != true_pi.rows())
    throw InvalidInputError("evaluate: mapping matrices do not conform");
  const Index n = pi_hat.rows();
  const double p = static_cast<double>(true_w.dim());

  MetricSet m;
  m.w1_mse = (w1.matrix() - true_w.matrix()).squaredNorm();
  m.w2_mse = (w2.matrix() - true_w.matrix()).squaredNorm();
  m.w1_mse_per_p = m.w1_mse / p;
  m.w2_mse_per_p = m.w2_mse / p;

  const RowClasses truth = true_pi.classify();
  std::vector<bool> is_true_weighted(static_cast<std::size_t>(n), false);
  for (Index i : truth.one_to_many) is_true_weighted[static_cast<std::size_t>(i)] = true;

  Index one_to_one_total = 0, one_to_one_correct = 0;
  Index detected = 0;
  double weight_sse = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (is_true_weighted[static_cast<std::size_t>(i)]) {
      weight_sse += (pi_hat.row_dense(i) - true_pi.row_dense(i)).squaredNorm();
      if (pi_hat.row(i).kind == RowKind::Weighted) ++detected;
    } else {
      ++one_to_one_total;
      if (one_to_one_rows_equal(pi_hat.row(i), true_pi.row(i))) ++one_to_one_correct;
    }
  }
  const Index c = static_cast<Index>(truth.one_to_many.size());
  m.match_rate = one_to_one_total > 0
                     ? static_cast<double>(one_to_one_correct) /
                           static_cast<double>(one_to_one_total)
                     : 1.0;
  m.one_to_many_weight_mse =
      c > 0 ? weight_sse / (static_cast<double>(c) * static_cast<double>(n)) : 0.0;
  m.detection_rate = c > 0 ? static_cast<double>(detected) / static_cast<double>(c) : 1.0;
  return m;
}

MetricSet evaluate_against_truth(const FitReport& report, const OrthogonalMatrix& true_w,
                                 const BlockMappingMatrix& true_pi) {
  return evaluate_estimates(report.w1, report.w2, report.pi_hat, true_w, true_pi);
}

}  // namespace spheremap
