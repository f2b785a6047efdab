#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "spheremap/mapping.hpp"
#include "spheremap/regression.hpp"
#include "spheremap/types.hpp"

// The three-step estimator: Procrustes fit, blockwise OLS + hard-thresholded
// mapping recovery, refined Procrustes on the estimated matched set. Steps 2
// and 3 can be iterated; one pass is the default since the estimates
// stabilize quickly.

namespace spheremap {

enum class RefineMode {
  MatchedOnly,        // step III on S(PI^) only
  CorrectedOneToOne,  // also reuse permuted rows, paired through PI^
};

struct FitConfig {
  ThresholdConfig threshold;                // mode (and lambda when fixed_lambda is set)
  std::vector<double> lambda_grid = default_lambda_grid();
  std::optional<double> fixed_lambda;       // bypass cross-validation
  int cv_folds = 5;
  int max_iterations = 1;
  RefineMode refine = RefineMode::MatchedOnly;
  std::uint64_t seed = 0;

  void validate() const;
};

struct IterationRecord {
  double lambda;
  Index matched, permuted, weighted, unmapped;
  double model_loss;        // |Y - PI^ X W2|_F^2
  bool converged;           // PI^ unchanged relative to the previous iteration
  double max_weight_delta;  // against the previous iteration's weighted rows
};

struct FitReport {
  OrthogonalMatrix w1;
  BlockMappingMatrix pi_hat;
  OrthogonalMatrix w2;
  double lambda;
  std::vector<CvEntry> cv_table;

  Index matched_count, permuted_count, weighted_count, unmapped_count;

  double loss_w1;          // |Y - X W1|_F^2
  double loss_w2_matched;  // |Y_S - X_S W2|_F^2 over the matched set
  double loss_model;       // |Y - PI^ X W2|_F^2

  double sigma_p_x;             // smallest singular value of X
  double gamma_hat_initial;     // mean cos(Y_i, W1' X_i) over all rows
  double gamma_hat_refined;     // mean cos(Y_i, W2' X_i) over the matched set

  std::vector<IterationRecord> iterations;
  double runtime_seconds;
};

FitReport fit(const SphericalMatrix& x, const SphericalMatrix& y,
              const GroupPartition& partition, const FitConfig& config);

struct MetricSet {
  double w1_mse;        // |W1 - W|_F^2
  double w1_mse_per_p;
  double w2_mse;
  double w2_mse_per_p;
  double match_rate;              // correctly matched rows among true one-to-one rows
  double one_to_many_weight_mse;  // |PI^_[C,:] - PI_[C,:]|_F^2 / (|C| n)
  double detection_rate;          // |C^ intersect C| / |C|
};

/// Metrics against simulated ground truth. With no true one-to-many rows the
/// detection rate is vacuously 1 and the weight MSE 0.
MetricSet evaluate_against_truth(const FitReport& report, const OrthogonalMatrix& true_w,
                                 const BlockMappingMatrix& true_pi);

/// Same metrics from the mapping and translation estimates alone (shared by
/// the CLI eval path).
MetricSet evaluate_estimates(const OrthogonalMatrix& w1, const OrthogonalMatrix& w2,
                             const BlockMappingMatrix& pi_hat, const OrthogonalMatrix& true_w,
                             const BlockMappingMatrix& true_pi);

}  // namespace spheremap
