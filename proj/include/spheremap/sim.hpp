#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spheremap/mapping.hpp"
#include "spheremap/pipeline.hpp"
#include "spheremap/types.hpp"

// Synthetic data generator and experiment harness: mixture-vMF design matrix,
// planted mapping and translation matrices, metric sweeps, and the
// nearest-neighbor OLS baseline.

namespace spheremap::sim {

enum class Scenario { Standard, PermutationOnly, LowNoise };

struct SimConfig {
  Index n = 8000;
  Index p = 300;
  double kappa = 150.0;
  Index groups = 100;   // K
  double alpha = 0.8;   // n_mis = round(n^alpha)
  double mixture_weight_ratio = 2.0;  // own-group weight vs each other group
  double group_size_log_sigma = 0.6;  // spread of the log-normal size schedule
  double min_beta = 0.0;  // enforced lower bound on beta_i of weighted rows
  std::uint64_t seed = 0;
  Scenario scenario = Scenario::Standard;

  void validate() const;
  Index n_mismatch() const;  // round(n^alpha)
};

struct GroundTruth {
  SphericalMatrix x;
  SphericalMatrix y;
  OrthogonalMatrix w;
  BlockMappingMatrix pi;
  GroupPartition partition;
  std::vector<Index> mixture_component;  // realized component per row
  Index n_permuted;
  Index n_weighted;
  std::vector<std::string> log;  // quota redistributions etc.
};

/// X from a K-component vMF mixture (own-group weight twice the others), W as
/// the left singular factor of a Gaussian matrix, PI with round(n^alpha)
/// mismatched rows (half in-group permutations, half Uniform(0,1) weight rows
/// rescaled onto the sphere), and Y ~ vMF with mean directions PI X W.
/// Bit-identical output for a fixed config.
GroundTruth generate(const SimConfig& config);

/// Unequal group sizes from a seeded discretized log-normal clipped to
/// [2, p-1] and adjusted to sum to n.
std::vector<Index> group_size_schedule(Index n, Index p, Index groups, double log_sigma,
                                       std::uint64_t seed);

struct MtFit {
  Matrix w_ols;              // unconstrained OLS translation; not orthogonal
  std::vector<Index> match;  // cosine-nearest translated row, no group info
  double orthogonality_defect;  // |W W' - I|_F
};

/// The machine-translation style baseline: OLS translation plus global
/// nearest-neighbor matching; one-to-one only by construction.
MtFit mt_baseline_fit(const SphericalMatrix& x, const SphericalMatrix& y);

struct MtMetrics {
  double w_mse;          // |W_ols - W|_F^2
  double w_refit_mse;    // OLS refit on the supplied rows
  double match_rate;
  double one_to_many_weight_mse;
  double detection_rate;  // always 0
};

/// Metrics for the baseline; refit_rows is the estimated matched set used for
/// the refined OLS translation.
MtMetrics evaluate_mt(const MtFit& fit, const GroundTruth& truth,
                      const std::vector<Index>& refit_rows);

/// Plain OLS translation (X'X)^{-1} X'Y, optionally on a subset of rows.
Matrix ols_translation(const Matrix& x, const Matrix& y);

/// Coarsened partition: merges the first two groups out of every window of
/// round(2/merge_fraction) groups (the 2-in-5 rule at merge_fraction = 0.4).
/// merge_fraction = 0 returns the partition unchanged.
GroupPartition coarse_group_scenario(const GroundTruth& truth, double merge_fraction);

struct SweepAxis {
  enum class Param { Alpha, N, K, Kappa };
  Param param = Param::Alpha;
  std::vector<double> values;
};

struct SweepCell {
  double value;
  SimConfig config;        // resolved configuration for the cell
  int replicates_ok = 0;
  MetricSet isphere;       // means over successful replicates
  MtMetrics mt;            // means over successful replicates
  std::vector<std::string> failures;
};

struct SweepTable {
  SweepAxis::Param param;
  int replicates;
  std::vector<SweepCell> cells;
};

/// For every grid value and replicate: generate, fit, evaluate both methods;
/// per-cell means. Replicate failures are recorded without aborting the sweep.
/// Varying N rescales K proportionally so group sizes keep their distribution.
SweepTable run_sweep(const SimConfig& base, const SweepAxis& axis, int replicates,
                     const FitConfig& fit_config);

const char* to_string(SweepAxis::Param param);

}  // namespace spheremap::sim
