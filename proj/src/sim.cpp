#include "spheremap/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "spheremap/linalg.hpp"
#include "spheremap/parallel.hpp"
#include "spheremap/rng.hpp"
#include "spheremap/vmf.hpp"

namespace spheremap::sim {

namespace {

// Stream tags for the derived substreams of a simulation seed.
enum : std::uint64_t {
  kStreamSizes = 0x73697a6573ULL,
  kStreamCenters = 0x63656e74ULL,
  kStreamMixture = 0x6d697874ULL,
  kStreamX = 0x78ULL,
  kStreamW = 0x77ULL,
  kStreamPi = 0x7069ULL,
  kStreamY = 0x79ULL,
};

Vector random_unit_vector(Index p, SplitMix64& rng) {
  Vector v(p);
  double norm = 0.0;
  do {
    for (Index j = 0; j < p; ++j) v(j) = rng.normal();
    norm = v.norm();
  } while (norm == 0.0);
  return v / norm;
}

Matrix sample_vmf_rows(const Matrix& means, double kappa, std::uint64_t seed,
                       std::uint64_t stream_tag) {
  const Index n = means.rows();
  const Index p = means.cols();
  Matrix out(n, p);
  parallel_for(n, [&](Index i) {
    SplitMix64 rng = SplitMix64::derive(seed ^ stream_tag, static_cast<std::uint64_t>(i));
    if (kappa == 0.0) {
      out.row(i) = random_unit_vector(p, rng).transpose();
      return;
    }
    const double t = vmf::sample_projection(kappa, p, rng);
    Vector w(p - 1);
    double wnorm = 0.0;
    do {
      for (Index j = 0; j + 1 < p; ++j) w(j) = rng.normal();
      wnorm = w.norm();
    } while (wnorm == 0.0);
    Vector y(p);
    y(0) = t;
    y.tail(p - 1) = (std::sqrt(std::max(0.0, 1.0 - t * t)) / wnorm) * w;
    // Householder reflection sending e_1 to the row's mean direction.
    Vector u = -means.row(i).transpose();
    u(0) += 1.0;
    const double unorm2 = u.squaredNorm();
    if (unorm2 > 1e-24) y -= (2.0 * u.dot(y) / unorm2) * u;
    out.row(i) = (y / y.norm()).transpose();
  });
  return out;
}

}  // namespace

void SimConfig::validate() const {
  if (n < 4) throw InvalidInputError("SimConfig: n must be >= 4");
  if (p < 2 || p >= n) throw InvalidInputError("SimConfig: requires 2 <= p < n");
  if (groups < 1) throw InvalidInputError("SimConfig: K must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw InvalidInputError("SimConfig: alpha must lie in [0,1]");
  if (kappa < 0.0) throw InvalidInputError("SimConfig: kappa must be >= 0");
  if (mixture_weight_ratio <= 0.0)
    throw InvalidInputError("SimConfig: mixture weight ratio must be positive");
  if (!(min_beta >= 0.0 && min_beta < 1.0))
    throw InvalidInputError("SimConfig: min_beta must lie in [0,1)");
  if (2 * groups > n)
    throw InvalidInputError("SimConfig: need n >= 2K for the group size schedule");
  if (static_cast<double>(groups) * static_cast<double>(p - 1) < static_cast<double>(n))
    throw InvalidInputError("SimConfig: n exceeds K (p-1), no schedule with n_k < p exists");
}

Index SimConfig::n_mismatch() const {
  const double raw = std::pow(static_cast<double>(n), alpha);
  return std::min<Index>(n, static_cast<Index>(std::llround(raw)));
}

std::vector<Index> group_size_schedule(Index n, Index p, Index groups, double log_sigma,
                                       std::uint64_t seed) {
  SplitMix64 rng = SplitMix64::derive(seed ^ kStreamSizes, 0);
  const double mean_size = static_cast<double>(n) / static_cast<double>(groups);
  const double mu = std::log(mean_size) - 0.5 * log_sigma * log_sigma;
  const Index lo = 2;
  const Index hi = p - 1;
  std::vector<Index> sizes(static_cast<std::size_t>(groups));
  for (auto& s : sizes) {
    const double draw = std::exp(mu + log_sigma * rng.normal());
    s = std::clamp<Index>(static_cast<Index>(std::llround(draw)), lo, hi);
  }
  // Round-robin adjustment to make the sizes sum to n exactly.
  Index total = std::accumulate(sizes.begin(), sizes.end(), Index{0});
  std::size_t at = 0;
  while (total != n) {
    auto& s = sizes[at % sizes.size()];
    if (total < n && s < hi) {
      ++s;
      ++total;
    } else if (total > n && s > lo) {
      --s;
      --total;
    }
    ++at;
    if (at > sizes.size() * static_cast<std::size_t>(hi)) break;  // infeasible; caught below
  }
  if (total != n)
    throw InvalidInputError("group_size_schedule: cannot reach n with sizes in [2, p-1]");
  return sizes;
}

GroundTruth generate(const SimConfig& config) {
  config.validate();
  const Index n = config.n;
  const Index p = config.p;
  const Index big_k = config.groups;

  GroupPartition partition =
      GroupPartition::from_sizes(group_size_schedule(n, p, big_k, config.group_size_log_sigma,
                                                     config.seed));

  // Group centers, uniform on the sphere.
  Matrix centers(big_k, p);
  {
    SplitMix64 rng = SplitMix64::derive(config.seed ^ kStreamCenters, 0);
    for (Index k = 0; k < big_k; ++k) centers.row(k) = random_unit_vector(p, rng).transpose();
  }

  // Mixture component per observation: the own group carries weight
  // mixture_weight_ratio, every other group weight 1.
  std::vector<Index> component(static_cast<std::size_t>(n));
  {
    SplitMix64 rng = SplitMix64::derive(config.seed ^ kStreamMixture, 0);
    const double ratio = config.mixture_weight_ratio;
    for (Index i = 0; i < n; ++i) {
      const Index own = partition.group_of(i);
      if (big_k == 1) {
        component[static_cast<std::size_t>(i)] = 0;
        continue;
      }
      const double p_own = ratio / (ratio + static_cast<double>(big_k - 1));
      if (rng.uniform() < p_own) {
        component[static_cast<std::size_t>(i)] = own;
      } else {
        const Index other =
            static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(big_k - 1));
        component[static_cast<std::size_t>(i)] = other < own ? other : other + 1;
      }
    }
  }

  Matrix x_means(n, p);
  for (Index i = 0; i < n; ++i) x_means.row(i) = centers.row(component[static_cast<std::size_t>(i)]);
  SphericalMatrix x(sample_vmf_rows(x_means, config.kappa, config.seed, kStreamX));

  // True translation: left singular factor of a Gaussian matrix.
  Matrix w_true_raw;
  {
    SplitMix64 rng = SplitMix64::derive(config.seed ^ kStreamW, 0);
    Matrix g(p, p);
    for (Index i = 0; i < p; ++i)
      for (Index j = 0; j < p; ++j) g(i, j) = rng.normal();
    w_true_raw = linalg::svd(g).u;
  }
  OrthogonalMatrix w_true(std::move(w_true_raw));

  BlockMappingMatrix pi = BlockMappingMatrix::identity(partition);
  std::vector<std::string> log;

  const Index n_mis = config.n_mismatch();
  Index quota_weighted;
  Index quota_permuted;
  if (config.scenario == Scenario::PermutationOnly) {
    quota_weighted = 0;
    quota_permuted = n_mis;
  } else {
    quota_weighted = (n_mis + 1) / 2;
    quota_permuted = n_mis - quota_weighted;
  }
  if (quota_permuted % 2 == 1) {  // swaps mark rows in pairs
    --quota_permuted;
    if (config.scenario == Scenario::PermutationOnly) {
      log.push_back("dropped one permutation row to keep swaps paired");
    } else {
      ++quota_weighted;
    }
  }
  if (n_mis < 2) {
    quota_weighted = 0;
    quota_permuted = 0;
    if (n_mis > 0) log.push_back("mismatch quota below 2 rows, planted identity mapping");
  }

  Index planted_permuted = 0;
  Index planted_weighted = 0;
  {
    SplitMix64 rng = SplitMix64::derive(config.seed ^ kStreamPi, 0);
    std::vector<std::uint8_t> used(static_cast<std::size_t>(n), 0);
    std::vector<Index> free_in_group = partition.sizes();

    auto pick_free_row = [&](Index k) {
      // Uniform free row within group k; linear scan is fine at desk scale.
      const Index nk = partition.size(k);
      const Index s = partition.start(k);
      Index pick = static_cast<Index>(
          rng.next_u64() % static_cast<std::uint64_t>(free_in_group[static_cast<std::size_t>(k)]));
      for (Index r = 0; r < nk; ++r) {
        if (!used[static_cast<std::size_t>(s + r)]) {
          if (pick == 0) return s + r;
          --pick;
        }
      }
      throw NumericalError("generate: internal free-row bookkeeping failed");
    };
    auto groups_with_free = [&](Index need) {
      std::vector<Index> ks;
      for (Index k = 0; k < partition.groups(); ++k)
        if (free_in_group[static_cast<std::size_t>(k)] >= need && partition.size(k) >= 2)
          ks.push_back(k);
      return ks;
    };
    auto mark_used = [&](Index i) {
      used[static_cast<std::size_t>(i)] = 1;
      --free_in_group[static_cast<std::size_t>(partition.group_of(i))];
    };

    // In-group swaps, two mismatched rows per draw.
    while (planted_permuted < quota_permuted) {
      const auto ks = groups_with_free(2);
      if (ks.empty()) {
        log.push_back("permutation quota reduced: no group has two free rows");
        break;
      }
      const Index k = ks[static_cast<std::size_t>(
          rng.next_u64() % static_cast<std::uint64_t>(ks.size()))];
      const Index a = pick_free_row(k);
      mark_used(a);
      const Index b = pick_free_row(k);
      mark_used(b);
      pi.set_permuted(a, b);
      pi.set_permuted(b, a);
      planted_permuted += 2;
    }

    // Weighted rows: Uniform(0,1) over the group block, rescaled so the
    // mapped vector stays on the sphere; optionally redrawn until the row is
    // distinguishable from every indicator (beta >= min_beta).
    Index want_weighted =
        quota_weighted + (quota_permuted - planted_permuted);  // reabsorb shortfall
    if (config.scenario == Scenario::PermutationOnly) want_weighted = 0;
    while (planted_weighted < want_weighted) {
      const auto ks = groups_with_free(1);
      if (ks.empty()) {
        log.push_back("weighted quota reduced: no free rows left in eligible groups");
        break;
      }
      const Index k = ks[static_cast<std::size_t>(
          rng.next_u64() % static_cast<std::uint64_t>(ks.size()))];
      const Index i = pick_free_row(k);
      mark_used(i);
      const Index nk = partition.size(k);
      Vector weights(nk);
      bool ok = false;
      for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
        for (Index j = 0; j < nk; ++j) weights(j) = rng.uniform_pos();
        ok = config.min_beta <= 0.0 ||
             1.0 - weights.maxCoeff() / weights.norm() >= config.min_beta;
      }
      if (!ok) {
        weights.setOnes();  // beta = 1 - 1/sqrt(n_k) >= 0.29 for n_k >= 2
        log.push_back("weighted row " + std::to_string(i) +
                      " fell back to equal weights to honor min_beta");
      }
      const double norm =
          (weights.transpose() * x.matrix().middleRows(partition.start(k), nk)).norm();
      pi.set_weighted(i, weights / norm);
      ++planted_weighted;
    }
    if (planted_permuted + planted_weighted != n_mis && n_mis >= 2)
      log.push_back("realized mismatch " +
                    std::to_string(planted_permuted + planted_weighted) + " of quota " +
                    std::to_string(n_mis));
  }

  // Response rows around the mapped and translated means.
  Matrix y_means = pi.apply(x.matrix()) * w_true.matrix();
  for (Index i = 0; i < n; ++i) {
    const double norm = y_means.row(i).norm();
    if (norm == 0.0)
      throw NumericalError("generate: zero mean direction for response row " +
                           std::to_string(i));
    y_means.row(i) /= norm;
  }
  SphericalMatrix y(sample_vmf_rows(y_means, config.kappa, config.seed, kStreamY));

  return {std::move(x),        std::move(y), std::move(w_true),  std::move(pi),
          std::move(partition), std::move(component), planted_permuted, planted_weighted,
          std::move(log)};
}

MtFit mt_baseline_fit(const SphericalMatrix& x, const SphericalMatrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw InvalidInputError("mt_baseline_fit: x and y must have the same shape");
  const Index n = x.rows();
  MtFit out;
  out.w_ols = ols_translation(x.matrix(), y.matrix());
  out.orthogonality_defect =
      (out.w_ols * out.w_ols.transpose() - Matrix::Identity(x.cols(), x.cols())).norm();

  // Candidates are the translated, renormalized X rows; matching is global.
  Matrix t = x.matrix() * out.w_ols;
  for (Index j = 0; j < n; ++j) {
    const double norm = t.row(j).norm();
    if (norm > 0.0) t.row(j) /= norm;
  }
  out.match.assign(static_cast<std::size_t>(n), 0);
  const Index chunk = 512;
  parallel_for((n + chunk - 1) / chunk, [&](Index c) {
    const Index lo = c * chunk;
    const Index hi = std::min(n, lo + chunk);
    const Matrix scores = y.matrix().middleRows(lo, hi - lo) * t.transpose();
    for (Index r = 0; r < hi - lo; ++r) {
      Index best = 0;
      scores.row(r).maxCoeff(&best);  // ties resolve to the lowest index
      out.match[static_cast<std::size_t>(lo + r)] = best;
    }
  });
  return out;
}

Matrix ols_translation(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw InvalidInputError("ols_translation: shapes do not conform");
  const Matrix gram = x.transpose() * x;
  Eigen::LDLT<Matrix> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw NumericalError("ols_translation: X'X is singular");
  return ldlt.solve(x.transpose() * y);
}

MtMetrics evaluate_mt(const MtFit& fit, const GroundTruth& truth,
                      const std::vector<Index>& refit_rows) {
  const Index n = truth.pi.rows();
  MtMetrics m{};
  m.w_mse = (fit.w_ols - truth.w.matrix()).squaredNorm();
  if (static_cast<Index>(refit_rows.size()) > truth.x.cols()) {
    Matrix xs(static_cast<Index>(refit_rows.size()), truth.x.cols());
    Matrix ys(static_cast<Index>(refit_rows.size()), truth.x.cols());
    for (std::size_t r = 0; r < refit_rows.size(); ++r) {
      xs.row(static_cast<Index>(r)) = truth.x.matrix().row(refit_rows[r]);
      ys.row(static_cast<Index>(r)) = truth.y.matrix().row(refit_rows[r]);
    }
    m.w_refit_mse = (ols_translation(xs, ys) - truth.w.matrix()).squaredNorm();
  } else {
    m.w_refit_mse = m.w_mse;
  }

  const RowClasses classes = truth.pi.classify();
  std::vector<bool> is_weighted(static_cast<std::size_t>(n), false);
  for (Index i : classes.one_to_many) is_weighted[static_cast<std::size_t>(i)] = true;

  Index correct = 0, total = 0;
  double weight_sse = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (is_weighted[static_cast<std::size_t>(i)]) {
      Vector row = Vector::Zero(n);
      row(static_cast<Index>(fit.match[static_cast<std::size_t>(i)])) = 1.0;
      weight_sse += (row - truth.pi.row_dense(i)).squaredNorm();
    } else {
      ++total;
      if (fit.match[static_cast<std::size_t>(i)] == truth.pi.row(i).target) ++correct;
    }
  }
  const auto c = static_cast<double>(classes.one_to_many.size());
  m.match_rate = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 1.0;
  m.one_to_many_weight_mse = c > 0 ? weight_sse / (c * static_cast<double>(n)) : 0.0;
  m.detection_rate = 0.0;  // the baseline cannot produce one-to-many rows
  return m;
}

GroupPartition coarse_group_scenario(const GroundTruth& truth, double merge_fraction) {
  const GroupPartition& part = truth.partition;
  if (merge_fraction == 0.0) return part;
  if (!(merge_fraction > 0.0 && merge_fraction <= 1.0))
    throw InvalidInputError("coarse_group_scenario: merge fraction must lie in [0, 1]");
  const Index big_k = part.groups();
  if (big_k < 5) throw InvalidInputError("coarse_group_scenario: requires K >= 5");
  const Index window = std::max<Index>(2, static_cast<Index>(std::llround(2.0 / merge_fraction)));
  std::vector<Index> sizes;
  for (Index k = 0; k < big_k; ++k) {
    if (k % window == 0 && k + 1 < big_k) {
      sizes.push_back(part.size(k) + part.size(k + 1));
      ++k;
    } else {
      sizes.push_back(part.size(k));
    }
  }
  return GroupPartition::from_sizes(sizes);
}

const char* to_string(SweepAxis::Param param) {
  switch (param) {
    case SweepAxis::Param::Alpha: return "alpha";
    case SweepAxis::Param::N: return "n";
    case SweepAxis::Param::K: return "K";
    case SweepAxis::Param::Kappa: return "kappa";
  }
  return "?";
}

SweepTable run_sweep(const SimConfig& base, const SweepAxis& axis, int replicates,
                     const FitConfig& fit_config) {
  if (replicates < 1) throw InvalidInputError("run_sweep: replicates must be >= 1");
  if (axis.values.empty()) throw InvalidInputError("run_sweep: empty axis");
  SweepTable table{axis.param, replicates, {}};

  for (std::size_t cell_idx = 0; cell_idx < axis.values.size(); ++cell_idx) {
    const double value = axis.values[cell_idx];
    SimConfig config = base;
    switch (axis.param) {
      case SweepAxis::Param::Alpha:
        config.alpha = value;
        break;
      case SweepAxis::Param::N: {
        const auto n_new = static_cast<Index>(std::llround(value));
        config.groups = std::max<Index>(
            1, static_cast<Index>(std::llround(static_cast<double>(base.groups) *
                                               static_cast<double>(n_new) /
                                               static_cast<double>(base.n))));
        config.n = n_new;
        break;
      }
      case SweepAxis::Param::K:
        config.groups = static_cast<Index>(std::llround(value));
        break;
      case SweepAxis::Param::Kappa:
        config.kappa = value;
        break;
    }
    config.validate();

    SweepCell cell{value, config, 0, {}, {}, {}};
    MetricSet acc{};
    MtMetrics acc_mt{};
    for (int rep = 0; rep < replicates; ++rep) {
      SimConfig rep_config = config;
      rep_config.seed = SplitMix64::mix(base.seed + 0x9E3779B97F4A7C15ULL * (cell_idx + 1)) +
                        static_cast<std::uint64_t>(rep);
      try {
        const GroundTruth truth = generate(rep_config);
        FitConfig fc = fit_config;
        fc.seed = rep_config.seed;
        const FitReport report = fit(truth.x, truth.y, truth.partition, fc);
        const MetricSet metrics = evaluate_against_truth(report, truth.w, truth.pi);
        const MtFit mt = mt_baseline_fit(truth.x, truth.y);
        const MtMetrics mt_metrics = evaluate_mt(mt, truth, report.pi_hat.classify().matched);

        acc.w1_mse += metrics.w1_mse;
        acc.w1_mse_per_p += metrics.w1_mse_per_p;
        acc.w2_mse += metrics.w2_mse;
        acc.w2_mse_per_p += metrics.w2_mse_per_p;
        acc.match_rate += metrics.match_rate;
        acc.one_to_many_weight_mse += metrics.one_to_many_weight_mse;
        acc.detection_rate += metrics.detection_rate;
        acc_mt.w_mse += mt_metrics.w_mse;
        acc_mt.w_refit_mse += mt_metrics.w_refit_mse;
        acc_mt.match_rate += mt_metrics.match_rate;
        acc_mt.one_to_many_weight_mse += mt_metrics.one_to_many_weight_mse;
        acc_mt.detection_rate += mt_metrics.detection_rate;
        ++cell.replicates_ok;
      } catch (const std::exception& e) {
        cell.failures.push_back("replicate " + std::to_string(rep) + ": " + e.what());
      }
    }
    if (cell.replicates_ok > 0) {
      const double d = cell.replicates_ok;
      cell.isphere = {acc.w1_mse / d,     acc.w1_mse_per_p / d,
                      acc.w2_mse / d,     acc.w2_mse_per_p / d,
                      acc.match_rate / d, acc.one_to_many_weight_mse / d,
                      acc.detection_rate / d};
      cell.mt = {acc_mt.w_mse / d, acc_mt.w_refit_mse / d, acc_mt.match_rate / d,
                 acc_mt.one_to_many_weight_mse / d, acc_mt.detection_rate / d};
    }
    table.cells.push_back(std::move(cell));
  }
  return table;
}

}  // namespace spheremap::sim
