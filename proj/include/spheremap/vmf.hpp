#pragma once

#include <cstdint>
#include <vector>

#include "spheremap/rng.hpp"
#include "spheremap/types.hpp"

// von Mises-Fisher distribution on S^{p-1}: log-density, mean resultant
// length gamma_{kappa,p}, sampling, and tail-bound diagnostics.

namespace spheremap::vmf {

struct VmfParams {
  Vector mu;     // unit mean direction, dimension p >= 2
  double kappa;  // concentration >= 0

  VmfParams(Vector mean_direction, double concentration);
  Index dim() const { return mu.size(); }
};

struct VmfMoments {
  double gamma;  // mean resultant length: E[Y] = gamma * mu
  double eta;    // noise level 1 - gamma^2
};

/// I_{nu+1}(x) / I_nu(x) by backward recurrence with an Amos-type tail start.
/// Stable for x up to 1e5 and half-integer or integer nu >= 0.
double bessel_ratio_i(double nu, double x);

/// log I_nu(x) for nu a nonnegative multiple of 1/2, computed in log space
/// (anchor at nu = 0 or 1/2, then accumulate log ratios).
double log_bessel_i(double nu, double x);

/// log C_p(kappa) for kappa > 0.
double log_normalizer(Index p, double kappa);

/// log of the reciprocal surface area of S^{p-1} (the kappa = 0 density).
double log_uniform_density(Index p);

/// Log-density at a unit vector y. kappa = 0 degenerates to the uniform
/// distribution on the sphere.
double log_density(const VmfParams& params, const Vector& y);

/// gamma_{kappa,p} = I_{p/2}(kappa) / I_{p/2-1}(kappa) and eta = 1 - gamma^2.
VmfMoments gamma_kp(double kappa, Index p);

/// Draws t = mu'Z for Z ~ vMF (density on [-1,1] proportional to
/// exp(kappa t)(1-t^2)^{(p-3)/2}) with the Ulrich-Wood rejection scheme.
double sample_projection(double kappa, Index p, SplitMix64& rng);

/// count i.i.d. draws, one per row. Deterministic given (params, count, seed);
/// rows use independent derived streams so results do not depend on the
/// thread schedule.
Matrix sample(const VmfParams& params, Index count, std::uint64_t seed);

/// Right-hand side of the deviation bound
/// P(eps'mu <= -delta) <= exp{-delta kappa + (p-1)/2 (log kappa + 1)
///                            - (p-1)/2 log((p-1)/(2 delta))},
/// clamped to [0,1]. Valid for p >= 4 and (p-1)/(2 kappa) <= delta <= 2.
double tail_bound_deviation(double kappa, Index p, double delta);

struct GroupSumTailReport {
  double threshold;             // 4 n_max (p-1) / kappa
  double bound;                 // 1/K
  Index trials;
  Index exceed_count;
  double empirical_exceedance;  // exceed_count / trials
};

/// Simulates max_k sum_{l in G_k} |eps|^2 over repeated trials and reports the
/// empirical frequency of exceeding 4 n_max (p-1)/kappa against the 1/K bound.
/// Requires 4 log K <= (p-1) min_k n_k.
GroupSumTailReport group_sum_tail_check(const std::vector<Index>& group_sizes, Index p,
                                        double kappa, std::uint64_t seed, Index trials = 1000);

}  // namespace spheremap::vmf
