#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "spheremap/linalg.hpp"
#include "spheremap/rng.hpp"
#include "spheremap/types.hpp"

namespace test_util {

using spheremap::Index;
using spheremap::Matrix;
using spheremap::SplitMix64;
using spheremap::Vector;

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

inline Matrix random_orthogonal(Index p, std::uint64_t seed) {
  return spheremap::linalg::svd(random_matrix(p, p, seed)).u;
}

inline Matrix random_unit_rows(Index rows, Index cols, std::uint64_t seed) {
  Matrix m = random_matrix(rows, cols, seed);
  for (Index i = 0; i < rows; ++i) m.row(i) /= m.row(i).norm();
  return m;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// CDF of t = mu'Z for Z ~ vMF(kappa, p), by composite Simpson integration of
/// exp(kappa t)(1 - t^2)^{(p-3)/2} on [-1, 1], normalized. Evaluation by
/// linear interpolation on the grid.
class ProjectionCdf {
 public:
  ProjectionCdf(double kappa, Index p, Index intervals = 200000)
      : lo_(-1.0), hi_(1.0), step_((hi_ - lo_) / static_cast<double>(intervals)) {
    const double expo = 0.5 * (static_cast<double>(p) - 3.0);
    // Work relative to the density maximum to avoid overflow.
    double log_max = -1e300;
    const Index grid = intervals;
    auto log_f = [&](double t) {
      const double one_minus = std::max(0.0, 1.0 - t * t);
      if (one_minus == 0.0 && expo != 0.0) return expo > 0 ? -1e300 : 1e300;
      return kappa * t + (expo == 0.0 ? 0.0 : expo * std::log(one_minus));
    };
    for (Index i = 0; i <= grid; ++i) log_max = std::max(log_max, log_f(lo_ + step_ * i));
    cum_.resize(static_cast<std::size_t>(grid) + 1, 0.0);
    double acc = 0.0;
    double prev = std::exp(log_f(lo_) - log_max);
    for (Index i = 1; i <= grid; ++i) {
      const double t = lo_ + step_ * i;
      const double mid = std::exp(log_f(t - 0.5 * step_) - log_max);
      const double cur = std::exp(log_f(t) - log_max);
      acc += step_ / 6.0 * (prev + 4.0 * mid + cur);  // Simpson on each cell
      cum_[static_cast<std::size_t>(i)] = acc;
      prev = cur;
    }
    for (auto& c : cum_) c /= acc;
  }

  double operator()(double t) const {
    if (t <= lo_) return 0.0;
    if (t >= hi_) return 1.0;
    const double pos = (t - lo_) / step_;
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return cum_[i] + frac * (cum_[i + 1] - cum_[i]);
  }

 private:
  double lo_, hi_, step_;
  std::vector<double> cum_;
};

/// Two-sided Kolmogorov-Smirnov distance between samples and a CDF.
inline double ks_distance(std::vector<double> samples, const ProjectionCdf& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i + 1) / n));
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
  }
  return d;
}

}  // namespace test_util
