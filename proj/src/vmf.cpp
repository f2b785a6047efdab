#include "spheremap/vmf.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spheremap/parallel.hpp"

namespace spheremap::vmf {

namespace {

constexpr double kPi = 3.14159265358979323846264338328;
constexpr double kLog2Pi = 1.83787706640934548356065947281;

double log_bessel_i_half(double x) {
  // I_{1/2}(x) = sqrt(2/(pi x)) sinh(x), with sinh in log space.
  return 0.5 * (std::log(2.0 / kPi) - std::log(x)) + x + std::log1p(-std::exp(-2.0 * x)) -
         std::log(2.0);
}

double log_bessel_i_zero(double x) {
  if (x <= 50.0) return std::log(std::cyl_bessel_i(0.0, x));
  // Hankel expansion; terms shrink until k ~ 2x, we stop far earlier.
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k <= 30; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= odd * odd / (k * 8.0 * x);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return x - 0.5 * std::log(2.0 * kPi * x) + std::log(sum);
}

void check_half_integer(double nu) {
  const double twice = 2.0 * nu;
  if (nu < 0.0 || twice != std::floor(twice))
    throw InvalidInputError("log_bessel_i: order must be a nonnegative multiple of 1/2");
}

}  // namespace

double bessel_ratio_i(double nu, double x) {
  if (x <= 0.0) throw InvalidInputError("bessel_ratio_i: argument must be positive");
  check_half_integer(nu);
  const int margin = static_cast<int>(std::ceil(std::sqrt(40.0 * std::max(x, 1.0)))) + 60;
  double t = nu + margin;
  double r = x / (t + 1.0 + std::sqrt((t + 1.0) * (t + 1.0) + x * x));
  for (int j = margin - 1; j >= 0; --j) {
    t = nu + j;
    r = 1.0 / (2.0 * (t + 1.0) / x + r);
  }
  return r;
}

double log_bessel_i(double nu, double x) {
  if (x <= 0.0) throw InvalidInputError("log_bessel_i: argument must be positive");
  check_half_integer(nu);
  const double nu0 = nu - std::floor(nu) >= 0.25 ? 0.5 : 0.0;
  const int m = static_cast<int>(std::llround(nu - nu0));
  const double base = nu0 == 0.5 ? log_bessel_i_half(x) : log_bessel_i_zero(x);
  if (m == 0) return base;

  // One backward pass through the ratio recurrence collects every
  // log(I_{t+1}/I_t) on the way from nu0 up to nu.
  const int margin = static_cast<int>(std::ceil(std::sqrt(40.0 * std::max(x, 1.0)))) + 60;
  double t = nu0 + m + margin;
  double r = x / (t + 1.0 + std::sqrt((t + 1.0) * (t + 1.0) + x * x));
  double acc = 0.0;
  for (int j = m + margin - 1; j >= 0; --j) {
    t = nu0 + j;
    r = 1.0 / (2.0 * (t + 1.0) / x + r);
    if (j < m) acc += std::log(r);
  }
  return base + acc;
}

double log_normalizer(Index p, double kappa) {
  if (p < 2) throw InvalidInputError("log_normalizer: dimension must be >= 2");
  if (kappa <= 0.0) throw InvalidInputError("log_normalizer: kappa must be positive");
  const double nu = 0.5 * p - 1.0;
  return nu * std::log(kappa) - 0.5 * p * kLog2Pi - log_bessel_i(nu, kappa);
}

double log_uniform_density(Index p) {
  if (p < 2) throw InvalidInputError("log_uniform_density: dimension must be >= 2");
  // area(S^{p-1}) = 2 pi^{p/2} / Gamma(p/2)
  return -(std::log(2.0) + 0.5 * p * std::log(kPi) - std::lgamma(0.5 * p));
}

VmfParams::VmfParams(Vector mean_direction, double concentration)
    : mu(std::move(mean_direction)), kappa(concentration) {
  if (mu.size() < 2) throw InvalidInputError("VmfParams: dimension must be >= 2");
  if (!(kappa >= 0.0)) throw InvalidInputError("VmfParams: kappa must be >= 0");
  if (std::abs(mu.norm() - 1.0) > 1e-12)
    throw InvalidInputError("VmfParams: mean direction must be unit length");
}

double log_density(const VmfParams& params, const Vector& y) {
  if (y.size() != params.dim())
    throw InvalidInputError("log_density: dimension mismatch");
  if (std::abs(y.norm() - 1.0) > 1e-10)
    throw InvalidInputError("log_density: y must be unit length");
  if (params.kappa == 0.0) return log_uniform_density(params.dim());
  return log_normalizer(params.dim(), params.kappa) + params.kappa * params.mu.dot(y);
}

VmfMoments gamma_kp(double kappa, Index p) {
  if (p < 2) throw InvalidInputError("gamma_kp: dimension must be >= 2");
  if (kappa <= 0.0) throw InvalidInputError("gamma_kp: kappa must be positive");
  const double gamma = bessel_ratio_i(0.5 * p - 1.0, kappa);
  return {gamma, 1.0 - gamma * gamma};
}

double sample_projection(double kappa, Index p, SplitMix64& rng) {
  const double m = 0.5 * (p - 1);
  if (kappa == 0.0) return 2.0 * rng.beta(m, m) - 1.0;
  // Ulrich-Wood envelope, with b in the large-kappa-stable form.
  const double b = (p - 1) / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa +
                                                      static_cast<double>(p - 1) * (p - 1)));
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + (p - 1) * std::log(1.0 - x0 * x0);
  for (;;) {
    const double z = rng.beta(m, m);
    const double u = rng.uniform_pos();
    const double t = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
    if (kappa * t + (p - 1) * std::log(1.0 - x0 * t) - c >= std::log(u)) return t;
  }
}

Matrix sample(const VmfParams& params, Index count, std::uint64_t seed) {
  if (count < 1) throw InvalidInputError("sample: count must be >= 1");
  const Index p = params.dim();
  Matrix out(count, p);

  // Householder reflection taking e_1 to mu maps the tangent construction at
  // the pole onto the requested mean direction.
  Vector u = -params.mu;
  u(0) += 1.0;
  const double unorm2 = u.squaredNorm();
  const bool reflect = unorm2 > 1e-24;

  parallel_for(count, [&](Index i) {
    SplitMix64 rng = SplitMix64::derive(seed, static_cast<std::uint64_t>(i));
    Vector y(p);
    if (params.kappa == 0.0) {
      double norm = 0.0;
      do {
        for (Index j = 0; j < p; ++j) y(j) = rng.normal();
        norm = y.norm();
      } while (norm == 0.0);
      y /= norm;
    } else {
      const double t = sample_projection(params.kappa, p, rng);
      // Uniform direction on S^{p-2} from a normalized Gaussian.
      Vector w(p - 1);
      double wnorm = 0.0;
      do {
        for (Index j = 0; j + 1 < p; ++j) w(j) = rng.normal();
        wnorm = w.norm();
      } while (wnorm == 0.0);
      const double s = std::sqrt(std::max(0.0, 1.0 - t * t)) / wnorm;
      y(0) = t;
      y.tail(p - 1) = s * w;
      if (reflect) y -= (2.0 * u.dot(y) / unorm2) * u;
      y /= y.norm();
    }
    out.row(i) = y.transpose();
  });
  return out;
}

double tail_bound_deviation(double kappa, Index p, double delta) {
  if (p < 4) throw InvalidInputError("tail_bound_deviation: requires p >= 4");
  if (kappa <= 0.0) throw InvalidInputError("tail_bound_deviation: kappa must be positive");
  const double lo = (p - 1) / (2.0 * kappa);
  if (!(delta >= lo && delta <= 2.0))
    throw InvalidInputError("tail_bound_deviation: delta outside [" + std::to_string(lo) +
                            ", 2]");
  const double half = 0.5 * (p - 1);
  const double log_bound =
      -delta * kappa + half * (std::log(kappa) + 1.0) - half * std::log(half / delta);
  return std::clamp(std::exp(log_bound), 0.0, 1.0);
}

GroupSumTailReport group_sum_tail_check(const std::vector<Index>& group_sizes, Index p,
                                        double kappa, std::uint64_t seed, Index trials) {
  if (group_sizes.empty()) throw InvalidInputError("group_sum_tail_check: no groups");
  if (p < 4) throw InvalidInputError("group_sum_tail_check: requires p >= 4");
  if (kappa <= 0.0) throw InvalidInputError("group_sum_tail_check: kappa must be positive");
  if (trials < 1) throw InvalidInputError("group_sum_tail_check: trials must be >= 1");
  Index n_min = group_sizes.front();
  Index n_max = group_sizes.front();
  for (Index s : group_sizes) {
    if (s < 1) throw InvalidInputError("group_sum_tail_check: group sizes must be >= 1");
    n_min = std::min(n_min, s);
    n_max = std::max(n_max, s);
  }
  const auto big_k = static_cast<double>(group_sizes.size());
  if (4.0 * std::log(big_k) > (p - 1) * static_cast<double>(n_min))
    throw InvalidInputError("group_sum_tail_check: requires 4 log K <= (p-1) min_k n_k");

  const double threshold = 4.0 * static_cast<double>(n_max) * (p - 1) / kappa;
  std::vector<std::uint8_t> exceeded(static_cast<std::size_t>(trials), 0);
  parallel_for(trials, [&](Index trial) {
    SplitMix64 rng = SplitMix64::derive(seed, static_cast<std::uint64_t>(trial));
    double max_sum = 0.0;
    for (Index s : group_sizes) {
      double sum = 0.0;
      for (Index l = 0; l < s; ++l) {
        const double t = sample_projection(kappa, p, rng);
        sum += 2.0 * (1.0 - t);  // |Z - mu|^2 for unit Z, mu
      }
      max_sum = std::max(max_sum, sum);
    }
    exceeded[static_cast<std::size_t>(trial)] = max_sum >= threshold ? 1 : 0;
  });

  Index count = 0;
  for (auto e : exceeded) count += e;
  return {threshold, 1.0 / big_k, trials, count,
          static_cast<double>(count) / static_cast<double>(trials)};
}

}  // namespace spheremap::vmf
