#include "gpomp/variates.hpp"

#include <cmath>

namespace gpomp::variates {

namespace {

// log(k!) minus its Stirling approximation at k + 1.
double stirling_correction(double k) {
  constexpr double half_log_2pi = 0.91893853320467274178;
  return std::lgamma(k + 1.0) - ((k + 0.5) * std::log(k + 1.0) - (k + 1.0) + half_log_2pi);
}

std::int64_t binomial_inversion(Stream& rng, std::int64_t n, double p, double log_q) {
  const double s = p / (1.0 - p);
  const double a = static_cast<double>(n + 1) * s;
  const double r0 = std::exp(static_cast<double>(n) * log_q);
  for (;;) {
    double r = r0;
    double u = rng.uniform();
    std::int64_t x = 0;
    while (u > r) {
      u -= r;
      ++x;
      if (x > n) break;
      r *= a / static_cast<double>(x) - s;
      if (r <= 0.0) break;
    }
    if (x <= n && u <= r) return x;
  }
}

// Hörmann (1993), "The generation of binomial random variates", algorithm BTRD.
std::int64_t binomial_btrd(Stream& rng, std::int64_t n_int, double p) {
  const double n = static_cast<double>(n_int);
  const double m = std::floor((n + 1.0) * p);
  const double r = p / (1.0 - p);
  const double nr = (n + 1.0) * r;
  const double npq = n * p * (1.0 - p);
  const double sqrt_npq = std::sqrt(npq);
  const double b = 1.15 + 2.53 * sqrt_npq;
  const double a = -0.0873 + 0.0248 * b + 0.01 * p;
  const double c = n * p + 0.5;
  const double alpha = (2.83 + 5.1 / b) * sqrt_npq;
  const double v_r = 0.92 - 4.2 / b;
  const double u_rv_r = 0.86 * v_r;

  for (;;) {
    double v = rng.uniform();
    double u;
    if (v <= u_rv_r) {
      u = v / v_r - 0.43;
      return static_cast<std::int64_t>(std::floor((2.0 * a / (0.5 - std::abs(u)) + b) * u + c));
    }
    if (v >= v_r) {
      u = rng.uniform() - 0.5;
    } else {
      u = v / v_r - 0.93;
      u = std::copysign(0.5, u) - u;
      v = rng.uniform() * v_r;
    }
    const double us = 0.5 - std::abs(u);
    const double kd = std::floor((2.0 * a / us + b) * u + c);
    if (kd < 0.0 || kd > n) continue;
    v = v * alpha / (a / (us * us) + b);
    const double km = std::abs(kd - m);
    if (km <= 15.0) {
      double f = 1.0;
      if (m < kd) {
        for (double i = m + 1.0; i <= kd; i += 1.0) f *= nr / i - r;
      } else if (m > kd) {
        for (double i = kd + 1.0; i <= m; i += 1.0) v *= nr / i - r;
      }
      if (v <= f) return static_cast<std::int64_t>(kd);
      continue;
    }
    v = std::log(v);
    const double rho = (km / npq) * (((km / 3.0 + 0.625) * km + 1.0 / 6.0) / npq + 0.5);
    const double t = -km * km / (2.0 * npq);
    if (v < t - rho) return static_cast<std::int64_t>(kd);
    if (v > t + rho) continue;
    const double nm = n - m + 1.0;
    const double h = (m + 0.5) * std::log((m + 1.0) / (r * nm)) + stirling_correction(m) + stirling_correction(n - m);
    const double nk = n - kd + 1.0;
    if (v <= h + (n + 1.0) * std::log(nm / nk) + (kd + 0.5) * std::log(nk * r / (kd + 1.0)) -
                  stirling_correction(kd) - stirling_correction(n - kd))
      return static_cast<std::int64_t>(kd);
  }
}

}  // namespace

std::int64_t binomial(Stream& rng, std::int64_t n, double p) {
  if (n <= 0 || !(p > 0.0)) return 0;
  if (p >= 1.0) return n;
  if (p > 0.5) return n - binomial(rng, n, 1.0 - p);
  if (static_cast<double>(n) * p < 10.0) return binomial_inversion(rng, n, p, std::log1p(-p));
  return binomial_btrd(rng, n, p);
}

FixedBinomial::FixedBinomial(double p) {
  if (!(p > 0.0)) {
    p_ = 0.0;
  } else if (p >= 1.0) {
    p_ = 1.0;
  } else {
    flipped_ = p > 0.5;
    p_ = flipped_ ? 1.0 - p : p;
    log_q_ = std::log1p(-p_);
  }
}

std::int64_t FixedBinomial::operator()(Stream& rng, std::int64_t n) const {
  if (n <= 0 || p_ == 0.0) return 0;
  if (p_ == 1.0) return n;
  const std::int64_t x = static_cast<double>(n) * p_ < 10.0 ? binomial_inversion(rng, n, p_, log_q_)
                                                              : binomial_btrd(rng, n, p_);
  return flipped_ ? n - x : x;
}

std::int64_t poisson(Stream& rng, double mean) {
  if (!(mean > 0.0)) return 0;
  if (mean < 10.0) {
    const double limit = std::exp(-mean);
    std::int64_t x = 0;
    double prod = rng.uniform();
    while (prod > limit) {
      ++x;
      prod *= rng.uniform();
    }
    return x;
  }
  // Hörmann (1993), "The transformed rejection method for generating Poisson
  // random variables", algorithm PTRS.
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform();
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= v_r) return static_cast<std::int64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <= -mean + k * loglam - std::lgamma(k + 1.0))
      return static_cast<std::int64_t>(k);
  }
}

double standard_normal(Stream& rng) {
  // Marsaglia polar method; the second variate of the pair is discarded
  for (;;) {
    const double a = 2.0 * rng.uniform() - 1.0;
    const double b = 2.0 * rng.uniform() - 1.0;
    const double s = a * a + b * b;
    if (s < 1.0 && s > 0.0) return a * std::sqrt(-2.0 * std::log(s) / s);
  }
}

double gamma(Stream& rng, double shape, double scale) {
  if (!(shape > 0.0)) return 0.0;
  if (shape < 1.0) {
    const double boost = std::pow(rng.uniform(), 1.0 / shape);
    return gamma(rng, shape + 1.0, scale) * boost;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
  }
}

}  // namespace gpomp::variates
