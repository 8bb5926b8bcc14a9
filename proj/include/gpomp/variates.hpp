#pragma once

// Constant-time samplers for the distributions in the epidemic simulator's
// inner loop.  std:: distributions rebuild their tables on every parameter
// change, which dominates per-particle runtime when every draw has fresh
// parameters.

#include <cstdint>

#include "gpomp/rng.hpp"

namespace gpomp::variates {

/// Binomial(n, p).  Inversion for small means, BTRD transformed rejection
/// otherwise.
std::int64_t binomial(Stream& rng, std::int64_t n, double p);

/// Binomial with a probability fixed across many draws; caches the setup.
class FixedBinomial {
 public:
  explicit FixedBinomial(double p = 0.0);
  std::int64_t operator()(Stream& rng, std::int64_t n) const;

 private:
  double p_ = 0.0;
  double log_q_ = 0.0;
  bool flipped_ = false;
};

/// Poisson(mean).  Multiplication method for small means, PTRS otherwise.
std::int64_t poisson(Stream& rng, double mean);

/// Gamma with the given shape and scale (Marsaglia-Tsang).
double gamma(Stream& rng, double shape, double scale);

/// Standard normal (polar method).
double standard_normal(Stream& rng);

}  // namespace gpomp::variates
