#pragma once

// One-pass filters at fixed parameters: particle filter, block particle
// filter and stochastic ensemble Kalman filter, with the resampling and
// weight utilities they share.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "gpomp/graph.hpp"
#include "gpomp/model.hpp"
#include "gpomp/rng.hpp"

namespace gpomp {

enum class ResampleScheme { systematic, multinomial };

/// Thrown when every weight handed to a resampler is zero.
class DegenerateWeights : public std::runtime_error {
 public:
  DegenerateWeights() : std::runtime_error("degenerate block: all weights are zero") {}
};

struct FilterSettings {
  std::size_t particles = 1000;
  ResampleScheme scheme = ResampleScheme::systematic;
  unsigned threads = 1;
};

/// Ancestor indices, sorted ascending.  Weights must lie on the simplex.
std::vector<std::size_t> systematic_resample(std::span<const double> weights, Stream& rng);
std::vector<std::size_t> multinomial_resample(std::span<const double> weights, Stream& rng);
std::vector<std::size_t> resample(ResampleScheme scheme, std::span<const double> weights, Stream& rng);

/// log((1/J) Σ exp(ℓ_j)), computed after subtracting the largest finite entry.
LogValue log_mean_exp(std::span<const LogValue> log_weights);

/// Writes normalized weights; returns false (and writes uniform weights) when
/// every entry is the zero sentinel.
bool normalize_log_weights(std::span<const LogValue> log_weights, std::span<double> out);

/// 1 / Σ w².
double ess(std::span<const double> normalized_weights);

struct FilterOutput {
  LogValue log_likelihood;
  std::vector<LogValue> step_log_likelihood;  // one per observation time
  std::size_t n_blocks = 0;                   // ESS columns; 0 when weights do not apply (EnKF)
  std::vector<double> ess;                    // n_times x n_blocks
  std::size_t state_dim = 0;
  std::vector<double> filtered_means;         // n_times x state_dim
  std::size_t degenerate_cells = 0;           // (block, time) cells with all-zero weights
  std::size_t particles = 0;

  double ess_at(std::size_t n, std::size_t k) const { return ess[n * n_blocks + k]; }
  double mean_at(std::size_t n, std::size_t i) const { return filtered_means[n * state_dim + i]; }
};

/// Bootstrap particle filter with global weights and resampling every step.
FilterOutput pf_run(const Model& model, const UnitParameterField& theta, const ObservationSeries& data,
                    const FilterSettings& settings, RngKey key);

/// Block particle filter: per-block weights, independent per-block ancestor
/// draws, block-wise reassembly of particles.
FilterOutput bpf_run(const Model& model, const BlockPartition& partition, const UnitParameterField& theta,
                     const ObservationSeries& data, const FilterSettings& settings, RngKey key);

/// Stochastic (perturbed-observation) ensemble Kalman filter.  Requires the
/// model's emeasure_unit.
FilterOutput enkf_run(const Model& model, const UnitParameterField& theta, const ObservationSeries& data,
                      const FilterSettings& settings, RngKey key);

}  // namespace gpomp
