#pragma once

// Learning protocol shared by the command-line driver and the acceptance
// runs: measles case setup, one learning run with failures captured, and
// best-replicate selection.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "gpomp/learning.hpp"

namespace gpomp {

enum class Algorithm { ibpf, if2, ienkf };

const char* to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);

/// Perturbation kernel and search boxes for one of the four measles cases.
/// Learned unit parameters get scale `rw_sd` (every step), learned IVPs get
/// `ivp_sd` (iteration start only); everything else is held fixed.
struct MeaslesCase {
  PerturbationKernel kernel;
  std::vector<double> lower;  // by flat coordinate; lower == upper means not boxed
  std::vector<double> upper;
  std::size_t n_learned = 0;
};

MeaslesCase measles_case(const ParamLayout& layout, int experiment_case, double rw_sd = 0.02, double ivp_sd = 0.2);

struct LearnOutcome {
  bool failed = false;
  std::string failure;
  std::vector<double> estimate;  // canonicalized swarm mean
  LogValue own_metric;           // the learning filter's log-likelihood in the last iteration
  IterationTrace trace;
};

LearnOutcome learn_once(Algorithm algorithm, const Model& model, const BlockPartition& partition,
                        const ObservationSeries& data, const ParameterSwarm& initial, const PerturbationKernel& kernel,
                        const CoolingSchedule& schedule, const LearningSettings& settings, RngKey key);

/// Index of the non-failed outcome with the largest own metric.
std::optional<std::size_t> best_replicate(const std::vector<LearnOutcome>& outcomes);

}  // namespace gpomp
