#pragma once

// Shared per-step loop for the particle methods.  PF and BPF run it at fixed
// parameters; IF2 and IBPF run it over a swarm of per-particle parameter
// fields that is perturbed, weighted and resampled together with the states.

#include <span>
#include <vector>

#include "gpomp/filters.hpp"

namespace gpomp::detail {

struct ParticlePass {
  const Model& model;
  const ObservationSeries& data;
  const BlockPartition* partition;  // nullptr: global weights, whole-particle resampling
  const FilterSettings& settings;
  RngKey key;
};

/// Random-walk step on the transformed scale.  `initial` selects IVP
/// coordinates (start of an iteration); otherwise only non-IVP coordinates
/// move.  Coordinates with sd == 0 are left untouched.
void perturb_parameters(const ParamLayout& layout, std::span<double> theta, std::span<const double> sd, bool initial,
                        Stream& rng);

/// One filtering pass over the data.
///
/// With `swarm` false, `params` is a single field shared by all particles.
/// With `swarm` true it holds J fields back to back; they are perturbed by
/// `perturb_sd`, travel with their particles through resampling, and hold the
/// time-N filtered swarm on return.
FilterOutput run_particle_pass(const ParticlePass& pass, std::vector<double>& params, bool swarm,
                               std::span<const double> perturb_sd);

}  // namespace gpomp::detail
