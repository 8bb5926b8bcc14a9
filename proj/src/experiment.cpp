#include "gpomp/experiment.hpp"

#include <stdexcept>

#include "gpomp/measles.hpp"

namespace gpomp {

const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::ibpf:
      return "ibpf";
    case Algorithm::if2:
      return "if2";
    case Algorithm::ienkf:
      return "ienkf";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "ibpf") return Algorithm::ibpf;
  if (s == "if2") return Algorithm::if2;
  if (s == "ienkf") return Algorithm::ienkf;
  throw std::invalid_argument("unknown learning algorithm '" + s + "'");
}

MeaslesCase measles_case(const ParamLayout& layout, int experiment_case, double rw_sd, double ivp_sd) {
  MeaslesCase out{PerturbationKernel::none(layout), std::vector<double>(layout.size(), 0.0),
                  std::vector<double>(layout.size(), 0.0), 0};
  for (const std::string& name : measles::case_parameters(experiment_case)) {
    const auto k = layout.find_unit(name);
    if (!k) throw std::invalid_argument("model has no unit parameter '" + name + "'");
    const bool ivp = layout.unit_specs()[*k].ivp;
    out.kernel.set_unit(layout, name, ivp ? ivp_sd : rw_sd);
    const measles::SearchBox box = measles::search_box(name);
    for (std::size_t v = 0; v < layout.n_units(); ++v) {
      out.lower[layout.unit_index(v, *k)] = box.lower;
      out.upper[layout.unit_index(v, *k)] = box.upper;
      ++out.n_learned;
    }
  }
  return out;
}

LearnOutcome learn_once(Algorithm algorithm, const Model& model, const BlockPartition& partition,
                        const ObservationSeries& data, const ParameterSwarm& initial, const PerturbationKernel& kernel,
                        const CoolingSchedule& schedule, const LearningSettings& settings, RngKey key) {
  LearnOutcome out;
  try {
    LearningResult r = [&] {
      switch (algorithm) {
        case Algorithm::ibpf:
          return ibpf_run(model, partition, data, initial, kernel, schedule, settings, key);
        case Algorithm::if2:
          return if2_run(model, data, initial, kernel, schedule, settings, key);
        case Algorithm::ienkf:
          return ienkf_run(model, data, initial, kernel, schedule, settings, key);
      }
      throw std::logic_error("unhandled algorithm");
    }();
    out.estimate = r.swarm.mean();
    model.canonicalize(out.estimate);
    out.own_metric = r.trace.records.back().log_likelihood;
    out.trace = std::move(r.trace);
  } catch (const std::invalid_argument&) {
    throw;  // configuration problems are not replicate failures
  } catch (const std::exception& e) {
    out.failed = true;
    out.failure = e.what();
  }
  return out;
}

std::optional<std::size_t> best_replicate(const std::vector<LearnOutcome>& outcomes) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    if (o.failed || o.own_metric.is_zero()) continue;
    if (!best || o.own_metric.value() > outcomes[*best].own_metric.value()) best = i;
  }
  if (!best)
    for (std::size_t i = 0; i < outcomes.size() && !best; ++i)
      if (!outcomes[i].failed) best = i;
  return best;
}

}  // namespace gpomp
