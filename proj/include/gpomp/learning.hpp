#pragma once

// Iterated filtering for parameter learning: IBPF (block particle filter on
// the joint state/parameter space), IF2 (global particle filter) and the
// iterated ensemble Kalman filter.  Plus the three-metric evaluation used to
// compare what they learn.

#include <cstddef>
#include <span>
#include <vector>

#include "gpomp/filters.hpp"
#include "gpomp/graph.hpp"
#include "gpomp/model.hpp"
#include "gpomp/rng.hpp"

namespace gpomp {

/// J parameter fields on the natural scale, stored back to back.
class ParameterSwarm {
 public:
  ParameterSwarm(ParamLayout layout, std::size_t particles);
  ParameterSwarm(ParamLayout layout, std::size_t particles, std::vector<double> values);

  /// J copies of one field.
  static ParameterSwarm point(const UnitParameterField& theta, std::size_t particles);

  /// Coordinates with a box are drawn uniformly and independently per
  /// particle; the rest are copied from `base`.  `lower`/`upper` are indexed
  /// by flat coordinate; a coordinate is boxed when lower < upper.
  static ParameterSwarm uniform_boxes(const UnitParameterField& base, std::span<const double> lower,
                                      std::span<const double> upper, std::size_t particles, RngKey key);

  const ParamLayout& layout() const noexcept { return layout_; }
  std::size_t particles() const noexcept { return particles_; }
  std::size_t dim() const noexcept { return layout_.size(); }
  std::span<double> field(std::size_t j) { return {values_.data() + j * dim(), dim()}; }
  std::span<const double> field(std::size_t j) const { return {values_.data() + j * dim(), dim()}; }
  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  /// Coordinate-wise mean and standard deviation on the natural scale.
  std::vector<double> mean() const;
  std::vector<double> sd() const;
  UnitParameterField mean_field() const;

 private:
  ParamLayout layout_;
  std::size_t particles_;
  std::vector<double> values_;
};

/// Gaussian random walk on the transformed scale; sd per coordinate is
/// scales[c] * σ_m.  IVP coordinates move only at the start of an iteration,
/// the others at every observation time.
struct PerturbationKernel {
  std::vector<double> scales;

  static PerturbationKernel none(const ParamLayout& layout) { return {std::vector<double>(layout.size(), 0.0)}; }
  /// Same scale for a named unit parameter at every unit.
  void set_unit(const ParamLayout& layout, const std::string& name, double scale);
  void set_shared(const ParamLayout& layout, const std::string& name, double scale);
};

/// σ_m = σ₀ · a^{m-1}, m = 1..M.
struct CoolingSchedule {
  double sigma0 = 1.0;
  double factor = 1.0;

  double sigma(std::size_t m) const;
};

struct LearningSettings {
  std::size_t iterations = 1;  // M
  FilterSettings filter;
};

struct IterationRecord {
  std::size_t iteration = 0;  // 1-based
  double sigma = 0.0;
  std::vector<double> mean;
  std::vector<double> sd;
  LogValue log_likelihood;  // the learning filter's own metric during the pass
  std::size_t degenerate_cells = 0;
};

struct IterationTrace {
  std::vector<IterationRecord> records;
  std::size_t size() const noexcept { return records.size(); }
};

struct LearningResult {
  ParameterSwarm swarm;
  IterationTrace trace;
};

/// Iterated block particle filter.
LearningResult ibpf_run(const Model& model, const BlockPartition& partition, const ObservationSeries& data,
                        const ParameterSwarm& initial, const PerturbationKernel& kernel,
                        const CoolingSchedule& schedule, const LearningSettings& settings, RngKey key);

/// Iterated filtering with a global particle filter.
LearningResult if2_run(const Model& model, const ObservationSeries& data, const ParameterSwarm& initial,
                       const PerturbationKernel& kernel, const CoolingSchedule& schedule,
                       const LearningSettings& settings, RngKey key);

/// Iterated EnKF: transformed learned parameters join the state vector and
/// are updated through their sample cross-covariance with the predicted
/// observations.
LearningResult ienkf_run(const Model& model, const ObservationSeries& data, const ParameterSwarm& initial,
                         const PerturbationKernel& kernel, const CoolingSchedule& schedule,
                         const LearningSettings& settings, RngKey key);

struct MetricEstimate {
  bool available = false;
  LogValue mean;       // mean over replicates of the log-likelihood estimate
  double se = 0.0;     // Monte Carlo standard error of that mean
  double per_unit_step = 0.0;  // mean / (|V| N); -inf when mean is the zero sentinel
  std::vector<LogValue> replicates;
};

struct MetricTriple {
  MetricEstimate enkf;  // ℓE
  MetricEstimate pf;    // ℓP
  MetricEstimate bpf;   // ℓB
};

MetricEstimate summarize_metric(const std::vector<LogValue>& replicates, std::size_t n_units, std::size_t n_times);

/// Runs EnKF, PF and BPF `replicates` times each at fixed θ.
MetricTriple evaluate_metrics(const Model& model, const BlockPartition& partition, const UnitParameterField& theta,
                              const ObservationSeries& data, const FilterSettings& settings, std::size_t replicates,
                              RngKey key);

}  // namespace gpomp
