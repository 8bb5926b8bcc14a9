#include "gpomp/learning.hpp"

#include <cmath>
#include <random>

#include "ensemble_engine.hpp"
#include "gpomp/parallel.hpp"
#include "particle_engine.hpp"

namespace gpomp {

ParameterSwarm::ParameterSwarm(ParamLayout layout, std::size_t particles)
    : layout_(std::move(layout)), particles_(particles), values_(particles_ * layout_.size(), 0.0) {}

ParameterSwarm::ParameterSwarm(ParamLayout layout, std::size_t particles, std::vector<double> values)
    : layout_(std::move(layout)), particles_(particles), values_(std::move(values)) {
  if (values_.size() != particles_ * layout_.size()) throw std::invalid_argument("swarm storage has the wrong size");
}

ParameterSwarm ParameterSwarm::point(const UnitParameterField& theta, std::size_t particles) {
  ParameterSwarm s(theta.layout, particles);
  for (std::size_t j = 0; j < particles; ++j) std::copy(theta.values.begin(), theta.values.end(), s.field(j).begin());
  return s;
}

ParameterSwarm ParameterSwarm::uniform_boxes(const UnitParameterField& base, std::span<const double> lower,
                                             std::span<const double> upper, std::size_t particles, RngKey key) {
  const std::size_t P = base.layout.size();
  if (lower.size() != P || upper.size() != P) throw std::invalid_argument("search boxes do not match layout");
  ParameterSwarm s = point(base, particles);
  for (std::size_t j = 0; j < particles; ++j) {
    Stream rng = key.child(StreamTag::swarm, j).stream();
    auto f = s.field(j);
    for (std::size_t c = 0; c < P; ++c)
      if (lower[c] < upper[c]) f[c] = lower[c] + (upper[c] - lower[c]) * rng.uniform();
  }
  return s;
}

std::vector<double> ParameterSwarm::mean() const {
  std::vector<double> m(dim(), 0.0);
  for (std::size_t j = 0; j < particles_; ++j) {
    auto f = field(j);
    for (std::size_t c = 0; c < dim(); ++c) m[c] += f[c];
  }
  for (auto& x : m) x /= static_cast<double>(particles_);
  return m;
}

std::vector<double> ParameterSwarm::sd() const {
  const auto m = mean();
  std::vector<double> s(dim(), 0.0);
  if (particles_ < 2) return s;
  for (std::size_t j = 0; j < particles_; ++j) {
    auto f = field(j);
    for (std::size_t c = 0; c < dim(); ++c) s[c] += (f[c] - m[c]) * (f[c] - m[c]);
  }
  for (auto& x : s) x = std::sqrt(x / static_cast<double>(particles_ - 1));
  return s;
}

UnitParameterField ParameterSwarm::mean_field() const { return UnitParameterField(layout_, mean()); }

void PerturbationKernel::set_unit(const ParamLayout& layout, const std::string& name, double scale) {
  const auto k = layout.find_unit(name);
  if (!k) throw std::invalid_argument("unknown unit parameter '" + name + "'");
  scales.resize(layout.size(), 0.0);
  for (std::size_t v = 0; v < layout.n_units(); ++v) scales[layout.unit_index(v, *k)] = scale;
}

void PerturbationKernel::set_shared(const ParamLayout& layout, const std::string& name, double scale) {
  const auto k = layout.find_shared(name);
  if (!k) throw std::invalid_argument("unknown shared parameter '" + name + "'");
  scales.resize(layout.size(), 0.0);
  scales[layout.shared_index(*k)] = scale;
}

double CoolingSchedule::sigma(std::size_t m) const {
  return sigma0 * std::pow(factor, static_cast<double>(m) - 1.0);
}

namespace {

void check_learning_inputs(const Model& model, const ParameterSwarm& initial, const PerturbationKernel& kernel,
                           const CoolingSchedule& schedule, const LearningSettings& settings) {
  if (!(initial.layout() == model.param_layout()))
    throw std::invalid_argument("swarm layout does not match the model's parameters");
  if (kernel.scales.size() != initial.dim()) throw std::invalid_argument("perturbation scales do not match layout");
  if (settings.iterations < 1) throw std::invalid_argument("need at least one iteration");
  if (initial.particles() < 2) throw std::invalid_argument("need at least two particles");
  if (schedule.sigma0 < 0.0 || !(schedule.factor > 0.0 && schedule.factor <= 1.0))
    throw std::invalid_argument("cooling needs sigma0 >= 0 and factor in (0, 1]");
  for (double s : kernel.scales)
    if (!(s >= 0.0)) throw std::invalid_argument("perturbation scales must be nonnegative");
}

IterationRecord make_record(std::size_t m, double sigma, const ParameterSwarm& swarm, const FilterOutput& out) {
  return IterationRecord{m, sigma, swarm.mean(), swarm.sd(), out.log_likelihood, out.degenerate_cells};
}

LearningResult iterate_particles(const Model& model, const BlockPartition* partition, const ObservationSeries& data,
                                 const ParameterSwarm& initial, const PerturbationKernel& kernel,
                                 const CoolingSchedule& schedule, const LearningSettings& settings, RngKey key) {
  check_learning_inputs(model, initial, kernel, schedule, settings);
  FilterSettings fs = settings.filter;
  fs.particles = initial.particles();

  LearningResult result{initial, {}};
  std::vector<double> sd(initial.dim());
  for (std::size_t m = 1; m <= settings.iterations; ++m) {
    const double sigma = schedule.sigma(m);
    for (std::size_t c = 0; c < sd.size(); ++c) sd[c] = kernel.scales[c] * sigma;
    detail::ParticlePass pass{model, data, partition, fs, key.child(StreamTag::iteration, m)};
    const FilterOutput out = detail::run_particle_pass(pass, result.swarm.values(), true, sd);
    result.trace.records.push_back(make_record(m, sigma, result.swarm, out));
  }
  return result;
}

}  // namespace

LearningResult ibpf_run(const Model& model, const BlockPartition& partition, const ObservationSeries& data,
                        const ParameterSwarm& initial, const PerturbationKernel& kernel,
                        const CoolingSchedule& schedule, const LearningSettings& settings, RngKey key) {
  if (partition.size() > 1) {
    const ParamLayout& layout = initial.layout();
    for (std::size_t k = 0; k < layout.shared_size(); ++k)
      if (kernel.scales.size() == layout.size() && kernel.scales[layout.shared_index(k)] > 0.0)
        throw std::invalid_argument("shared parameter '" + layout.shared_specs()[k].name +
                                    "' cannot be learned block-wise; fix it or use a single block");
  }
  return iterate_particles(model, &partition, data, initial, kernel, schedule, settings, key);
}

LearningResult if2_run(const Model& model, const ObservationSeries& data, const ParameterSwarm& initial,
                       const PerturbationKernel& kernel, const CoolingSchedule& schedule,
                       const LearningSettings& settings, RngKey key) {
  return iterate_particles(model, nullptr, data, initial, kernel, schedule, settings, key);
}

LearningResult ienkf_run(const Model& model, const ObservationSeries& data, const ParameterSwarm& initial,
                         const PerturbationKernel& kernel, const CoolingSchedule& schedule,
                         const LearningSettings& settings, RngKey key) {
  check_learning_inputs(model, initial, kernel, schedule, settings);
  if (!model.has_emeasure()) throw UnsupportedOperation("IEnKF requires emeasure_unit");

  const UnitLayout& sl = model.state_layout();
  const UnitLayout& ol = model.observation_layout();
  const ParamLayout& pl = initial.layout();
  const std::size_t J = initial.particles();
  const std::size_t D = sl.total();
  const std::size_t p = ol.total();
  const std::size_t V = sl.n_units();
  const unsigned threads = settings.filter.threads;

  std::vector<std::size_t> learned;
  for (std::size_t c = 0; c < kernel.scales.size(); ++c)
    if (kernel.scales[c] > 0.0) learned.push_back(c);
  const std::size_t L = learned.size();

  LearningResult result{initial, {}};
  std::vector<double> sd(initial.dim());
  detail::RowMatrix ensemble(J, D + L);
  detail::RowMatrix mean(J, p), var(J, p);
  auto row = [](detail::RowMatrix& m, std::size_t j, std::size_t off, std::size_t len) {
    return std::span<double>(m.data() + j * m.cols() + off, len);
  };

  for (std::size_t m = 1; m <= settings.iterations; ++m) {
    const double sigma = schedule.sigma(m);
    for (std::size_t c = 0; c < sd.size(); ++c) sd[c] = kernel.scales[c] * sigma;
    const RngKey km = key.child(StreamTag::iteration, m);
    ParameterSwarm& swarm = result.swarm;

    parallel_for(J, threads, [&](std::size_t j) {
      auto theta = swarm.field(j);
      Stream prng = km.child(StreamTag::perturb, 0, j).stream();
      detail::perturb_parameters(pl, theta, sd, true, prng);
      Stream rng = km.child(StreamTag::init, j).stream();
      model.rinit(theta, data.t0(), row(ensemble, j, 0, D), rng);
    });

    LogValue total(0.0);
    double t_prev = data.t0();
    for (std::size_t n = 0; n < data.n_times(); ++n) {
      const std::size_t step = n + 1;
      parallel_for(J, threads, [&](std::size_t j) {
        auto theta = swarm.field(j);
        Stream prng = km.child(StreamTag::perturb, step, j).stream();
        detail::perturb_parameters(pl, theta, sd, false, prng);
        auto xj = row(ensemble, j, 0, D);
        Stream rng = km.child(StreamTag::process, step, j).stream();
        model.rprocess(xj, theta, t_prev, data.time(n), rng);
        for (std::size_t v = 0; v < V; ++v)
          model.emeasure_unit(v, sl.unit(std::span<const double>(xj), v), theta, ol.unit(row(mean, j, 0, p), v),
                              ol.unit(row(var, j, 0, p), v));
        for (std::size_t i = 0; i < L; ++i)
          ensemble(j, D + i) = to_unconstrained(pl.spec(learned[i]).transform, theta[learned[i]]);
      });
      total += detail::enkf_analysis(ensemble, mean, var, data.row(n), km.child(StreamTag::enkf_noise, step));
      for (std::size_t j = 0; j < J; ++j) {
        auto theta = swarm.field(j);
        for (std::size_t i = 0; i < L; ++i)
          theta[learned[i]] = from_unconstrained(pl.spec(learned[i]).transform, ensemble(j, D + i));
      }
      t_prev = data.time(n);
    }
    FilterOutput summary;
    summary.log_likelihood = total;
    result.trace.records.push_back(make_record(m, sigma, swarm, summary));
  }
  return result;
}

MetricEstimate summarize_metric(const std::vector<LogValue>& replicates, std::size_t n_units, std::size_t n_times) {
  MetricEstimate est;
  est.available = true;
  est.replicates = replicates;
  bool any_zero = false;
  double sum = 0.0;
  for (const auto& r : replicates) {
    if (r.is_zero()) any_zero = true;
    else sum += r.value();
  }
  if (any_zero || replicates.empty()) {
    est.mean = LogValue::zero();
    est.per_unit_step = -INFINITY;
    return est;
  }
  const double n = static_cast<double>(replicates.size());
  const double mean = sum / n;
  double ss = 0.0;
  for (const auto& r : replicates) ss += (r.value() - mean) * (r.value() - mean);
  est.mean = LogValue(mean);
  est.se = replicates.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  est.per_unit_step = mean / (static_cast<double>(n_units) * static_cast<double>(n_times));
  return est;
}

MetricTriple evaluate_metrics(const Model& model, const BlockPartition& partition, const UnitParameterField& theta,
                              const ObservationSeries& data, const FilterSettings& settings, std::size_t replicates,
                              RngKey key) {
  if (replicates < 1) throw std::invalid_argument("need at least one evaluation replicate");
  std::vector<LogValue> le, lp, lb;
  for (std::size_t r = 0; r < replicates; ++r) {
    const RngKey kr = key.child(StreamTag::evaluation, r);
    if (model.has_emeasure()) {
      try {
        le.push_back(enkf_run(model, theta, data, settings, kr).log_likelihood);
      } catch (const detail::InnovationFailure&) {
        le.push_back(LogValue::zero());
      }
    }
    lp.push_back(pf_run(model, theta, data, settings, kr).log_likelihood);
    lb.push_back(bpf_run(model, partition, theta, data, settings, kr).log_likelihood);
  }
  const std::size_t V = model.n_units();
  const std::size_t N = data.n_times();
  MetricTriple out;
  if (model.has_emeasure()) out.enkf = summarize_metric(le, V, N);
  out.pf = summarize_metric(lp, V, N);
  out.bpf = summarize_metric(lb, V, N);
  return out;
}

}  // namespace gpomp
