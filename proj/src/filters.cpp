#include "gpomp/filters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ensemble_engine.hpp"
#include "gpomp/parallel.hpp"
#include "particle_engine.hpp"

namespace gpomp {

namespace {

void check_simplex(std::span<const double> weights) {
  if (weights.empty()) throw std::invalid_argument("cannot resample from an empty weight vector");
  double sum = 0.0;
  bool any_positive = false;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("weights must be nonnegative");
    any_positive = any_positive || w > 0.0;
    sum += w;
  }
  if (!any_positive) throw DegenerateWeights();
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("weights must sum to one");
}

// Walks sorted positions in [0, 1) through the cumulative weights.
std::vector<std::size_t> invert_sorted(std::span<const double> weights, std::span<const double> positions) {
  const std::size_t J = weights.size();
  std::vector<std::size_t> out(positions.size());
  std::size_t k = 0;
  double cum = weights[0];
  for (std::size_t i = 0; i < positions.size(); ++i) {
    while (positions[i] >= cum && k + 1 < J) cum += weights[++k];
    // skip trailing zero-weight entries reached by rounding in the cumulative sum
    std::size_t pick = k;
    while (weights[pick] == 0.0 && pick > 0) --pick;
    out[i] = pick;
  }
  return out;
}

}  // namespace

std::vector<std::size_t> systematic_resample(std::span<const double> weights, Stream& rng) {
  check_simplex(weights);
  const std::size_t J = weights.size();
  const double u = rng.uniform();
  std::vector<double> positions(J);
  for (std::size_t i = 0; i < J; ++i) positions[i] = (static_cast<double>(i) + u) / static_cast<double>(J);
  return invert_sorted(weights, positions);
}

std::vector<std::size_t> multinomial_resample(std::span<const double> weights, Stream& rng) {
  check_simplex(weights);
  const std::size_t J = weights.size();
  std::vector<double> positions(J);
  for (auto& p : positions) p = rng.uniform();
  std::sort(positions.begin(), positions.end());
  return invert_sorted(weights, positions);
}

std::vector<std::size_t> resample(ResampleScheme scheme, std::span<const double> weights, Stream& rng) {
  return scheme == ResampleScheme::systematic ? systematic_resample(weights, rng)
                                              : multinomial_resample(weights, rng);
}

LogValue log_mean_exp(std::span<const LogValue> log_weights) {
  if (log_weights.empty()) throw std::invalid_argument("log_mean_exp of an empty vector");
  double max = -INFINITY;
  for (const auto& l : log_weights)
    if (!l.is_zero()) max = std::max(max, l.value());
  if (max == -INFINITY) return LogValue::zero();
  double sum = 0.0;
  for (const auto& l : log_weights)
    if (!l.is_zero()) sum += std::exp(l.value() - max);
  return LogValue(max + std::log(sum / static_cast<double>(log_weights.size())));
}

bool normalize_log_weights(std::span<const LogValue> log_weights, std::span<double> out) {
  double max = -INFINITY;
  for (const auto& l : log_weights)
    if (!l.is_zero()) max = std::max(max, l.value());
  const std::size_t J = log_weights.size();
  if (max == -INFINITY) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(J));
    return false;
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    out[j] = log_weights[j].is_zero() ? 0.0 : std::exp(log_weights[j].value() - max);
    sum += out[j];
  }
  for (auto& w : out) w /= sum;
  return true;
}

double ess(std::span<const double> normalized_weights) {
  double ss = 0.0;
  for (double w : normalized_weights) ss += w * w;
  return 1.0 / ss;
}

FilterOutput pf_run(const Model& model, const UnitParameterField& theta, const ObservationSeries& data,
                    const FilterSettings& settings, RngKey key) {
  std::vector<double> params = theta.values;
  detail::ParticlePass pass{model, data, nullptr, settings, key};
  return detail::run_particle_pass(pass, params, false, {});
}

FilterOutput bpf_run(const Model& model, const BlockPartition& partition, const UnitParameterField& theta,
                     const ObservationSeries& data, const FilterSettings& settings, RngKey key) {
  std::vector<double> params = theta.values;
  detail::ParticlePass pass{model, data, &partition, settings, key};
  return detail::run_particle_pass(pass, params, false, {});
}

FilterOutput enkf_run(const Model& model, const UnitParameterField& theta, const ObservationSeries& data,
                      const FilterSettings& settings, RngKey key) {
  if (!model.has_emeasure()) throw UnsupportedOperation("EnKF requires emeasure_unit");
  const std::size_t J = settings.particles;
  if (J < 2) throw std::invalid_argument("EnKF needs at least two ensemble members");

  const UnitLayout& sl = model.state_layout();
  const UnitLayout& ol = model.observation_layout();
  const std::size_t D = sl.total();
  const std::size_t p = ol.total();
  const std::size_t V = sl.n_units();
  const std::span<const double> th(theta.values);

  FilterOutput out;
  out.particles = J;
  out.state_dim = D;
  out.n_blocks = 0;
  out.log_likelihood = LogValue(0.0);
  const std::size_t N = data.n_times();
  out.filtered_means.assign(N * D, 0.0);

  detail::RowMatrix ensemble(J, D);
  detail::RowMatrix mean(J, p), var(J, p);
  auto row = [&](detail::RowMatrix& m, std::size_t j) {
    return std::span<double>(m.data() + j * m.cols(), m.cols());
  };

  parallel_for(J, settings.threads, [&](std::size_t j) {
    Stream rng = key.child(StreamTag::init, j).stream();
    model.rinit(th, data.t0(), row(ensemble, j), rng);
  });

  double t_prev = data.t0();
  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t step = n + 1;
    parallel_for(J, settings.threads, [&](std::size_t j) {
      auto xj = row(ensemble, j);
      Stream rng = key.child(StreamTag::process, step, j).stream();
      model.rprocess(xj, th, t_prev, data.time(n), rng);
      for (std::size_t v = 0; v < V; ++v)
        model.emeasure_unit(v, sl.unit(std::span<const double>(xj), v), th, ol.unit(row(mean, j), v),
                            ol.unit(row(var, j), v));
    });
    const LogValue ll =
        detail::enkf_analysis(ensemble, mean, var, data.row(n), key.child(StreamTag::enkf_noise, step));
    out.step_log_likelihood.push_back(ll);
    out.log_likelihood += ll;
    const Eigen::RowVectorXd m = ensemble.colwise().mean();
    std::copy_n(m.data(), D, out.filtered_means.data() + n * D);
    t_prev = data.time(n);
  }
  return out;
}

}  // namespace gpomp
