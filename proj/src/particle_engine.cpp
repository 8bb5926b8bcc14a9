#include "particle_engine.hpp"

#include <algorithm>
#include <random>

#include "gpomp/parallel.hpp"

namespace gpomp::detail {

namespace {

using Range = std::pair<std::size_t, std::size_t>;  // offset, length

void append_range(std::vector<Range>& ranges, std::size_t offset, std::size_t length) {
  if (length == 0) return;
  if (!ranges.empty() && ranges.back().first + ranges.back().second == offset)
    ranges.back().second += length;
  else
    ranges.emplace_back(offset, length);
}

// Coordinate ranges of each block in the state vector and the parameter field.
// Shared parameters travel with the block that holds the first vertex.
struct BlockRanges {
  std::vector<std::vector<Range>> state;
  std::vector<std::vector<Range>> params;

  BlockRanges(const BlockPartition& partition, const UnitLayout& states, const ParamLayout& layout)
      : state(partition.size()), params(partition.size()) {
    for (std::size_t k = 0; k < partition.size(); ++k) {
      for (std::size_t v : partition.block(k)) {
        append_range(state[k], states.offset(v), states.dim(v));
        append_range(params[k], layout.unit_index(v, 0), layout.unit_size());
      }
    }
    append_range(params[partition.block_of(0)], layout.shared_index(0), layout.shared_size());
  }
};

void copy_ranges(const std::vector<Range>& ranges, const double* src, double* dst) {
  for (auto [off, len] : ranges) std::copy_n(src + off, len, dst + off);
}

}  // namespace

void perturb_parameters(const ParamLayout& layout, std::span<double> theta, std::span<const double> sd, bool initial,
                        Stream& rng) {
  std::normal_distribution<double> normal;
  for (std::size_t c = 0; c < theta.size(); ++c) {
    if (sd[c] == 0.0) continue;
    const ParamSpec& spec = layout.spec(c);
    if (spec.ivp != initial) continue;
    const double u = to_unconstrained(spec.transform, theta[c]) + sd[c] * normal(rng);
    theta[c] = from_unconstrained(spec.transform, u);
  }
}

FilterOutput run_particle_pass(const ParticlePass& pass, std::vector<double>& params, bool swarm,
                               std::span<const double> perturb_sd) {
  const Model& model = pass.model;
  const ObservationSeries& data = pass.data;
  const std::size_t J = pass.settings.particles;
  if (J < 2) throw std::invalid_argument("particle methods need at least two particles");

  const UnitLayout& sl = model.state_layout();
  const ParamLayout& pl = model.param_layout();
  const std::size_t D = sl.total();
  const std::size_t P = pl.size();
  const std::size_t V = sl.n_units();
  if (data.n_units() != V) throw std::invalid_argument("data and model disagree on the number of units");
  if (params.size() != (swarm ? J * P : P)) throw std::invalid_argument("parameter storage has the wrong size");
  if (pass.partition && pass.partition->n_vertices() != V)
    throw std::invalid_argument("partition and model disagree on the number of units");

  const bool blocked = pass.partition != nullptr;
  const std::size_t B = blocked ? pass.partition->size() : 1;
  std::optional<BlockRanges> ranges;
  if (blocked) ranges.emplace(*pass.partition, sl, pl);

  auto theta_of = [&](std::size_t j) -> std::span<double> {
    return swarm ? std::span<double>(params.data() + j * P, P) : std::span<double>(params);
  };

  FilterOutput out;
  out.particles = J;
  out.n_blocks = B;
  out.state_dim = D;
  const std::size_t N = data.n_times();
  out.step_log_likelihood.reserve(N);
  out.ess.assign(N * B, 0.0);
  out.filtered_means.assign(N * D, 0.0);
  out.log_likelihood = LogValue(0.0);

  std::vector<double> x(J * D), x_next(J * D);
  std::vector<double> params_next(swarm ? J * P : 0);
  std::vector<LogValue> log_w(J * B);
  std::vector<LogValue> column(J);
  std::vector<double> weights(J);
  std::vector<std::vector<std::size_t>> ancestors(B);

  parallel_for(J, pass.settings.threads, [&](std::size_t j) {
    std::span<double> theta = theta_of(j);
    if (swarm) {
      Stream prng = pass.key.child(StreamTag::perturb, 0, j).stream();
      perturb_parameters(pl, theta, perturb_sd, true, prng);
    }
    Stream rng = pass.key.child(StreamTag::init, j).stream();
    model.rinit(theta, data.t0(), std::span<double>(x.data() + j * D, D), rng);
  });

  double t_prev = data.t0();
  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t step = n + 1;
    const double t = data.time(n);
    const auto y = data.row(n);

    parallel_for(J, pass.settings.threads, [&](std::size_t j) {
      std::span<double> theta = theta_of(j);
      if (swarm) {
        Stream prng = pass.key.child(StreamTag::perturb, step, j).stream();
        perturb_parameters(pl, theta, perturb_sd, false, prng);
      }
      std::span<double> xj(x.data() + j * D, D);
      Stream rng = pass.key.child(StreamTag::process, step, j).stream();
      model.rprocess(xj, theta, t_prev, t, rng);

      auto unit_weight = [&](std::size_t v) {
        return model.dmeasure_unit(v, data.layout().unit(y, v), sl.unit(std::span<const double>(xj), v), theta);
      };
      if (blocked) {
        for (std::size_t k = 0; k < B; ++k) {
          LogValue acc(0.0);
          for (std::size_t v : pass.partition->block(k)) acc += unit_weight(v);
          log_w[j * B + k] = acc;
        }
      } else {
        LogValue acc(0.0);
        for (std::size_t v = 0; v < V; ++v) acc += unit_weight(v);
        log_w[j] = acc;
      }
    });

    LogValue step_ll(0.0);
    for (std::size_t k = 0; k < B; ++k) {
      for (std::size_t j = 0; j < J; ++j) column[j] = log_w[j * B + k];
      const bool ok = normalize_log_weights(column, weights);
      if (ok) {
        step_ll += log_mean_exp(column);
      } else {
        step_ll = LogValue::zero();
        ++out.degenerate_cells;
      }
      out.ess[n * B + k] = ess(weights);

      double* means = out.filtered_means.data() + n * D;
      auto accumulate_mean = [&](std::size_t off, std::size_t len) {
        for (std::size_t j = 0; j < J; ++j) {
          const double w = weights[j];
          const double* xj = x.data() + j * D;
          for (std::size_t i = off; i < off + len; ++i) means[i] += w * xj[i];
        }
      };
      if (blocked) {
        for (auto [off, len] : ranges->state[k]) accumulate_mean(off, len);
      } else {
        accumulate_mean(0, D);
      }

      Stream rrng = pass.key.child(StreamTag::resample, step, k).stream();
      ancestors[k] = resample(pass.settings.scheme, weights, rrng);
    }
    out.step_log_likelihood.push_back(step_ll);
    out.log_likelihood += step_ll;

    if (blocked) {
      for (std::size_t k = 0; k < B; ++k) {
        const auto& idx = ancestors[k];
        for (std::size_t j = 0; j < J; ++j) {
          copy_ranges(ranges->state[k], x.data() + idx[j] * D, x_next.data() + j * D);
          if (swarm) copy_ranges(ranges->params[k], params.data() + idx[j] * P, params_next.data() + j * P);
        }
      }
    } else {
      const auto& idx = ancestors[0];
      for (std::size_t j = 0; j < J; ++j) {
        std::copy_n(x.data() + idx[j] * D, D, x_next.data() + j * D);
        if (swarm) std::copy_n(params.data() + idx[j] * P, P, params_next.data() + j * P);
      }
    }
    x.swap(x_next);
    if (swarm) params.swap(params_next);
    t_prev = t;
  }
  return out;
}

}  // namespace gpomp::detail
