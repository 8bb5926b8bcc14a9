#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gpomp/filters.hpp"
#include "gpomp/measles.hpp"
#include "gpomp/oracles.hpp"

using namespace gpomp;

namespace {

// Random walk per unit with a constant measurement density.
class FlatModel final : public Model {
 public:
  FlatModel(std::size_t n, double log_density)
      : log_density_(log_density), layout_(UnitLayout::uniform(n, 1)), params_(n, {}, {}) {}
  const UnitLayout& state_layout() const override { return layout_; }
  const UnitLayout& observation_layout() const override { return layout_; }
  const ParamLayout& param_layout() const override { return params_; }
  void rinit(std::span<const double>, double, std::span<double> x, Stream& rng) const override {
    for (auto& xi : x) xi = rng.uniform();
  }
  void rprocess(std::span<double> x, std::span<const double>, double, double, Stream& rng) const override {
    for (auto& xi : x) xi += rng.uniform() - 0.5;
  }
  LogValue dmeasure_unit(std::size_t, std::span<const double>, std::span<const double>,
                         std::span<const double>) const override {
    return LogValue(log_density_);
  }
  void rmeasure_unit(std::size_t, std::span<const double>, std::span<const double>, std::span<double> y,
                     Stream&) const override {
    y[0] = 0.0;
  }

 private:
  double log_density_;
  UnitLayout layout_;
  ParamLayout params_;
};

// Adds a constant to unit v's log-density of the wrapped model.
class Shifted final : public Model {
 public:
  Shifted(const Model& inner, std::size_t v, double c) : inner_(inner), v_(v), c_(c) {}
  const UnitLayout& state_layout() const override { return inner_.state_layout(); }
  const UnitLayout& observation_layout() const override { return inner_.observation_layout(); }
  const ParamLayout& param_layout() const override { return inner_.param_layout(); }
  void rinit(std::span<const double> t, double t0, std::span<double> x, Stream& rng) const override {
    inner_.rinit(t, t0, x, rng);
  }
  void rprocess(std::span<double> x, std::span<const double> t, double t0, double t1, Stream& rng) const override {
    inner_.rprocess(x, t, t0, t1, rng);
  }
  LogValue dmeasure_unit(std::size_t v, std::span<const double> y, std::span<const double> x,
                         std::span<const double> t) const override {
    const LogValue d = inner_.dmeasure_unit(v, y, x, t);
    return v == v_ ? d + LogValue(c_) : d;
  }
  void rmeasure_unit(std::size_t v, std::span<const double> x, std::span<const double> t, std::span<double> y,
                     Stream& rng) const override {
    inner_.rmeasure_unit(v, x, t, y, rng);
  }

 private:
  const Model& inner_;
  std::size_t v_;
  double c_;
};

// Density exactly zero at the third observation time, one elsewhere.
class HoleModel final : public Model {
 public:
  HoleModel() : layout_(UnitLayout::uniform(2, 1)), params_(2, {}, {}) {}
  const UnitLayout& state_layout() const override { return layout_; }
  const UnitLayout& observation_layout() const override { return layout_; }
  const ParamLayout& param_layout() const override { return params_; }
  void rinit(std::span<const double>, double, std::span<double> x, Stream&) const override {
    std::fill(x.begin(), x.end(), 0.0);
  }
  void rprocess(std::span<double> x, std::span<const double>, double, double t1, Stream&) const override {
    std::fill(x.begin(), x.end(), t1);
  }
  LogValue dmeasure_unit(std::size_t v, std::span<const double>, std::span<const double> x,
                         std::span<const double>) const override {
    return v == 0 && x[0] == 3.0 ? LogValue::zero() : LogValue(0.0);
  }
  void rmeasure_unit(std::size_t, std::span<const double>, std::span<const double>, std::span<double> y,
                     Stream&) const override {
    y[0] = 0.0;
  }

 private:
  UnitLayout layout_;
  ParamLayout params_;
};

// Constant zero state observed without noise.
class NoiseFree final : public Model {
 public:
  NoiseFree() : layout_(UnitLayout::uniform(1, 1)), params_(1, {}, {}) {}
  const UnitLayout& state_layout() const override { return layout_; }
  const UnitLayout& observation_layout() const override { return layout_; }
  const ParamLayout& param_layout() const override { return params_; }
  void rinit(std::span<const double>, double, std::span<double> x, Stream&) const override { x[0] = 0.0; }
  void rprocess(std::span<double>, std::span<const double>, double, double, Stream&) const override {}
  LogValue dmeasure_unit(std::size_t, std::span<const double> y, std::span<const double> x,
                         std::span<const double>) const override {
    return y[0] == x[0] ? LogValue(0.0) : LogValue::zero();
  }
  void rmeasure_unit(std::size_t, std::span<const double> x, std::span<const double>, std::span<double> y,
                     Stream&) const override {
    y[0] = x[0];
  }
  bool has_emeasure() const override { return true; }
  void emeasure_unit(std::size_t, std::span<const double> x, std::span<const double>, std::span<double> mean,
                     std::span<double> variance) const override {
    mean[0] = x[0];
    variance[0] = 0.0;
  }

 private:
  UnitLayout layout_;
  ParamLayout params_;
};

std::vector<double> grid(std::size_t n) {
  std::vector<double> t(n);
  std::iota(t.begin(), t.end(), 1.0);
  return t;
}

LinearGaussianLatticeModel lattice(const SpatialGraph& g, double a_self, double a_nb) {
  const auto n = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto d = g.distance(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      A(i, j) = d == 0 ? a_self : d == 1 ? a_nb : 0.0;
    }
  return LinearGaussianLatticeModel(g, A, Eigen::VectorXd::Ones(n), Eigen::VectorXd::Ones(n), Eigen::VectorXd::Zero(n),
                                    Eigen::MatrixXd::Identity(n, n));
}

double step_sum(const FilterOutput& out) {
  double s = 0.0;
  for (const auto& l : out.step_log_likelihood) s += l.value();
  return s;
}

}  // namespace

TEST_CASE("systematic resampling") {
  Stream rng(1);
  const std::vector<double> uniform(4, 0.25);
  CHECK(systematic_resample(uniform, rng) == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(systematic_resample(std::vector<double>{1, 0, 0}, rng) == std::vector<std::size_t>{0, 0, 0});

  const std::vector<double> w{0.75, 0.25};
  double total = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const auto idx = systematic_resample(w, rng);
    CHECK(std::is_sorted(idx.begin(), idx.end()));
    total += static_cast<double>(std::count(idx.begin(), idx.end(), 0u));
  }
  CHECK(std::abs(total / 10000 - 1.5) < 0.02);
  CHECK_THROWS_AS(systematic_resample(std::vector<double>{0, 0}, rng), DegenerateWeights);
}

TEST_CASE("resamplers are unbiased") {
  const std::vector<double> w{0.1, 0.2, 0.3, 0.4, 0.0};
  const std::size_t J = w.size(), trials = 10000;
  for (ResampleScheme scheme : {ResampleScheme::systematic, ResampleScheme::multinomial}) {
    Stream rng(2);
    std::vector<double> sum(J, 0.0), sq(J, 0.0);
    for (std::size_t t = 0; t < trials; ++t) {
      std::vector<double> c(J, 0.0);
      for (auto i : resample(scheme, w, rng)) c[i] += 1.0;
      for (std::size_t j = 0; j < J; ++j) {
        sum[j] += c[j];
        sq[j] += c[j] * c[j];
      }
    }
    for (std::size_t j = 0; j < J; ++j) {
      const double mean = sum[j] / trials;
      const double se = std::sqrt(std::max(sq[j] / trials - mean * mean, 1e-12) / trials);
      CHECK(std::abs(mean - J * w[j]) <= 3 * se + 1e-12);
    }
  }
}

TEST_CASE("log-mean-exp and effective sample size") {
  const double l2 = std::log(2.0);
  CHECK(log_mean_exp(std::vector<LogValue>{LogValue(l2), LogValue(l2)}).value() == doctest::Approx(l2).epsilon(1e-15));
  CHECK(log_mean_exp(std::vector<LogValue>{LogValue(0.0), LogValue::zero()}).value() ==
        doctest::Approx(std::log(0.5)).epsilon(1e-15));
  const double expected = -1000.0 + std::log((1.0 + std::exp(-1.0)) / 2.0);
  CHECK(log_mean_exp(std::vector<LogValue>{LogValue(-1000), LogValue(-1001)}).value() ==
        doctest::Approx(expected).epsilon(1e-15));
  CHECK(std::abs(expected + 1000.379) < 1e-3);
  CHECK(log_mean_exp(std::vector<LogValue>{LogValue::zero(), LogValue::zero()}).is_zero());

  CHECK(ess(std::vector<double>(100, 0.01)) == doctest::Approx(100.0));
  CHECK(ess(std::vector<double>{1, 0, 0}) == doctest::Approx(1.0));
  CHECK(ess(std::vector<double>{0.5, 0.5, 0, 0}) == doctest::Approx(2.0));

  std::vector<double> out(2);
  CHECK_FALSE(normalize_log_weights(std::vector<LogValue>{LogValue::zero(), LogValue::zero()}, out));
  CHECK(out == std::vector<double>{0.5, 0.5});
}

TEST_CASE("flat likelihood gives constant steps and full ESS") {
  const FlatModel m(3, -0.7);
  const std::size_t N = 8, J = 64;
  const ObservationSeries data(0.0, grid(N), m.observation_layout(), std::vector<double>(N * 3, 0.0));
  const UnitParameterField theta(m.param_layout());
  const auto pf = pf_run(m, theta, data, {J}, RngKey(3));
  CHECK(pf.log_likelihood.value() == doctest::Approx(N * 3 * -0.7).epsilon(1e-12));
  for (double e : pf.ess) CHECK(e == doctest::Approx(double(J)));
  const auto bpf = bpf_run(m, BlockPartition({{0}, {1, 2}}, 3), theta, data, {J}, RngKey(3));
  CHECK(bpf.n_blocks == 2);
  for (double e : bpf.ess) CHECK(e == doctest::Approx(double(J)));
}

TEST_CASE("total log-likelihood is the sum of steps") {
  const SpatialGraph g = SpatialGraph::path(3);
  const auto m = lattice(g, 0.6, 0.2);
  const auto sim = simulate(m, m.parameters(), 0.0, grid(20), RngKey(4));
  const auto theta = m.parameters();
  const auto pf = pf_run(m, theta, sim.observations, {500}, RngKey(5));
  const auto bpf = bpf_run(m, build_contiguous_partition(g, 2), theta, sim.observations, {500}, RngKey(5));
  const auto enkf = enkf_run(m, theta, sim.observations, {500}, RngKey(5));
  for (const auto* out : {&pf, &bpf, &enkf}) {
    CHECK(out->step_log_likelihood.size() == 20);
    CHECK(std::abs(out->log_likelihood.value() - step_sum(*out)) < 1e-9);
  }
  CHECK(enkf.n_blocks == 0);
  CHECK(enkf.ess.empty());
}

TEST_CASE("one-block BPF is the particle filter, bit for bit") {
  const SpatialGraph g = SpatialGraph::path(4);
  const auto m = lattice(g, 0.5, 0.2);
  const auto sim = simulate(m, m.parameters(), 0.0, grid(15), RngKey(6));
  for (ResampleScheme scheme : {ResampleScheme::systematic, ResampleScheme::multinomial}) {
    const FilterSettings s{300, scheme};
    const auto pf = pf_run(m, m.parameters(), sim.observations, s, RngKey(7));
    const auto bpf = bpf_run(m, BlockPartition::whole(4), m.parameters(), sim.observations, s, RngKey(7));
    CHECK(pf.log_likelihood == bpf.log_likelihood);
    CHECK(pf.step_log_likelihood == bpf.step_log_likelihood);
    CHECK(pf.filtered_means == bpf.filtered_means);
    CHECK(pf.ess == bpf.ess);
  }
}

TEST_CASE("filters are deterministic under a fixed key and across thread counts") {
  const SpatialGraph g = SpatialGraph::path(3);
  const auto m = lattice(g, 0.6, 0.2);
  const auto sim = simulate(m, m.parameters(), 0.0, grid(10), RngKey(8));
  const auto part = build_contiguous_partition(g, 1);
  const auto a = bpf_run(m, part, m.parameters(), sim.observations, {200, ResampleScheme::systematic, 1}, RngKey(9));
  const auto b = bpf_run(m, part, m.parameters(), sim.observations, {200, ResampleScheme::systematic, 3}, RngKey(9));
  CHECK(a.log_likelihood == b.log_likelihood);
  CHECK(a.filtered_means == b.filtered_means);
  const auto c = enkf_run(m, m.parameters(), sim.observations, {200, ResampleScheme::systematic, 1}, RngKey(9));
  const auto d = enkf_run(m, m.parameters(), sim.observations, {200, ResampleScheme::systematic, 2}, RngKey(9));
  CHECK(c.log_likelihood == d.log_likelihood);
  const auto e = bpf_run(m, part, m.parameters(), sim.observations, {200}, RngKey(10));
  CHECK(e.log_likelihood != a.log_likelihood);
}

TEST_CASE("shifting one block's log-weights shifts its terms and nothing else") {
  const SpatialGraph g = SpatialGraph::path(4);
  const auto m = lattice(g, 0.5, 0.2);
  const auto sim = simulate(m, m.parameters(), 0.0, grid(12), RngKey(11));
  const Shifted shifted(m, 3, 2.5);
  const auto part = build_contiguous_partition(g, 2);
  const auto a = bpf_run(m, part, m.parameters(), sim.observations, {400}, RngKey(12));
  const auto b = bpf_run(shifted, part, m.parameters(), sim.observations, {400}, RngKey(12));
  // exp(l + c - (max + c)) differs from exp(l - max) only by rounding
  REQUIRE(a.filtered_means.size() == b.filtered_means.size());
  for (std::size_t i = 0; i < a.filtered_means.size(); ++i)
    CHECK(a.filtered_means[i] == doctest::Approx(b.filtered_means[i]).epsilon(1e-9));
  for (std::size_t i = 0; i < a.ess.size(); ++i) CHECK(a.ess[i] == doctest::Approx(b.ess[i]).epsilon(1e-9));
  for (std::size_t n = 0; n < 12; ++n)
    CHECK(b.step_log_likelihood[n].value() - a.step_log_likelihood[n].value() == doctest::Approx(2.5).epsilon(1e-9));
}

TEST_CASE("particle filter and EnKF against the Kalman filter on one vertex") {
  const SpatialGraph g = SpatialGraph::path(1);
  const auto m = lattice(g, 0.8, 0.0);
  const auto sim = simulate(m, m.parameters(), 0.0, grid(50), RngKey(13));
  const double exact = kalman_exact_loglik(m, sim.observations).log_likelihood;
  const auto pf = pf_run(m, m.parameters(), sim.observations, {100000}, RngKey(14));
  CHECK(std::abs(pf.log_likelihood.value() - exact) < 0.5);
  const auto enkf = enkf_run(m, m.parameters(), sim.observations, {10000}, RngKey(14));
  CHECK(std::abs(enkf.log_likelihood.value() - exact) < 1.0);
}

TEST_CASE("block filter on independent vertices adds up the per-vertex likelihoods") {
  const SpatialGraph g = SpatialGraph::edgeless(2);
  const auto m = lattice(g, 0.7, 0.0);
  const auto sim = simulate(m, m.parameters(), 0.0, grid(30), RngKey(15));
  const double exact = kalman_exact_loglik(m, sim.observations).log_likelihood;
  const auto bpf = bpf_run(m, BlockPartition({{0}, {1}}, 2), m.parameters(), sim.observations, {50000}, RngKey(16));
  CHECK(std::abs(bpf.log_likelihood.value() - exact) < 0.3);
}

TEST_CASE("a degenerate step is recorded and filtering continues") {
  const HoleModel m;
  const ObservationSeries data(0.0, grid(5), m.observation_layout(), std::vector<double>(10, 0.0));
  const UnitParameterField theta(m.param_layout());
  const auto pf = pf_run(m, theta, data, {16}, RngKey(17));
  CHECK(pf.log_likelihood.is_zero());
  CHECK(pf.degenerate_cells == 1);
  CHECK(pf.step_log_likelihood[2].is_zero());
  CHECK_FALSE(pf.step_log_likelihood[3].is_zero());

  const auto bpf = bpf_run(m, BlockPartition({{0}, {1}}, 2), theta, data, {16}, RngKey(17));
  CHECK(bpf.degenerate_cells == 1);
  CHECK(bpf.log_likelihood.is_zero());
  CHECK(bpf.ess_at(2, 1) == doctest::Approx(16.0));
}

TEST_CASE("EnKF needs emeasure; the measles model supports it") {
  const HoleModel hole;
  const ObservationSeries data(0.0, grid(2), hole.observation_layout(), std::vector<double>(4, 0.0));
  CHECK_THROWS_AS(enkf_run(hole, UnitParameterField(hole.param_layout()), data, {10}, RngKey(1)), UnsupportedOperation);

  const measles::MeaslesModel m(measles::CityCovariates::synthetic(2));
  const auto theta = measles::baseline_parameters(2);
  const auto ds = measles::simulate_dataset(m, theta, 1.0, RngKey(18));
  const auto out = enkf_run(m, theta, ds.cases, {200}, RngKey(19));
  CHECK(std::isfinite(out.log_likelihood.value()));
  CHECK(out.ess.empty());
}

TEST_CASE("EnKF with no noise anywhere stays finite through the ridge") {
  const NoiseFree m;
  const ObservationSeries data(0.0, grid(3), m.observation_layout(), {0.0, 0.0, 0.0});
  const auto out = enkf_run(m, UnitParameterField(m.param_layout()), data, {50}, RngKey(20));
  CHECK(std::isfinite(out.log_likelihood.value()));
  CHECK(out.log_likelihood.value() > 0.0);
}
