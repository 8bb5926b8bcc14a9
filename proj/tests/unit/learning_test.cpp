#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gpomp/experiment.hpp"
#include "gpomp/learning.hpp"
#include "gpomp/measles.hpp"
#include "gpomp/oracles.hpp"

using namespace gpomp;

namespace {

// The state copies the first unit parameter at rinit and never moves; the
// density is zero unless the state still equals that parameter.  Any
// perturbation between rinit and an observation makes every weight zero.
class Tracker final : public Model {
 public:
  Tracker(std::size_t n, ParamLayout layout) : layout_(UnitLayout::uniform(n, 1)), params_(std::move(layout)) {}
  const UnitLayout& state_layout() const override { return layout_; }
  const UnitLayout& observation_layout() const override { return layout_; }
  const ParamLayout& param_layout() const override { return params_; }
  void rinit(std::span<const double> theta, double, std::span<double> x, Stream&) const override {
    for (std::size_t v = 0; v < x.size(); ++v) x[v] = theta[params_.unit_index(v, 0)];
  }
  void rprocess(std::span<double>, std::span<const double>, double, double, Stream&) const override {}
  LogValue dmeasure_unit(std::size_t v, std::span<const double>, std::span<const double> x,
                         std::span<const double> theta) const override {
    return x[0] == theta[params_.unit_index(v, 0)] ? LogValue(0.0) : LogValue::zero();
  }
  void rmeasure_unit(std::size_t, std::span<const double>, std::span<const double>, std::span<double> y,
                     Stream&) const override {
    y[0] = 0.0;
  }

 private:
  UnitLayout layout_;
  ParamLayout params_;
};

class Throws final : public Model {
 public:
  Throws() : layout_(UnitLayout::uniform(1, 1)), params_(1, {{"a"}}, {}) {}
  const UnitLayout& state_layout() const override { return layout_; }
  const UnitLayout& observation_layout() const override { return layout_; }
  const ParamLayout& param_layout() const override { return params_; }
  void rinit(std::span<const double>, double, std::span<double>, Stream&) const override {
    throw std::runtime_error("simulator blew up");
  }
  void rprocess(std::span<double>, std::span<const double>, double, double, Stream&) const override {}
  LogValue dmeasure_unit(std::size_t, std::span<const double>, std::span<const double>,
                         std::span<const double>) const override {
    return LogValue(0.0);
  }
  void rmeasure_unit(std::size_t, std::span<const double>, std::span<const double>, std::span<double>,
                     Stream&) const override {}

 private:
  UnitLayout layout_;
  ParamLayout params_;
};

std::vector<double> grid(std::size_t n) {
  std::vector<double> t(n);
  std::iota(t.begin(), t.end(), 1.0);
  return t;
}

ObservationSeries location_data(std::size_t units, std::size_t N, double mu, RngKey key) {
  const GaussianLocationModel m(units);
  UnitParameterField theta(m.param_layout());
  for (std::size_t v = 0; v < units; ++v) theta.unit(v, 0) = mu;
  return simulate(m, theta, 0.0, grid(N), key).observations;
}

double unit_mean(const ObservationSeries& d, std::size_t v) {
  double s = 0.0;
  for (std::size_t n = 0; n < d.n_times(); ++n) s += d.unit(n, v)[0];
  return s / static_cast<double>(d.n_times());
}

ParameterSwarm box_swarm(const ParamLayout& layout, double lo, double hi, std::size_t J, RngKey key) {
  const UnitParameterField base(layout);
  return ParameterSwarm::uniform_boxes(base, std::vector<double>(layout.size(), lo),
                                       std::vector<double>(layout.size(), hi), J, key);
}

}  // namespace

TEST_CASE("cooling schedule") {
  const CoolingSchedule c{0.5, 0.9};
  CHECK(c.sigma(1) == 0.5);
  CHECK(c.sigma(3) == doctest::Approx(0.5 * 0.81).epsilon(1e-15));
  for (std::size_t m = 1; m < 50; ++m) CHECK(c.sigma(m + 1) <= c.sigma(m));
  CHECK(CoolingSchedule{1.0, 1.0}.sigma(40) == 1.0);
}

TEST_CASE("initial swarms and kernels") {
  const ParamLayout layout(2, {{"a", Transform::identity, false}, {"b", Transform::log, true}},
                           {{"s", Transform::logit, false}});
  UnitParameterField base(layout);
  base.shared(0) = 0.3;
  std::vector<double> lo(layout.size(), 0.0), hi(layout.size(), 0.0);
  lo[layout.unit_index(1, 0)] = -2.0;
  hi[layout.unit_index(1, 0)] = 5.0;
  const auto swarm = ParameterSwarm::uniform_boxes(base, lo, hi, 500, RngKey(1));
  for (std::size_t j = 0; j < 500; ++j) {
    const auto f = swarm.field(j);
    CHECK(f[layout.unit_index(1, 0)] >= -2.0);
    CHECK(f[layout.unit_index(1, 0)] <= 5.0);
    CHECK(f[layout.unit_index(0, 0)] == 0.0);
    CHECK(f[layout.shared_index(0)] == 0.3);
  }
  const auto again = ParameterSwarm::uniform_boxes(base, lo, hi, 500, RngKey(1));
  CHECK(again.values() == swarm.values());

  auto kernel = PerturbationKernel::none(layout);
  kernel.set_unit(layout, "b", 0.2);
  kernel.set_shared(layout, "s", 0.1);
  CHECK(kernel.scales[layout.unit_index(0, 1)] == 0.2);
  CHECK(kernel.scales[layout.unit_index(1, 1)] == 0.2);
  CHECK(kernel.scales[layout.shared_index(0)] == 0.1);
  CHECK(kernel.scales[layout.unit_index(0, 0)] == 0.0);
  CHECK_THROWS(kernel.set_unit(layout, "zz", 1.0));
}

TEST_CASE("one-block IBPF is IF2, bit for bit") {
  const GaussianLocationModel m(3);
  const auto data = location_data(3, 20, 1.0, RngKey(2));
  const auto swarm = box_swarm(m.param_layout(), -3, 3, 200, RngKey(3));
  auto kernel = PerturbationKernel::none(m.param_layout());
  kernel.set_unit(m.param_layout(), "mu", 0.1);
  const CoolingSchedule cool{1.0, 0.9};
  const LearningSettings s{4, {200}};
  const auto a = ibpf_run(m, BlockPartition::whole(3), data, swarm, kernel, cool, s, RngKey(4));
  const auto b = if2_run(m, data, swarm, kernel, cool, s, RngKey(4));
  CHECK(a.swarm.values() == b.swarm.values());
  REQUIRE(a.trace.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.trace.records[i].log_likelihood == b.trace.records[i].log_likelihood);
    CHECK(a.trace.records[i].mean == b.trace.records[i].mean);
  }
}

TEST_CASE("one iteration of IF2 without perturbation is the particle filter") {
  const GaussianLocationModel m(2);
  const auto data = location_data(2, 15, 0.5, RngKey(5));
  UnitParameterField theta(m.param_layout());
  theta.unit(0, 0) = 0.4;
  theta.unit(1, 0) = 0.7;
  const auto swarm = ParameterSwarm::point(theta, 300);
  auto kernel = PerturbationKernel::none(m.param_layout());
  kernel.set_unit(m.param_layout(), "mu", 0.3);
  const RngKey key(6);
  const auto r = if2_run(m, data, swarm, kernel, {0.0, 1.0}, {1, {300}}, key);
  const auto pf = pf_run(m, theta, data, {300}, key.child(StreamTag::iteration, 1));
  CHECK(r.trace.records[0].log_likelihood == pf.log_likelihood);
}

TEST_CASE("zero perturbation only shuffles the initial swarm block-wise") {
  const GaussianLocationModel m(4);
  const auto data = location_data(4, 10, 0.0, RngKey(7));
  const auto swarm = box_swarm(m.param_layout(), -1, 1, 100, RngKey(8));
  auto kernel = PerturbationKernel::none(m.param_layout());
  kernel.set_unit(m.param_layout(), "mu", 0.5);
  const BlockPartition part({{0, 1}, {2, 3}}, 4);
  const auto r = ibpf_run(m, part, data, swarm, kernel, {0.0, 1.0}, {3, {100}}, RngKey(9));
  const auto& l = m.param_layout();
  for (std::size_t j = 0; j < 100; ++j)
    for (const auto& block : part.blocks()) {
      bool found = false;
      for (std::size_t i = 0; i < 100 && !found; ++i) {
        bool same = true;
        for (std::size_t v : block) same = same && r.swarm.field(j)[l.unit_index(v, 0)] == swarm.field(i)[l.unit_index(v, 0)];
        found = same;
      }
      CHECK(found);
    }
}

TEST_CASE("initial-value parameters move only between iterations") {
  const ParamLayout ivp(2, {{"a", Transform::identity, true}}, {});
  const Tracker frozen(2, ivp);
  const ObservationSeries data(0.0, grid(6), frozen.observation_layout(), std::vector<double>(12, 0.0));
  auto kernel = PerturbationKernel::none(ivp);
  kernel.set_unit(ivp, "a", 1.0);
  const auto swarm = box_swarm(ivp, -1, 1, 50, RngKey(10));
  for (int alg = 0; alg < 2; ++alg) {
    const auto r = alg == 0 ? ibpf_run(frozen, BlockPartition({{0}, {1}}, 2), data, swarm, kernel, {1.0, 1.0}, {3, {50}}, RngKey(11))
                            : if2_run(frozen, data, swarm, kernel, {1.0, 1.0}, {3, {50}}, RngKey(11));
    for (const auto& rec : r.trace.records) CHECK(rec.degenerate_cells == 0);
    CHECK(r.trace.records[0].mean != r.trace.records[2].mean);
  }

  const ParamLayout moving(2, {{"a", Transform::identity, false}}, {});
  const Tracker drifting(2, moving);
  auto k2 = PerturbationKernel::none(moving);
  k2.set_unit(moving, "a", 1.0);
  const auto r = if2_run(drifting, data, box_swarm(moving, -1, 1, 50, RngKey(10)), k2, {1.0, 1.0}, {1, {50}},
                         RngKey(11));
  CHECK(r.trace.records[0].degenerate_cells > 0);
}

TEST_CASE("perturbed parameters stay in their domains") {
  const ParamLayout layout(1, {{"mu", Transform::identity, false}, {"pos", Transform::log, false},
                               {"prob", Transform::logit, false}}, {{"sh", Transform::logit, false}});
  const GaussianLocationModel shape(1);
  // GaussianLocation only reads mu; the other coordinates ride along.
  class Wide final : public Model {
   public:
    Wide(const Model& inner, ParamLayout l) : inner_(inner), l_(std::move(l)) {}
    const UnitLayout& state_layout() const override { return inner_.state_layout(); }
    const UnitLayout& observation_layout() const override { return inner_.observation_layout(); }
    const ParamLayout& param_layout() const override { return l_; }
    void rinit(std::span<const double> t, double t0, std::span<double> x, Stream& rng) const override {
      inner_.rinit(t.first(1), t0, x, rng);
    }
    void rprocess(std::span<double> x, std::span<const double> t, double t0, double t1, Stream& rng) const override {
      inner_.rprocess(x, t.first(1), t0, t1, rng);
    }
    LogValue dmeasure_unit(std::size_t v, std::span<const double> y, std::span<const double> x,
                           std::span<const double> t) const override {
      return inner_.dmeasure_unit(v, y, x, t.first(1));
    }
    void rmeasure_unit(std::size_t v, std::span<const double> x, std::span<const double> t, std::span<double> y,
                       Stream& rng) const override {
      inner_.rmeasure_unit(v, x, t.first(1), y, rng);
    }
    bool has_emeasure() const override { return true; }
    void emeasure_unit(std::size_t v, std::span<const double> x, std::span<const double> t, std::span<double> mean,
                       std::span<double> var) const override {
      inner_.emeasure_unit(v, x, t.first(1), mean, var);
    }

   private:
    const Model& inner_;
    ParamLayout l_;
  } m(shape, layout);
  const auto data = location_data(1, 30, 0.0, RngKey(12));
  UnitParameterField base(layout);
  base.unit(0, 1) = 1.0;
  base.unit(0, 2) = 0.5;
  base.shared(0) = 0.5;
  std::vector<double> kscale(layout.size(), 3.0);
  const auto swarm = ParameterSwarm::point(base, 300);
  for (const auto& r : {if2_run(m, data, swarm, {kscale}, {1.0, 1.0}, {3, {300}}, RngKey(13)),
                        ibpf_run(m, BlockPartition::whole(1), data, swarm, {kscale}, {1.0, 1.0}, {3, {300}}, RngKey(13)),
                        ienkf_run(m, data, swarm, {kscale}, {1.0, 1.0}, {3, {300}}, RngKey(13))}) {
    for (std::size_t j = 0; j < 300; ++j) {
      const auto f = r.swarm.field(j);
      CHECK(f[1] > 0.0);
      CHECK(f[2] >= 0.0);
      CHECK(f[2] <= 1.0);
      CHECK(f[3] >= 0.0);
      CHECK(f[3] <= 1.0);
    }
  }
}

TEST_CASE("Gaussian location: IBPF and IF2 find the sample mean") {
  const GaussianLocationModel m(1);
  const std::size_t N = 50;
  const auto data = location_data(1, N, 2.0, RngKey(14));
  const double mle = unit_mean(data, 0);
  const auto swarm = box_swarm(m.param_layout(), -10, 10, 2000, RngKey(15));
  auto kernel = PerturbationKernel::none(m.param_layout());
  kernel.set_unit(m.param_layout(), "mu", 1.0);
  const CoolingSchedule cool{0.1, 0.9};
  const LearningSettings s{30, {2000}};
  const double tol = 3.0 / std::sqrt(double(N));
  const auto a = ibpf_run(m, BlockPartition::whole(1), data, swarm, kernel, cool, s, RngKey(16));
  const auto b = if2_run(m, data, swarm, kernel, cool, s, RngKey(17));
  CHECK(std::abs(a.swarm.mean()[0] - mle) < tol);
  CHECK(std::abs(b.swarm.mean()[0] - mle) < tol);
}

TEST_CASE("IBPF learns unit-specific means block by block") {
  const GaussianLocationModel m(4);
  const std::size_t N = 40;
  const GaussianLocationModel sim_model(4);
  UnitParameterField truth(m.param_layout());
  for (std::size_t v = 0; v < 4; ++v) truth.unit(v, 0) = -1.5 + double(v);
  const auto data = simulate(sim_model, truth, 0.0, grid(N), RngKey(18)).observations;
  auto kernel = PerturbationKernel::none(m.param_layout());
  kernel.set_unit(m.param_layout(), "mu", 1.0);
  const auto r = ibpf_run(m, BlockPartition({{0}, {1}, {2}, {3}}, 4), data, box_swarm(m.param_layout(), -5, 5, 1000, RngKey(19)),
                          kernel, {0.1, 0.9}, {30, {1000}}, RngKey(20));
  const auto mean = r.swarm.mean();
  for (std::size_t v = 0; v < 4; ++v) CHECK(std::abs(mean[v] - unit_mean(data, v)) < 3.0 / std::sqrt(double(N)));
}

TEST_CASE("swarm spread contracts with cooling") {
  const GaussianLocationModel m(1);
  auto kernel = PerturbationKernel::none(m.param_layout());
  kernel.set_unit(m.param_layout(), "mu", 1.0);
  std::vector<double> diff;
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    const auto data = location_data(1, 20, 0.0, RngKey(100 + rep));
    const auto swarm = box_swarm(m.param_layout(), -5, 5, 500, RngKey(200 + rep));
    const auto r = if2_run(m, data, swarm, kernel, {0.5, 0.9}, {50, {500}}, RngKey(300 + rep));
    diff.push_back(r.trace.records[4].sd[0] - r.trace.records[49].sd[0]);
  }
  double mean = 0.0, sq = 0.0;
  for (double d : diff) mean += d / 10;
  for (double d : diff) sq += (d - mean) * (d - mean) / 9;
  CHECK(mean > 3.0 * std::sqrt(sq / 10));
}

TEST_CASE("IEnKF recovers the observation offset of a linear-Gaussian lattice") {
  const SpatialGraph g = SpatialGraph::path(3);
  Eigen::MatrixXd A{{0.6, 0.2, 0.0}, {0.2, 0.6, 0.2}, {0.0, 0.2, 0.6}};
  const LinearGaussianLatticeModel m(g, A, Eigen::VectorXd::Ones(3), Eigen::VectorXd::Constant(3, 0.5),
                                     Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3));
  const auto data = simulate(m, m.parameters(1.5), 0.0, grid(50), RngKey(21)).observations;
  // The log-likelihood is quadratic in the offset: three evaluations fix it.
  const double h = 1.0;
  const double l0 = kalman_exact_loglik(m, data, 0.0).log_likelihood;
  const double lp = kalman_exact_loglik(m, data, h).log_likelihood;
  const double lm = kalman_exact_loglik(m, data, -h).log_likelihood;
  const double curvature = (lp - 2 * l0 + lm) / (h * h);
  const double mle = -((lp - lm) / (2 * h)) / curvature;
  const double se = 1.0 / std::sqrt(-curvature);
  const double l_check = kalman_exact_loglik(m, data, mle + 0.3).log_likelihood;
  CHECK(l_check == doctest::Approx(kalman_exact_loglik(m, data, mle).log_likelihood + 0.5 * curvature * 0.09).epsilon(1e-9));

  const auto& l = m.param_layout();
  auto kernel = PerturbationKernel::none(l);
  kernel.set_shared(l, "offset", 0.05);
  const auto swarm = box_swarm(l, -3, 3, 1000, RngKey(22));
  const auto r = ienkf_run(m, data, swarm, kernel, {1.0, 0.9}, {20, {1000}}, RngKey(23));
  CHECK(std::abs(r.swarm.mean()[l.shared_index(0)] - mle) < 2 * se);
}

TEST_CASE("metric evaluation") {
  const SpatialGraph g = SpatialGraph::path(1);
  const LinearGaussianLatticeModel m(g, Eigen::MatrixXd::Constant(1, 1, 0.8), Eigen::VectorXd::Ones(1),
                                     Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  const auto data = simulate(m, m.parameters(), 0.0, grid(50), RngKey(24)).observations;
  const double exact = kalman_exact_loglik(m, data).log_likelihood;
  const auto t = evaluate_metrics(m, BlockPartition::whole(1), m.parameters(), data, {20000}, 3, RngKey(25));
  CHECK(std::abs(t.pf.mean.value() - exact) < 1.0);
  CHECK(std::abs(t.enkf.mean.value() - exact) < 1.0);
  CHECK(t.pf.replicates.size() == 3);
  CHECK(t.bpf.per_unit_step == t.bpf.mean.value() / 50.0);
  const auto again = evaluate_metrics(m, BlockPartition::whole(1), m.parameters(), data, {20000}, 3, RngKey(25));
  CHECK(again.pf.mean == t.pf.mean);
  CHECK(again.enkf.mean == t.enkf.mean);
  CHECK(again.bpf.mean == t.bpf.mean);

  const auto hmm = DiscreteHMMModel::random(SpatialGraph::path(2), 2, 2, 1.0, RngKey(26));
  const auto hdata = simulate(hmm, hmm.parameters(), 0.0, grid(5), RngKey(27)).observations;
  const auto ht = evaluate_metrics(hmm, BlockPartition::whole(2), hmm.parameters(), hdata, {100}, 2, RngKey(28));
  CHECK_FALSE(ht.enkf.available);
  CHECK(ht.pf.available);
}

TEST_CASE("metric summaries") {
  const auto s = summarize_metric({LogValue(-10), LogValue(-12)}, 2, 5);
  CHECK(s.mean.value() == -11.0);
  CHECK(s.se == doctest::Approx(1.0));
  CHECK(s.per_unit_step == -1.1);
  CHECK(summarize_metric({LogValue(-10), LogValue::zero()}, 1, 1).mean.is_zero());
}

TEST_CASE("measles cases and the learning protocol") {
  const auto layout = measles::parameter_layout(2);
  CHECK(measles_case(layout, 1).n_learned == 8);
  CHECK(measles_case(layout, 4).n_learned == 14);
  CHECK(measles_case(measles::parameter_layout(40), 1).n_learned == 160);
  CHECK_THROWS_AS(measles_case(layout, 5), std::invalid_argument);
  for (Algorithm a : {Algorithm::ibpf, Algorithm::if2, Algorithm::ienkf})
    CHECK(algorithm_from_string(to_string(a)) == a);

  const Throws bad;
  const ObservationSeries data(0.0, grid(2), bad.observation_layout(), {0.0, 0.0});
  const auto swarm = box_swarm(bad.param_layout(), 0, 1, 10, RngKey(29));
  const auto kernel = PerturbationKernel::none(bad.param_layout());
  const auto failed = learn_once(Algorithm::if2, bad, BlockPartition::whole(1), data, swarm, kernel, {}, {1, {10}},
                                 RngKey(30));
  CHECK(failed.failed);
  CHECK(failed.failure.find("blew up") != std::string::npos);

  std::vector<LearnOutcome> outcomes(3);
  outcomes[0].own_metric = LogValue(-5);
  outcomes[1].own_metric = LogValue(-3);
  outcomes[1].failed = true;
  outcomes[2].own_metric = LogValue(-4);
  CHECK(best_replicate(outcomes) == 2u);
  for (auto& o : outcomes) o.failed = true;
  CHECK_FALSE(best_replicate(outcomes).has_value());
}
