#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "gpomp/graph.hpp"
#include "gpomp/measles.hpp"
#include "gpomp/model.hpp"
#include "gpomp/oracles.hpp"

using namespace gpomp;

namespace {

// Floyd-Warshall with "infinity" for unreachable pairs.
std::vector<std::size_t> floyd_warshall(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  const std::size_t inf = std::numeric_limits<std::size_t>::max() / 4;
  std::vector<std::size_t> d(n * n, inf);
  for (std::size_t v = 0; v < n; ++v) d[v * n + v] = 0;
  for (auto [a, b] : edges) d[a * n + b] = d[b * n + a] = 1;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] = std::min(d[i * n + j], d[i * n + k] + d[k * n + j]);
  for (auto& x : d)
    if (x >= inf) x = kUnreachable;
  return d;
}

std::vector<std::string> labels(std::size_t n) {
  std::vector<std::string> l;
  for (std::size_t v = 0; v < n; ++v) l.push_back("v" + std::to_string(v));
  return l;
}

SpatialGraph random_graph(Stream& rng, std::size_t n, double p, std::size_t r,
                          std::vector<std::pair<std::size_t, std::size_t>>* out = nullptr) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (rng.uniform() < p) edges.emplace_back(a, b);
  if (out) *out = edges;
  return SpatialGraph(labels(n), edges, r);
}

// Model whose measurement density is NaN at one unit.
class NanDensity final : public Model {
 public:
  explicit NanDensity(std::size_t bad) : bad_(bad), layout_(UnitLayout::uniform(3, 1)), params_(3, {}, {}) {}
  const UnitLayout& state_layout() const override { return layout_; }
  const UnitLayout& observation_layout() const override { return layout_; }
  const ParamLayout& param_layout() const override { return params_; }
  void rinit(std::span<const double>, double, std::span<double> x, Stream&) const override {
    std::fill(x.begin(), x.end(), 0.0);
  }
  void rprocess(std::span<double>, std::span<const double>, double, double, Stream&) const override {}
  LogValue dmeasure_unit(std::size_t v, std::span<const double>, std::span<const double>,
                         std::span<const double>) const override {
    return LogValue(v == bad_ ? std::nan("") : -1.0);
  }
  void rmeasure_unit(std::size_t, std::span<const double>, std::span<const double>, std::span<double> y,
                     Stream&) const override {
    y[0] = 0.0;
  }

 private:
  std::size_t bad_;
  UnitLayout layout_;
  ParamLayout params_;
};

// Model declaring one vertex fewer than the graph has.
class ShortField final : public Model {
 public:
  ShortField() : layout_(UnitLayout::uniform(2, 1)), params_(2, {}, {}) {}
  const UnitLayout& state_layout() const override { return layout_; }
  const UnitLayout& observation_layout() const override { return layout_; }
  const ParamLayout& param_layout() const override { return params_; }
  void rinit(std::span<const double>, double, std::span<double>, Stream&) const override {}
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

}  // namespace

TEST_CASE("breadth-first distances match Floyd-Warshall") {
  Stream rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 12);
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    const SpatialGraph g = random_graph(rng, n, rng.uniform() * 0.5, 1 + trial % 3, &edges);
    const auto fw = floyd_warshall(n, edges);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) REQUIRE(g.distance(a, b) == fw[a * n + b]);
  }
}

TEST_CASE("distance is a metric and neighbourhoods contain their centre") {
  Stream rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 10);
    const SpatialGraph g = random_graph(rng, n, 0.3, 1 + trial % 2);
    for (std::size_t a = 0; a < n; ++a) {
      CHECK(g.distance(a, a) == 0);
      const auto& nb = g.neighborhood(a);
      CHECK(std::find(nb.begin(), nb.end(), a) != nb.end());
      for (std::size_t b = 0; b < n; ++b) {
        CHECK(g.distance(a, b) == g.distance(b, a));
        const bool inside = g.distance(a, b) <= g.radius();
        CHECK(inside == (std::find(nb.begin(), nb.end(), b) != nb.end()));
        for (std::size_t c = 0; c < n; ++c)
          if (g.distance(a, c) != kUnreachable && g.distance(c, b) != kUnreachable)
            CHECK(g.distance(a, b) <= g.distance(a, c) + g.distance(c, b));
      }
    }
  }
}

TEST_CASE("disconnected components are unreachable") {
  const SpatialGraph g(labels(4), {{0, 1}, {2, 3}}, 5);
  CHECK(g.distance(0, 2) == kUnreachable);
  CHECK(g.neighborhood(0) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("contiguous partitions") {
  const auto forty = build_contiguous_partition(SpatialGraph::path(40), 2);
  REQUIRE(forty.size() == 20);
  CHECK(forty.block(0) == std::vector<std::size_t>{0, 1});
  CHECK(forty.block(19) == std::vector<std::size_t>{38, 39});

  const auto whole = build_contiguous_partition(SpatialGraph::path(5), 5);
  REQUIRE(whole.size() == 1);
  CHECK(whole.block(0).size() == 5);
  CHECK(build_contiguous_partition(SpatialGraph::path(5), 9).size() == 1);

  const auto rem = build_contiguous_partition(SpatialGraph::path(5), 2);
  REQUIRE(rem.size() == 3);
  CHECK(rem.block(2) == std::vector<std::size_t>{4});

  for (std::size_t n = 1; n <= 12; ++n)
    for (std::size_t size = 1; size <= n + 1; ++size) {
      const auto p = build_contiguous_partition(SpatialGraph::path(n), size);
      std::multiset<std::size_t> seen;
      for (const auto& b : p.blocks()) seen.insert(b.begin(), b.end());
      CHECK(seen.size() == n);
      CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == n);
    }
}

TEST_CASE("invalid partitions are rejected") {
  CHECK_THROWS_AS(BlockPartition({{0, 1}, {1, 2}}, 3), std::invalid_argument);
  CHECK_THROWS_AS(BlockPartition({{0}, {2}}, 3), std::invalid_argument);
  CHECK_THROWS_AS(build_contiguous_partition(SpatialGraph::path(3), 0), std::invalid_argument);
}

TEST_CASE("graph statistics") {
  const SpatialGraph path3 = SpatialGraph::path(3);
  CHECK(graph_stats(path3, BlockPartition({{0, 1}, {2}}, 3)) == GraphStats{3, 2, 2});
  CHECK(graph_stats(SpatialGraph::path(1), BlockPartition::whole(1)) == GraphStats{1, 1, 1});
  CHECK(graph_stats(SpatialGraph::complete(4), BlockPartition::whole(4)) == GraphStats{4, 1, 4});

  Stream rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 10);
    const SpatialGraph g = random_graph(rng, n, 0.4, 1);
    const auto p = build_contiguous_partition(g, 1 + trial % 4);
    const GraphStats s = graph_stats(g, p);
    CHECK(s.max_block_size >= 1);
    CHECK(s.max_block_size <= n);
    CHECK(s.max_neighborhood >= 1);
    CHECK(s.max_neighborhood <= n);
    CHECK(s.max_block_neighbors >= 1);
    CHECK(s.max_block_neighbors <= p.size());
  }
}

TEST_CASE("set distance and inner boundary") {
  const SpatialGraph g = SpatialGraph::path(6);
  CHECK(set_distance(g, {0, 1, 2}, {3, 4, 5}) == 1);
  CHECK(set_distance(g, {0}, {3, 4, 5}) == 3);
  CHECK(inner_boundary(g, {0, 1, 2}) == std::vector<std::size_t>{2});
}

TEST_CASE("log-zero sentinel") {
  const LogValue z = LogValue::zero();
  CHECK(z.is_zero());
  CHECK((z + LogValue(3.0)).is_zero());
  CHECK(log_of(0.0).is_zero());
  CHECK(log_of(1.0).value() == 0.0);
  CHECK_THROWS(z.value());
  CHECK(std::isinf(z.value_or_neg_inf()));
}

TEST_CASE("parameter transforms round-trip") {
  for (double x : {1e-300, 1e-12, 0.5, 1.0, 3.0, 1e12}) {
    CHECK(from_unconstrained(Transform::log, to_unconstrained(Transform::log, x)) == doctest::Approx(x).epsilon(1e-12));
  }
  for (double x : {1e-9, 0.001, 0.25, 0.5, 0.759, 0.999, 1 - 1e-9}) {
    const double back = from_unconstrained(Transform::logit, to_unconstrained(Transform::logit, x));
    CHECK(std::abs(back - x) <= 1e-12);
  }
  for (double x : {-5.0, 0.0, 7.25}) CHECK(from_unconstrained(Transform::identity, to_unconstrained(Transform::identity, x)) == x);
  for (double u : {-40.0, -3.0, 0.0, 3.0, 40.0}) {
    CHECK(from_unconstrained(Transform::log, u) > 0.0);
    const double p = from_unconstrained(Transform::logit, u);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
  CHECK(transform_from_string(to_string(Transform::logit)) == Transform::logit);
}

TEST_CASE("observation series must be rectangular and increasing") {
  CHECK_THROWS_AS(ObservationSeries(0.0, {1.0, 1.0}, UnitLayout::uniform(1, 1), {0.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(ObservationSeries(0.0, {1.0, 2.0}, UnitLayout::uniform(2, 1), {0.0, 0.0, 0.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(ObservationSeries(1.0, {1.0}, UnitLayout::uniform(1, 1), {0.0}), std::invalid_argument);
}

TEST_CASE("model validation") {
  const measles::MeaslesModel m(measles::CityCovariates::synthetic(3));
  const SpatialGraph g = SpatialGraph::complete(3);
  const auto ok = validate_model(m, g, measles::baseline_parameters(3), RngKey(1), 0.0, 1.0 / 26);
  CHECK(ok.ok);
  CHECK(ok.state_dims == std::vector<std::size_t>{4, 4, 4});

  const NanDensity nan(1);
  const auto bad = validate_model(nan, SpatialGraph::path(3), UnitParameterField(nan.param_layout()), RngKey(1));
  CHECK_FALSE(bad.ok);
  REQUIRE(bad.issues.size() == 1);
  CHECK(bad.issues[0].unit == 1u);
  CHECK(bad.issues[0].time_index == 1u);

  const ShortField short_field;
  const auto mismatch =
      validate_model(short_field, SpatialGraph::path(3), UnitParameterField(short_field.param_layout()), RngKey(1));
  CHECK_FALSE(mismatch.ok);
  CHECK(mismatch.summary().find("dimension mismatch") != std::string::npos);
}
