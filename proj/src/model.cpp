#include "gpomp/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace gpomp {

namespace {

// Naturals are kept strictly inside their domains so that every transformed
// coordinate is finite; a walk far into the tails otherwise rounds to 0 or 1.
constexpr double kTiny = std::numeric_limits<double>::min();
constexpr double kBelowOne = 1.0 - std::numeric_limits<double>::epsilon() / 2;

}  // namespace

double to_unconstrained(Transform t, double natural) {
  switch (t) {
    case Transform::identity:
      return natural;
    case Transform::log:
      return std::log(std::max(natural, kTiny));
    case Transform::logit: {
      const double p = std::clamp(natural, kTiny, kBelowOne);
      return std::log(p) - std::log1p(-p);
    }
  }
  return natural;
}

double from_unconstrained(Transform t, double u) {
  switch (t) {
    case Transform::identity:
      return u;
    case Transform::log:
      return std::max(std::exp(u), kTiny);
    case Transform::logit:
      return std::clamp(u >= 0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u)), kTiny, kBelowOne);
  }
  return u;
}

const char* to_string(Transform t) {
  switch (t) {
    case Transform::identity:
      return "identity";
    case Transform::log:
      return "log";
    case Transform::logit:
      return "logit";
  }
  return "identity";
}

Transform transform_from_string(const std::string& s) {
  if (s == "identity") return Transform::identity;
  if (s == "log") return Transform::log;
  if (s == "logit") return Transform::logit;
  throw std::invalid_argument("unknown transform '" + s + "'");
}

ParamLayout::ParamLayout(std::size_t n_units, std::vector<ParamSpec> unit, std::vector<ParamSpec> shared)
    : n_units_(n_units), unit_(std::move(unit)), shared_(std::move(shared)) {}

const ParamSpec& ParamLayout::spec(std::size_t coord) const {
  const std::size_t unit_total = n_units_ * unit_.size();
  if (coord < unit_total) return unit_[coord % unit_.size()];
  if (coord - unit_total >= shared_.size()) throw std::out_of_range("parameter coordinate out of range");
  return shared_[coord - unit_total];
}

std::optional<std::size_t> ParamLayout::unit_of(std::size_t coord) const noexcept {
  if (unit_.empty() || coord >= n_units_ * unit_.size()) return std::nullopt;
  return coord / unit_.size();
}

std::string ParamLayout::coord_name(std::size_t coord) const {
  const auto& s = spec(coord);
  if (auto v = unit_of(coord)) return s.name + "[" + std::to_string(*v + 1) + "]";
  return s.name;
}

std::optional<std::size_t> ParamLayout::find_unit(const std::string& name) const {
  for (std::size_t k = 0; k < unit_.size(); ++k)
    if (unit_[k].name == name) return k;
  return std::nullopt;
}

std::optional<std::size_t> ParamLayout::find_shared(const std::string& name) const {
  for (std::size_t k = 0; k < shared_.size(); ++k)
    if (shared_[k].name == name) return k;
  return std::nullopt;
}

bool operator==(const ParamLayout& a, const ParamLayout& b) {
  auto same = [](const std::vector<ParamSpec>& x, const std::vector<ParamSpec>& y) {
    return std::equal(x.begin(), x.end(), y.begin(), y.end(), [](const ParamSpec& p, const ParamSpec& q) {
      return p.name == q.name && p.transform == q.transform && p.ivp == q.ivp;
    });
  };
  return a.n_units_ == b.n_units_ && same(a.unit_, b.unit_) && same(a.shared_, b.shared_);
}

UnitParameterField::UnitParameterField(ParamLayout l, std::vector<double> v)
    : layout(std::move(l)), values(std::move(v)) {
  if (values.size() != layout.size()) throw std::invalid_argument("parameter vector does not match layout");
}

UnitLayout::UnitLayout(std::vector<std::size_t> dims) : dims_(std::move(dims)), offsets_(dims_.size()) {
  for (std::size_t v = 0; v < dims_.size(); ++v) {
    offsets_[v] = total_;
    total_ += dims_[v];
  }
}

ObservationSeries::ObservationSeries(double t0, std::vector<double> times, UnitLayout layout,
                                     std::vector<double> values)
    : t0_(t0), times_(std::move(times)), layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != times_.size() * layout_.total())
    throw std::invalid_argument("observation table is not rectangular");
  double prev = t0_;
  for (double t : times_) {
    if (!(t > prev)) throw std::invalid_argument("observation times must be strictly increasing after t0");
    prev = t;
  }
}

std::string ValidationReport::summary() const {
  if (ok) return "ok";
  std::ostringstream out;
  for (std::size_t i = 0; i < issues.size(); ++i) {
    if (i) out << "; ";
    out << issues[i].what;
    if (issues[i].unit) out << " (unit " << *issues[i].unit + 1 << ")";
    if (issues[i].time_index) out << " (time index " << *issues[i].time_index << ")";
  }
  return out.str();
}

namespace {

bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

ValidationReport validate_model(const Model& model, const SpatialGraph& graph, const UnitParameterField& theta,
                                RngKey key, double t0, double t1) {
  ValidationReport report;
  auto fail = [&](std::string what, std::optional<std::size_t> unit = {}, std::optional<std::size_t> n = {}) {
    report.ok = false;
    report.issues.push_back({std::move(what), unit, n});
  };

  const std::size_t n_units = graph.size();
  const auto& sl = model.state_layout();
  const auto& ol = model.observation_layout();
  if (sl.n_units() != n_units)
    fail("dimension mismatch: state field has " + std::to_string(sl.n_units()) + " units, graph has " +
         std::to_string(n_units));
  if (ol.n_units() != n_units)
    fail("dimension mismatch: observation field has " + std::to_string(ol.n_units()) + " units, graph has " +
         std::to_string(n_units));
  if (model.param_layout().n_units() != n_units && model.param_layout().unit_size() > 0)
    fail("dimension mismatch: parameter field has " + std::to_string(model.param_layout().n_units()) + " units");
  if (!(theta.layout == model.param_layout())) fail("dimension mismatch: parameter layout differs from model");
  if (!report.ok) return report;
  report.state_dims = sl.dims();

  std::vector<double> x(sl.total());
  std::vector<double> y(ol.total());
  try {
    Stream rng = key.child(StreamTag::init).stream();
    model.rinit(theta.values, t0, x, rng);
    for (std::size_t v = 0; v < n_units; ++v)
      if (!all_finite(sl.unit(std::span<const double>(x), v))) fail("non-finite initial state", v, 0);

    rng = key.child(StreamTag::process).stream();
    model.rprocess(x, theta.values, t0, t1, rng);
    for (std::size_t v = 0; v < n_units; ++v)
      if (!all_finite(sl.unit(std::span<const double>(x), v))) fail("non-finite state after rprocess", v, 1);

    rng = key.child(StreamTag::measurement).stream();
    for (std::size_t v = 0; v < n_units; ++v) {
      auto xv = sl.unit(std::span<const double>(x), v);
      auto yv = ol.unit(std::span<double>(y), v);
      model.rmeasure_unit(v, xv, theta.values, yv, rng);
      const LogValue ld = model.dmeasure_unit(v, yv, xv, theta.values);
      if (!ld.is_zero() && !std::isfinite(ld.value_or_neg_inf())) fail("non-finite measurement log-density", v, 1);
    }
  } catch (const std::exception& e) {
    fail(std::string("model callback failed: ") + e.what());
  }
  return report;
}

Simulation simulate(const Model& model, const UnitParameterField& theta, double t0, const std::vector<double>& times,
                    RngKey key) {
  const auto& sl = model.state_layout();
  const auto& ol = model.observation_layout();
  std::vector<double> states((times.size() + 1) * sl.total());
  std::vector<double> obs(times.size() * ol.total());

  std::span<double> x(states.data(), sl.total());
  Stream init_rng = key.child(StreamTag::init).stream();
  model.rinit(theta.values, t0, x, init_rng);

  double prev = t0;
  for (std::size_t n = 0; n < times.size(); ++n) {
    std::span<double> next(states.data() + (n + 1) * sl.total(), sl.total());
    std::copy(x.begin(), x.end(), next.begin());
    Stream rng = key.child(StreamTag::process, n).stream();
    model.rprocess(next, theta.values, prev, times[n], rng);
    Stream mrng = key.child(StreamTag::measurement, n).stream();
    std::span<double> yrow(obs.data() + n * ol.total(), ol.total());
    for (std::size_t v = 0; v < sl.n_units(); ++v)
      model.rmeasure_unit(v, sl.unit(std::span<const double>(next), v), theta.values, ol.unit(yrow, v), mrng);
    x = next;
    prev = times[n];
  }
  return Simulation{ObservationSeries(t0, times, ol, std::move(obs)), std::move(states)};
}

}  // namespace gpomp
