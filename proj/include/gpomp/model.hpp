#pragma once

// Graphical POMP data model and the plug-and-play model contract.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gpomp/graph.hpp"
#include "gpomp/rng.hpp"

namespace gpomp {

/// Log of a nonnegative quantity, with an explicit flag for log(0).
/// The zero state never takes part in floating-point arithmetic.
class LogValue {
 public:
  constexpr LogValue() noexcept = default;
  constexpr explicit LogValue(double log) noexcept : value_(log), zero_(false) {}

  static constexpr LogValue zero() noexcept {
    LogValue z;
    z.zero_ = true;
    return z;
  }

  constexpr bool is_zero() const noexcept { return zero_; }
  /// Throws on the zero sentinel.
  double value() const {
    if (zero_) throw std::domain_error("log-zero has no finite value");
    return value_;
  }
  /// Finite value, or -inf for the sentinel (reporting only).
  double value_or_neg_inf() const noexcept { return zero_ ? -INFINITY : value_; }

  friend constexpr LogValue operator+(LogValue a, LogValue b) noexcept {
    if (a.zero_ || b.zero_) return zero();
    return LogValue(a.value_ + b.value_);
  }
  LogValue& operator+=(LogValue other) noexcept { return *this = *this + other; }

  friend constexpr bool operator==(const LogValue&, const LogValue&) = default;

 private:
  double value_ = 0.0;
  bool zero_ = false;
};

/// Wraps a density that may underflow to exactly zero.
inline LogValue log_of(double density) noexcept {
  return density > 0.0 ? LogValue(std::log(density)) : LogValue::zero();
}

enum class Transform { identity, log, logit };

double to_unconstrained(Transform t, double natural);
double from_unconstrained(Transform t, double unconstrained);
const char* to_string(Transform t);
Transform transform_from_string(const std::string& s);

struct ParamSpec {
  std::string name;
  Transform transform = Transform::identity;
  bool ivp = false;  // consumed only by rinit
};

/// Coordinate layout of a parameter field: per-unit blocks followed by shared
/// scalars.  Coordinate index of (v, k) is v * unit_size + k.
class ParamLayout {
 public:
  ParamLayout() = default;
  ParamLayout(std::size_t n_units, std::vector<ParamSpec> unit, std::vector<ParamSpec> shared);

  std::size_t n_units() const noexcept { return n_units_; }
  std::size_t unit_size() const noexcept { return unit_.size(); }
  std::size_t shared_size() const noexcept { return shared_.size(); }
  std::size_t size() const noexcept { return n_units_ * unit_.size() + shared_.size(); }

  std::size_t unit_index(std::size_t v, std::size_t k) const noexcept { return v * unit_.size() + k; }
  std::size_t shared_index(std::size_t k) const noexcept { return n_units_ * unit_.size() + k; }

  const std::vector<ParamSpec>& unit_specs() const noexcept { return unit_; }
  const std::vector<ParamSpec>& shared_specs() const noexcept { return shared_; }

  /// Spec governing a flat coordinate.
  const ParamSpec& spec(std::size_t coord) const;
  /// Owning unit of a coordinate, or nullopt for shared coordinates.
  std::optional<std::size_t> unit_of(std::size_t coord) const noexcept;
  std::string coord_name(std::size_t coord) const;

  std::optional<std::size_t> find_unit(const std::string& name) const;
  std::optional<std::size_t> find_shared(const std::string& name) const;

  friend bool operator==(const ParamLayout& a, const ParamLayout& b);

 private:
  std::size_t n_units_ = 0;
  std::vector<ParamSpec> unit_;
  std::vector<ParamSpec> shared_;
};

/// A single parameter field θ on the natural scale.
struct UnitParameterField {
  ParamLayout layout;
  std::vector<double> values;

  explicit UnitParameterField(ParamLayout l) : layout(std::move(l)), values(layout.size(), 0.0) {}
  UnitParameterField(ParamLayout l, std::vector<double> v);

  double& unit(std::size_t v, std::size_t k) { return values[layout.unit_index(v, k)]; }
  double unit(std::size_t v, std::size_t k) const { return values[layout.unit_index(v, k)]; }
  double& shared(std::size_t k) { return values[layout.shared_index(k)]; }
  double shared(std::size_t k) const { return values[layout.shared_index(k)]; }
};

/// Per-unit vector dimensions for latent states or observations.
class UnitLayout {
 public:
  UnitLayout() = default;
  explicit UnitLayout(std::vector<std::size_t> dims);
  static UnitLayout uniform(std::size_t n_units, std::size_t dim) {
    return UnitLayout(std::vector<std::size_t>(n_units, dim));
  }

  std::size_t n_units() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t v) const { return dims_[v]; }
  std::size_t offset(std::size_t v) const { return offsets_[v]; }
  std::size_t total() const noexcept { return total_; }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }

  template <typename T>
  std::span<T> unit(std::span<T> full, std::size_t v) const {
    return full.subspan(offsets_[v], dims_[v]);
  }

  friend bool operator==(const UnitLayout& a, const UnitLayout& b) { return a.dims_ == b.dims_; }

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

/// y_n^v for n = 1..N on a strictly increasing time grid starting after t0.
class ObservationSeries {
 public:
  ObservationSeries(double t0, std::vector<double> times, UnitLayout layout, std::vector<double> values);

  double t0() const noexcept { return t0_; }
  std::size_t n_times() const noexcept { return times_.size(); }
  double time(std::size_t n) const { return times_[n]; }
  const std::vector<double>& times() const noexcept { return times_; }
  const UnitLayout& layout() const noexcept { return layout_; }
  std::size_t n_units() const noexcept { return layout_.n_units(); }

  /// All units at step n (0-based).
  std::span<const double> row(std::size_t n) const {
    return std::span<const double>(values_).subspan(n * layout_.total(), layout_.total());
  }
  std::span<const double> unit(std::size_t n, std::size_t v) const { return layout_.unit(row(n), v); }
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  double t0_;
  std::vector<double> times_;
  UnitLayout layout_;
  std::vector<double> values_;
};

class UnsupportedOperation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Plug-and-play model contract.  Only simulators of the latent process are
/// ever requested; the measurement density is evaluated one unit at a time.
/// Implementations must be pure given their inputs and stream so that the
/// engine can call them concurrently on distinct particles.
class Model {
 public:
  virtual ~Model() = default;

  virtual const UnitLayout& state_layout() const = 0;
  virtual const UnitLayout& observation_layout() const = 0;
  virtual const ParamLayout& param_layout() const = 0;

  /// Draw X_0 given θ.
  virtual void rinit(std::span<const double> theta, double t0, std::span<double> x, Stream& rng) const = 0;
  /// Advance the whole latent field from t0 to t1 in place.
  virtual void rprocess(std::span<double> x, std::span<const double> theta, double t0, double t1,
                        Stream& rng) const = 0;
  /// log f(y^v | x^v; θ^v); may return the zero sentinel.
  virtual LogValue dmeasure_unit(std::size_t v, std::span<const double> y, std::span<const double> x,
                                 std::span<const double> theta) const = 0;
  virtual void rmeasure_unit(std::size_t v, std::span<const double> x, std::span<const double> theta,
                             std::span<double> y, Stream& rng) const = 0;

  virtual bool has_emeasure() const { return false; }
  /// Mean and (diagonal) variance of Y^v given x^v.
  virtual void emeasure_unit(std::size_t /*v*/, std::span<const double> /*x*/, std::span<const double> /*theta*/,
                             std::span<double> /*mean*/, std::span<double> /*variance*/) const {
    throw UnsupportedOperation("model does not provide emeasure_unit");
  }

  /// Maps a field to its canonical representative (e.g. renormalizing
  /// fractions).  Identity by default.
  virtual void canonicalize(std::span<double> /*theta*/) const {}

  std::size_t n_units() const { return state_layout().n_units(); }
};

struct ValidationIssue {
  std::string what;
  std::optional<std::size_t> unit;
  std::optional<std::size_t> time_index;
};

struct ValidationReport {
  bool ok = true;
  std::vector<std::size_t> state_dims;
  std::vector<ValidationIssue> issues;
  std::string summary() const;
};

/// Smoke check: rinit, one rprocess step, rmeasure and dmeasure at every unit.
ValidationReport validate_model(const Model& model, const SpatialGraph& graph, const UnitParameterField& theta,
                                RngKey key, double t0 = 0.0, double t1 = 1.0);

struct Simulation {
  ObservationSeries observations;
  std::vector<double> states;  // (N+1) x state total, row 0 is X_0
};

/// Draw one latent trajectory and observations at the given times.
Simulation simulate(const Model& model, const UnitParameterField& theta, double t0, const std::vector<double>& times,
                    RngKey key);

}  // namespace gpomp
