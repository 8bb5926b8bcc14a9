#pragma once

// Spatiotemporal measles SEIR model with city-specific parameters, gravity
// coupling between cities, over-dispersed stochastic Euler dynamics and a
// discretized Gaussian reporting model.  Time is measured in years.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gpomp/model.hpp"
#include "gpomp/rng.hpp"

namespace gpomp::measles {

/// Piecewise-linear path through (time, value) knots, constant outside the
/// knot span.
class PiecewiseLinear {
 public:
  PiecewiseLinear() = default;
  explicit PiecewiseLinear(double constant) : times_{0.0}, values_{constant} {}
  PiecewiseLinear(std::vector<double> times, std::vector<double> values);

  double at(double t) const;
  /// Average over [t0, t1] by exact integration of the interpolant.
  double average(double t0, double t1) const;
  /// Average over the knot span (the value itself for a single knot).
  double average() const;
  bool is_constant() const noexcept { return times_.size() == 1; }
  const std::vector<double>& times() const noexcept { return times_; }
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  std::vector<double> times_;
  std::vector<double> values_;
};

struct CityCovariates {
  std::vector<std::string> names;
  std::vector<PiecewiseLinear> population;  // P^v(t)
  std::vector<PiecewiseLinear> births;      // μ_BS^v(t), births per year
  std::vector<double> distance;             // row-major n x n

  std::size_t size() const noexcept { return names.size(); }
  double dist(std::size_t v, std::size_t w) const { return distance[v * size() + w]; }
  void validate() const;

  /// Synthetic covariates: constant populations 3.39e6 / rank, equilibrium
  /// births μ_D·P, distances between cities placed on a golden-angle spiral.
  static CityCovariates synthetic(std::size_t n_cities, double death_rate = 0.02);
};

/// School calendar: term occupies the fraction p of each year starting at the
/// year boundary, followed by one vacation block.
struct SchoolCalendar {
  double term_fraction = 0.759;
  bool in_term(double t) const;
};

/// Gravity-model traveler counts θ_{vw} = G (d̄ / P̄²) P̄^v P̄^w / d(v,w), where
/// P̄^v averages the population path over `span` (or the knot span when empty).
std::vector<double> travel_matrix(const CityCovariates& covariates, double gravity);

/// Seasonal transmission rate (per year).
double seasonal_beta(bool term, double r0, double mu_ir, double holiday_reduction, double term_fraction);

/// λ^v for every city, floored at zero.  `travel` is the n x n matrix θ_{vw}.
void force_of_infection(std::span<const double> infected, std::span<const double> population,
                        std::span<const double> alpha, std::span<const double> beta, double immigration,
                        std::span<const double> travel, std::span<double> out);

/// log P(Y = y | Z = z) for the discretized Gaussian reporting model with
/// variance ρ(1-ρ)z + ψ²ρ²z² + variance_floor.  Cell y = 0 extends to -∞.
LogValue dmeasure_cases(double y, double z, double rho, double psi, double variance_floor);

/// Parameter names, in layout order.
namespace param {
inline constexpr const char* R0 = "R0";
inline constexpr const char* alpha = "alpha";
inline constexpr const char* sigmaSE = "sigmaSE";
inline constexpr const char* S_0 = "S_0";
inline constexpr const char* E_0 = "E_0";
inline constexpr const char* I_0 = "I_0";
inline constexpr const char* R_0 = "R_0";
inline constexpr const char* muEI = "muEI";
inline constexpr const char* muIR = "muIR";
inline constexpr const char* muD = "muD";
inline constexpr const char* p = "p";
inline constexpr const char* rho = "rho";
inline constexpr const char* psi = "psi";
inline constexpr const char* theta_a = "theta_a";
inline constexpr const char* iota = "iota";
inline constexpr const char* G = "G";
}  // namespace param

enum UnitParam : std::size_t { kR0, kAlpha, kSigmaSE, kS0, kE0, kI0, kR0frac, kUnitParams };
enum SharedParam : std::size_t { kMuEI, kMuIR, kMuD, kTermFraction, kRho, kPsi, kThetaA, kIota, kGravity, kSharedParams };
enum StateIndex : std::size_t { kS, kE, kI, kZ, kStateDim };

ParamLayout parameter_layout(std::size_t n_cities);

/// Baseline values: α=1, R0=30, σ_SE=0.15, S=0.032, E=5e-5, I=4e-5, R=rest;
/// μ_EI=μ_IR=52, μ_D=0.02, p=0.759, ρ=0.5, ψ=0.15, θ_a=0.5, ι=0, G=400.
UnitParameterField baseline_parameters(std::size_t n_cities);

/// City-specific values drawn uniformly from [lo, hi] times the baseline, with
/// R fraction set to the remainder.
UnitParameterField draw_truth(std::size_t n_cities, RngKey key, double lo = 0.99, double hi = 1.0355);
/// Same scaling applied to an arbitrary base field.
UnitParameterField draw_truth(const UnitParameterField& base, RngKey key, double lo = 0.99, double hi = 1.0355);

/// Parameters learned in each of the four experiment cases.
std::vector<std::string> case_parameters(int experiment_case);

struct SearchBox {
  double lower;
  double upper;
};
/// Uniform initial-search box for a unit parameter.
SearchBox search_box(const std::string& name);

struct MeaslesOptions {
  std::size_t steps_per_obs = 7;
  double observation_interval = 1.0 / 26.0;
  double variance_floor = 1.0;
  SchoolCalendar calendar;
};

class MeaslesModel final : public Model {
 public:
  MeaslesModel(CityCovariates covariates, MeaslesOptions options = {});

  const UnitLayout& state_layout() const override { return states_; }
  const UnitLayout& observation_layout() const override { return observations_; }
  const ParamLayout& param_layout() const override { return params_; }

  void rinit(std::span<const double> theta, double t0, std::span<double> x, Stream& rng) const override;
  void rprocess(std::span<double> x, std::span<const double> theta, double t0, double t1,
                Stream& rng) const override;
  LogValue dmeasure_unit(std::size_t v, std::span<const double> y, std::span<const double> x,
                         std::span<const double> theta) const override;
  void rmeasure_unit(std::size_t v, std::span<const double> x, std::span<const double> theta, std::span<double> y,
                     Stream& rng) const override;
  bool has_emeasure() const override { return true; }
  void emeasure_unit(std::size_t v, std::span<const double> x, std::span<const double> theta,
                     std::span<double> mean, std::span<double> variance) const override;
  void canonicalize(std::span<double> theta) const override;

  /// One Euler increment of length dt starting at t; Z accumulates I→R.
  void euler_step(std::span<double> x, std::span<const double> theta, double t, double dt, Stream& rng) const;

  const CityCovariates& covariates() const noexcept { return covariates_; }
  const MeaslesOptions& options() const noexcept { return options_; }
  std::size_t n_cities() const noexcept { return covariates_.size(); }
  /// Traveler matrix at G = 1.
  const std::vector<double>& unit_travel() const noexcept { return unit_travel_; }

  /// Biweekly observation times covering n_years.
  std::vector<double> observation_times(double n_years) const;

 private:
  CityCovariates covariates_;
  MeaslesOptions options_;
  UnitLayout states_;
  UnitLayout observations_;
  ParamLayout params_;
  std::vector<double> unit_travel_;
};

struct MeaslesDataset {
  ObservationSeries cases;
  std::vector<double> states;  // (N+1) x (4 n_cities), row 0 at t = 0
};

/// Simulates n_years of biweekly reports starting at t = 0.
MeaslesDataset simulate_dataset(const MeaslesModel& model, const UnitParameterField& theta, double n_years,
                                RngKey key);

}  // namespace gpomp::measles
