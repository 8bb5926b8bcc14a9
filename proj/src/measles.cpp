#include "gpomp/measles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "gpomp/variates.hpp"

namespace gpomp::measles {

PiecewiseLinear::PiecewiseLinear(std::vector<double> times, std::vector<double> values)
    : times_(std::move(times)), values_(std::move(values)) {
  if (times_.empty() || times_.size() != values_.size())
    throw std::invalid_argument("piecewise-linear path needs matching, nonempty knots");
  for (std::size_t i = 1; i < times_.size(); ++i)
    if (!(times_[i] > times_[i - 1])) throw std::invalid_argument("knot times must increase");
}

double PiecewiseLinear::at(double t) const {
  if (times_.size() == 1 || t <= times_.front()) return values_.front();
  if (t >= times_.back()) return values_.back();
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - times_.begin());
  const double w = (t - times_[i - 1]) / (times_[i] - times_[i - 1]);
  return values_[i - 1] + w * (values_[i] - values_[i - 1]);
}

double PiecewiseLinear::average(double t0, double t1) const {
  if (!(t1 > t0)) return at(t0);
  // integrate the interpolant over [t0, t1] piece by piece
  std::vector<double> cuts{t0};
  for (double k : times_)
    if (k > t0 && k < t1) cuts.push_back(k);
  cuts.push_back(t1);
  double integral = 0.0;
  for (std::size_t i = 1; i < cuts.size(); ++i)
    integral += 0.5 * (at(cuts[i - 1]) + at(cuts[i])) * (cuts[i] - cuts[i - 1]);
  return integral / (t1 - t0);
}

double PiecewiseLinear::average() const {
  return times_.size() == 1 ? values_.front() : average(times_.front(), times_.back());
}

void CityCovariates::validate() const {
  const std::size_t n = size();
  if (n == 0) throw std::invalid_argument("covariates need at least one city");
  if (population.size() != n || births.size() != n || distance.size() != n * n)
    throw std::invalid_argument("covariate tables disagree on the number of cities");
  for (const auto& p : population)
    for (double x : p.values())
      if (!(x > 0.0)) throw std::invalid_argument("populations must be positive");
  for (const auto& b : births)
    for (double x : b.values())
      if (!(x >= 0.0)) throw std::invalid_argument("birth rates must be nonnegative");
  for (std::size_t v = 0; v < n; ++v) {
    if (dist(v, v) != 0.0) throw std::invalid_argument("distance matrix must have a zero diagonal");
    for (std::size_t w = 0; w < n; ++w)
      if (dist(v, w) != dist(w, v)) throw std::invalid_argument("distance matrix must be symmetric");
  }
}

CityCovariates CityCovariates::synthetic(std::size_t n_cities, double death_rate) {
  constexpr double london = 3.39e6;
  constexpr double golden_angle = 2.399963229728653;
  CityCovariates cov;
  std::vector<double> xs(n_cities), ys(n_cities);
  for (std::size_t v = 0; v < n_cities; ++v) {
    const double pop = std::round(london / static_cast<double>(v + 1));
    cov.names.push_back("city" + std::to_string(v + 1));
    cov.population.emplace_back(pop);
    cov.births.emplace_back(death_rate * pop);
    const double radius = 60.0 * std::sqrt(static_cast<double>(v) + 0.5);
    xs[v] = radius * std::cos(golden_angle * static_cast<double>(v));
    ys[v] = radius * std::sin(golden_angle * static_cast<double>(v));
  }
  cov.distance.assign(n_cities * n_cities, 0.0);
  for (std::size_t v = 0; v < n_cities; ++v)
    for (std::size_t w = 0; w < n_cities; ++w)
      if (v != w) cov.distance[v * n_cities + w] = std::hypot(xs[v] - xs[w], ys[v] - ys[w]);
  return cov;
}

bool SchoolCalendar::in_term(double t) const {
  const double frac = t - std::floor(t);
  return frac < term_fraction;
}

std::vector<double> travel_matrix(const CityCovariates& cov, double gravity) {
  const std::size_t n = cov.size();
  if (n < 2) throw std::invalid_argument("travel matrix needs at least two cities");
  std::vector<double> pbar(n);
  double p_mean = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    pbar[v] = cov.population[v].average();
    p_mean += pbar[v];
  }
  p_mean /= static_cast<double>(n);
  double d_mean = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t w = v + 1; w < n; ++w) {
      if (!(cov.dist(v, w) > 0.0)) throw std::invalid_argument("cities must be at distinct locations");
      d_mean += cov.dist(v, w);
    }
  }
  d_mean /= static_cast<double>(n * (n - 1) / 2);

  std::vector<double> out(n * n, 0.0);
  const double scale = gravity * d_mean / (p_mean * p_mean);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t w = 0; w < n; ++w)
      if (v != w) out[v * n + w] = scale * pbar[v] * pbar[w] / cov.dist(v, w);
  return out;
}

double seasonal_beta(bool term, double r0, double mu_ir, double holiday_reduction, double term_fraction) {
  return term ? (1.0 + holiday_reduction * (1.0 - term_fraction) / term_fraction) * r0 * mu_ir
              : (1.0 - holiday_reduction) * r0 * mu_ir;
}

void force_of_infection(std::span<const double> infected, std::span<const double> population,
                        std::span<const double> alpha, std::span<const double> beta, double immigration,
                        std::span<const double> travel, std::span<double> out) {
  const std::size_t n = infected.size();
  // prevalence terms (I/P)^α are reused across the coupling sums
  double prevalence[64];
  std::vector<double> heap;
  double* pw = prevalence;
  if (n > 64) {
    heap.resize(n);
    pw = heap.data();
  }
  for (std::size_t v = 0; v < n; ++v) pw[v] = std::pow(infected[v] / population[v], alpha[v]);
  for (std::size_t v = 0; v < n; ++v) {
    const double own =
        immigration == 0.0 ? pw[v] : std::pow((infected[v] + immigration) / population[v], alpha[v]);
    double coupling = 0.0;
    const double* row = travel.data() + v * n;
    for (std::size_t w = 0; w < n; ++w)
      if (w != v) coupling += row[w] / population[v] * (pw[w] - pw[v]);
    out[v] = std::max(0.0, beta[v] * (own + coupling));
  }
}

namespace {

// log P(N(0,1) > x), accurate far into the tail where erfc underflows.
double log_upper_tail(double x) {
  if (x < 35.0) return std::log(0.5 * std::erfc(x / std::numbers::sqrt2));
  // asymptotic series; relative error below 105 / x^8
  const double r = 1.0 / (x * x);
  return -0.5 * x * x - std::log(x) - 0.5 * std::log(2.0 * std::numbers::pi) +
         std::log1p(r * (-1.0 + r * (3.0 - 15.0 * r)));
}

// log(P(N > a) - P(N > b)) for a < b.
double log_tail_difference(double a, double b) {
  const double la = log_upper_tail(a);
  return la + std::log1p(-std::exp(log_upper_tail(b) - la));
}

}  // namespace

LogValue dmeasure_cases(double y, double z, double rho, double psi, double variance_floor) {
  if (!(y >= 0.0)) return LogValue::zero();
  const double mean = rho * z;
  const double var = rho * (1.0 - rho) * z + psi * psi * rho * rho * z * z + variance_floor;
  if (!(var > 0.0)) {
    // point mass, rounded the way rmeasure rounds
    const double at = mean < 0.5 ? 0.0 : std::floor(mean + 0.5);
    return y == at ? LogValue(0.0) : LogValue::zero();
  }
  const double sd = std::sqrt(var);
  const double hi = (y + 0.5 - mean) / sd;
  const double lo = (y - 0.5 - mean) / sd;
  double log_prob;
  if (y < 0.5)
    log_prob = log_upper_tail(-hi);  // the zero cell takes the whole lower tail
  else if (lo > 0.0)
    log_prob = log_tail_difference(lo, hi);
  else if (hi < 0.0)
    log_prob = log_tail_difference(-hi, -lo);
  else
    log_prob = std::log(0.5 * (std::erf(hi / std::numbers::sqrt2) - std::erf(lo / std::numbers::sqrt2)));
  return std::isfinite(log_prob) ? LogValue(log_prob) : LogValue::zero();
}

ParamLayout parameter_layout(std::size_t n_cities) {
  using enum Transform;
  std::vector<ParamSpec> unit{
      {param::R0, log, false},  {param::alpha, log, false}, {param::sigmaSE, log, false}, {param::S_0, log, true},
      {param::E_0, log, true},  {param::I_0, log, true},    {param::R_0, log, true},
  };
  std::vector<ParamSpec> shared{
      {param::muEI, log, false},     {param::muIR, log, false}, {param::muD, log, false},
      {param::p, logit, false},      {param::rho, logit, false}, {param::psi, log, false},
      {param::theta_a, logit, false}, {param::iota, identity, false}, {param::G, log, false},
  };
  return ParamLayout(n_cities, std::move(unit), std::move(shared));
}

UnitParameterField baseline_parameters(std::size_t n_cities) {
  UnitParameterField f(parameter_layout(n_cities));
  for (std::size_t v = 0; v < n_cities; ++v) {
    f.unit(v, kR0) = 30.0;
    f.unit(v, kAlpha) = 1.0;
    f.unit(v, kSigmaSE) = 0.15;
    f.unit(v, kS0) = 0.032;
    f.unit(v, kE0) = 5e-5;
    f.unit(v, kI0) = 4e-5;
    f.unit(v, kR0frac) = 1.0 - 0.032 - 5e-5 - 4e-5;
  }
  f.shared(kMuEI) = 52.0;
  f.shared(kMuIR) = 52.0;
  f.shared(kMuD) = 0.02;
  f.shared(kTermFraction) = 0.759;
  f.shared(kRho) = 0.5;
  f.shared(kPsi) = 0.15;
  f.shared(kThetaA) = 0.5;
  f.shared(kIota) = 0.0;
  f.shared(kGravity) = 400.0;
  return f;
}

UnitParameterField draw_truth(const UnitParameterField& base, RngKey key, double lo, double hi) {
  UnitParameterField f = base;
  for (std::size_t v = 0; v < f.layout.n_units(); ++v) {
    Stream rng = key.child(StreamTag::simulation, v).stream();
    for (std::size_t k : {kAlpha, kR0, kSigmaSE, kS0, kE0, kI0}) f.unit(v, k) *= lo + (hi - lo) * rng.uniform();
    f.unit(v, kR0frac) = 1.0 - f.unit(v, kS0) - f.unit(v, kE0) - f.unit(v, kI0);
  }
  return f;
}

UnitParameterField draw_truth(std::size_t n_cities, RngKey key, double lo, double hi) {
  return draw_truth(baseline_parameters(n_cities), key, lo, hi);
}

std::vector<std::string> case_parameters(int experiment_case) {
  std::vector<std::string> ivps{param::S_0, param::E_0, param::I_0, param::R_0};
  switch (experiment_case) {
    case 1:
      return ivps;
    case 2:
      ivps.push_back(param::R0);
      return ivps;
    case 3:
      ivps.push_back(param::alpha);
      return ivps;
    case 4:
      ivps.insert(ivps.end(), {param::alpha, param::sigmaSE, param::R0});
      return ivps;
    default:
      throw std::invalid_argument("experiment case must be 1, 2, 3 or 4");
  }
}

SearchBox search_box(const std::string& name) {
  if (name == param::S_0 || name == param::E_0 || name == param::I_0 || name == param::R_0) return {0.0, 1.0};
  if (name == param::alpha) return {0.0, 2.0};
  if (name == param::sigmaSE) return {0.0, 1.0};
  if (name == param::R0) return {25.0, 35.0};
  throw std::invalid_argument("no search box for parameter '" + name + "'");
}

MeaslesModel::MeaslesModel(CityCovariates covariates, MeaslesOptions options)
    : covariates_(std::move(covariates)),
      options_(options),
      states_(UnitLayout::uniform(covariates_.size(), kStateDim)),
      observations_(UnitLayout::uniform(covariates_.size(), 1)),
      params_(parameter_layout(covariates_.size())) {
  covariates_.validate();
  if (options_.steps_per_obs == 0) throw std::invalid_argument("steps_per_obs must be positive");
  if (!(options_.observation_interval > 0.0)) throw std::invalid_argument("observation interval must be positive");
  const std::size_t n = covariates_.size();
  unit_travel_ = n >= 2 ? travel_matrix(covariates_, 1.0) : std::vector<double>(1, 0.0);
}

namespace {

double rounded_fraction(double frac, double pop) { return std::round(std::max(0.0, frac) * pop); }

// Keeps compartments integral, nonnegative and within the population; states
// moved by an ensemble Kalman update need this before they can be simulated.
void sanitize(std::span<double> x, std::size_t n, const CityCovariates& cov, double t) {
  for (std::size_t v = 0; v < n; ++v) {
    double* c = x.data() + v * kStateDim;
    for (std::size_t i = 0; i < kStateDim; ++i) c[i] = std::isfinite(c[i]) ? std::max(0.0, std::round(c[i])) : 0.0;
    const double pop = std::floor(cov.population[v].at(t));
    const double total = c[kS] + c[kE] + c[kI];
    if (total > pop) {
      const double f = pop / total;
      c[kS] = std::floor(c[kS] * f);
      c[kE] = std::floor(c[kE] * f);
      c[kI] = std::floor(c[kI] * f);
    }
  }
}

}  // namespace

void MeaslesModel::rinit(std::span<const double> theta, double t0, std::span<double> x, Stream& /*rng*/) const {
  const std::size_t n = n_cities();
  for (std::size_t v = 0; v < n; ++v) {
    const double* th = theta.data() + params_.unit_index(v, 0);
    const double total = th[kS0] + th[kE0] + th[kI0] + th[kR0frac];
    const double pop = covariates_.population[v].at(t0);
    double* c = x.data() + v * kStateDim;
    c[kS] = rounded_fraction(th[kS0] / total, pop);
    c[kE] = rounded_fraction(th[kE0] / total, pop);
    c[kI] = rounded_fraction(th[kI0] / total, pop);
    c[kZ] = 0.0;
  }
  sanitize(x, n, covariates_, t0);
}

namespace {

// Constants of one rprocess call, hoisted out of the substep loop.  θ is fixed
// over the interval so rates, seasonal contact rates and coupling
// coefficients are computed once per particle per interval.
class Stepper {
 public:
  Stepper(const CityCovariates& cov, const ParamLayout& layout, const std::vector<double>& unit_travel,
          std::span<const double> theta, double dt)
      : cov_(cov), n_(cov.size()), dt_(dt), buf_(n_ * (8 + n_)) {
    const double* shared = theta.data() + layout.shared_index(0);
    mu_d_ = shared[kMuD];
    iota_ = shared[kIota];
    const double mu_ei = shared[kMuEI];
    const double mu_ir = shared[kMuIR];
    e_exit_ = variates::FixedBinomial(-std::expm1(-(mu_ei + mu_d_) * dt));
    e_to_i_ = variates::FixedBinomial(mu_ei / (mu_ei + mu_d_));
    i_exit_ = variates::FixedBinomial(-std::expm1(-(mu_ir + mu_d_) * dt));
    i_to_r_ = variates::FixedBinomial(mu_ir / (mu_ir + mu_d_));
    for (std::size_t v = 0; v < n_; ++v) {
      const double* th = theta.data() + layout.unit_index(v, 0);
      alpha(v) = th[kAlpha];
      sigma(v) = th[kSigmaSE];
      beta_term(v) = seasonal_beta(true, th[kR0], mu_ir, shared[kThetaA], shared[kTermFraction]);
      beta_vac(v) = seasonal_beta(false, th[kR0], mu_ir, shared[kThetaA], shared[kTermFraction]);
    }
    double* travel = buf_.data() + 8 * n_;
    for (std::size_t i = 0; i < n_ * n_; ++i) travel[i] = shared[kGravity] * unit_travel[i];
  }

  void step(std::span<double> x, bool term, double t, Stream& rng) {
    double* travel = buf_.data() + 8 * n_;
    for (std::size_t v = 0; v < n_; ++v) {
      pop(v) = cov_.population[v].at(t);
      const double prevalence = x[v * kStateDim + kI] / pop(v);
      prev(v) = alpha(v) == 1.0 ? prevalence : std::pow(prevalence, alpha(v));
    }
    for (std::size_t v = 0; v < n_; ++v) {
      double own = prev(v);
      if (iota_ != 0.0) own = std::pow((x[v * kStateDim + kI] + iota_) / pop(v), alpha(v));
      double coupling = 0.0;
      const double* row = travel + v * n_;
      for (std::size_t w = 0; w < n_; ++w)
        if (w != v) coupling += row[w] * (prev(w) - prev(v));
      lambda(v) = std::max(0.0, (term ? beta_term(v) : beta_vac(v)) * (own + coupling / pop(v)));
    }

    for (std::size_t v = 0; v < n_; ++v) {
      double* c = x.data() + v * kStateDim;
      const auto S = static_cast<std::int64_t>(c[kS]);
      const auto E = static_cast<std::int64_t>(c[kE]);
      const auto I = static_cast<std::int64_t>(c[kI]);

      // multiplicative gamma noise with mean dt and variance σ² dt
      const double s2 = sigma(v) * sigma(v);
      const double dW = s2 > 0.0 ? variates::gamma(rng, dt_ / s2, s2) : dt_;
      const double r_se = lambda(v) * dW / dt_;
      const double s_rate = r_se + mu_d_;
      const std::int64_t s_out = variates::binomial(rng, S, -std::expm1(-s_rate * dt_));
      const std::int64_t n_se = variates::binomial(rng, s_out, s_rate > 0.0 ? r_se / s_rate : 0.0);
      const std::int64_t e_out = e_exit_(rng, E);
      const std::int64_t n_ei = e_to_i_(rng, e_out);
      const std::int64_t i_out = i_exit_(rng, I);
      const std::int64_t n_ir = i_to_r_(rng, i_out);
      std::int64_t births = variates::poisson(rng, cov_.births[v].at(t) * dt_);

      const std::int64_t s_new = S - s_out;
      const std::int64_t e_new = E - e_out + n_se;
      const std::int64_t i_new = I - i_out + n_ei;
      // births cannot push S + E + I past the known population
      const auto cap = static_cast<std::int64_t>(std::floor(cov_.population[v].at(t + dt_)));
      births = std::clamp<std::int64_t>(births, 0, std::max<std::int64_t>(cap - s_new - e_new - i_new, 0));

      c[kS] = static_cast<double>(s_new + births);
      c[kE] = static_cast<double>(e_new);
      c[kI] = static_cast<double>(i_new);
      c[kZ] += static_cast<double>(n_ir);
    }
  }

 private:
  double& alpha(std::size_t v) { return buf_[v]; }
  double& sigma(std::size_t v) { return buf_[n_ + v]; }
  double& beta_term(std::size_t v) { return buf_[2 * n_ + v]; }
  double& beta_vac(std::size_t v) { return buf_[3 * n_ + v]; }
  double& pop(std::size_t v) { return buf_[4 * n_ + v]; }
  double& prev(std::size_t v) { return buf_[5 * n_ + v]; }
  double& lambda(std::size_t v) { return buf_[6 * n_ + v]; }

  const CityCovariates& cov_;
  std::size_t n_;
  double dt_;
  std::vector<double> buf_;
  double mu_d_ = 0.0, iota_ = 0.0;
  variates::FixedBinomial e_exit_, e_to_i_, i_exit_, i_to_r_;
};

}  // namespace

void MeaslesModel::euler_step(std::span<double> x, std::span<const double> theta, double t, double dt,
                              Stream& rng) const {
  Stepper(covariates_, params_, unit_travel_, theta, dt).step(x, options_.calendar.in_term(t), t, rng);
}

void MeaslesModel::rprocess(std::span<double> x, std::span<const double> theta, double t0, double t1,
                            Stream& rng) const {
  const std::size_t n = n_cities();
  sanitize(x, n, covariates_, t0);
  for (std::size_t v = 0; v < n; ++v) x[v * kStateDim + kZ] = 0.0;
  const double nominal = options_.observation_interval / static_cast<double>(options_.steps_per_obs);
  const auto steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((t1 - t0) / nominal - 1e-9)));
  const double dt = (t1 - t0) / static_cast<double>(steps);
  Stepper stepper(covariates_, params_, unit_travel_, theta, dt);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    stepper.step(x, options_.calendar.in_term(t), t, rng);
  }
}

LogValue MeaslesModel::dmeasure_unit(std::size_t /*v*/, std::span<const double> y, std::span<const double> x,
                                     std::span<const double> theta) const {
  const double* shared = theta.data() + params_.shared_index(0);
  return dmeasure_cases(y[0], x[kZ], shared[kRho], shared[kPsi], options_.variance_floor);
}

void MeaslesModel::rmeasure_unit(std::size_t /*v*/, std::span<const double> x, std::span<const double> theta,
                                 std::span<double> y, Stream& rng) const {
  const double* shared = theta.data() + params_.shared_index(0);
  const double rho = shared[kRho];
  const double psi = shared[kPsi];
  const double z = x[kZ];
  const double var = rho * (1.0 - rho) * z + psi * psi * rho * rho * z * z + options_.variance_floor;
  const double draw = rho * z + std::sqrt(var) * variates::standard_normal(rng);
  y[0] = draw < 0.5 ? 0.0 : std::floor(draw + 0.5);
}

void MeaslesModel::emeasure_unit(std::size_t /*v*/, std::span<const double> x, std::span<const double> theta,
                                 std::span<double> mean, std::span<double> variance) const {
  const double* shared = theta.data() + params_.shared_index(0);
  const double rho = shared[kRho];
  const double psi = shared[kPsi];
  const double z = x[kZ];
  mean[0] = rho * z;
  variance[0] = rho * (1.0 - rho) * z + psi * psi * rho * rho * z * z + options_.variance_floor;
}

void MeaslesModel::canonicalize(std::span<double> theta) const {
  for (std::size_t v = 0; v < n_cities(); ++v) {
    double* th = theta.data() + params_.unit_index(v, 0);
    const double total = th[kS0] + th[kE0] + th[kI0] + th[kR0frac];
    if (total > 0.0)
      for (std::size_t k : {kS0, kE0, kI0, kR0frac}) th[k] /= total;
  }
}

std::vector<double> MeaslesModel::observation_times(double n_years) const {
  const auto n = static_cast<std::size_t>(std::llround(n_years / options_.observation_interval));
  std::vector<double> times(n);
  for (std::size_t k = 0; k < n; ++k) times[k] = static_cast<double>(k + 1) * options_.observation_interval;
  return times;
}

MeaslesDataset simulate_dataset(const MeaslesModel& model, const UnitParameterField& theta, double n_years,
                                RngKey key) {
  Simulation sim = simulate(model, theta, 0.0, model.observation_times(n_years), key);
  return MeaslesDataset{std::move(sim.observations), std::move(sim.states)};
}

}  // namespace gpomp::measles
