#include "gpomp/oracles.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "gpomp/variates.hpp"

namespace gpomp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double normal_logpdf(double y, double mean, double var) {
  const double d = y - mean;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

// Square root of a positive semidefinite matrix (zero eigenvalues allowed).
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  if (eig.info() != Eigen::Success) throw std::invalid_argument("covariance decomposition failed");
  if (eig.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff()))
    throw std::invalid_argument("covariance is not positive semidefinite");
  return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

std::size_t sample_row(std::span<const double> row, Stream& rng) {
  double u = rng.uniform();
  for (std::size_t s = 0; s + 1 < row.size(); ++s) {
    if (u < row[s]) return s;
    u -= row[s];
  }
  return row.size() - 1;
}

void check_row(std::span<const double> row, const char* what, std::size_t v) {
  double sum = 0.0;
  for (double p : row) {
    if (!(p >= 0.0)) throw std::invalid_argument(std::string(what) + " has a negative entry at vertex " + std::to_string(v));
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument(std::string(what) + " row does not sum to 1 at vertex " + std::to_string(v));
}

void normalize(std::span<double> row) {
  double sum = 0.0;
  for (double p : row) sum += p;
  for (double& p : row) p /= sum;
}

}  // namespace

LinearGaussianLatticeModel::LinearGaussianLatticeModel(const SpatialGraph& graph, Eigen::MatrixXd A, Eigen::VectorXd q,
                                                       Eigen::VectorXd r, Eigen::VectorXd m0, Eigen::MatrixXd P0)
    : A_(std::move(A)),
      q_(std::move(q)),
      r_(std::move(r)),
      m0_(std::move(m0)),
      P0_(std::move(P0)),
      states_(UnitLayout::uniform(graph.size(), 1)),
      params_(graph.size(), {}, {ParamSpec{"offset", Transform::identity, false}}) {
  const auto n = static_cast<Eigen::Index>(graph.size());
  if (A_.rows() != n || A_.cols() != n || q_.size() != n || r_.size() != n || m0_.size() != n || P0_.rows() != n ||
      P0_.cols() != n)
    throw std::invalid_argument("linear-Gaussian model dimensions disagree with the graph");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(q_[i] >= 0.0) || !(r_[i] > 0.0)) throw std::invalid_argument("noise variances must be nonnegative (R positive)");
    for (Eigen::Index j = 0; j < n; ++j)
      if (A_(i, j) != 0.0 && graph.distance(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) > graph.radius())
        throw std::invalid_argument("transition matrix couples vertices beyond the interaction radius");
  }
  L0_ = psd_sqrt(P0_);
}

UnitParameterField LinearGaussianLatticeModel::parameters(double offset) const {
  UnitParameterField f(params_);
  f.shared(0) = offset;
  return f;
}

void LinearGaussianLatticeModel::rinit(std::span<const double>, double, std::span<double> x, Stream& rng) const {
  const Eigen::Index n = m0_.size();
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = variates::standard_normal(rng);
  Eigen::Map<Eigen::VectorXd>(x.data(), n) = m0_ + L0_ * z;
}

void LinearGaussianLatticeModel::rprocess(std::span<double> x, std::span<const double>, double, double,
                                          Stream& rng) const {
  const Eigen::Index n = m0_.size();
  Eigen::Map<Eigen::VectorXd> state(x.data(), n);
  Eigen::VectorXd next = A_ * state;
  for (Eigen::Index i = 0; i < n; ++i) next[i] += std::sqrt(q_[i]) * variates::standard_normal(rng);
  state = next;
}

LogValue LinearGaussianLatticeModel::dmeasure_unit(std::size_t v, std::span<const double> y, std::span<const double> x,
                                                   std::span<const double> theta) const {
  return LogValue(normal_logpdf(y[0], x[0] + theta[params_.shared_index(0)], r_[static_cast<Eigen::Index>(v)]));
}

void LinearGaussianLatticeModel::rmeasure_unit(std::size_t v, std::span<const double> x, std::span<const double> theta,
                                               std::span<double> y, Stream& rng) const {
  y[0] = x[0] + theta[params_.shared_index(0)] +
         std::sqrt(r_[static_cast<Eigen::Index>(v)]) * variates::standard_normal(rng);
}

void LinearGaussianLatticeModel::emeasure_unit(std::size_t v, std::span<const double> x, std::span<const double> theta,
                                               std::span<double> mean, std::span<double> variance) const {
  mean[0] = x[0] + theta[params_.shared_index(0)];
  variance[0] = r_[static_cast<Eigen::Index>(v)];
}

KalmanResult kalman_exact_loglik(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& H,
                                 const Eigen::MatrixXd& R, const Eigen::VectorXd& m0, const Eigen::MatrixXd& P0,
                                 const std::vector<Eigen::VectorXd>& ys) {
  KalmanResult out;
  Eigen::VectorXd m = m0;
  Eigen::MatrixXd P = P0;
  const auto d = static_cast<double>(H.rows());
  for (std::size_t n = 0; n < ys.size(); ++n) {
    m = A * m;
    P = A * P * A.transpose() + Q;
    const Eigen::MatrixXd S = H * P * H.transpose() + R;
    const Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("innovation covariance is not positive definite at step " + std::to_string(n + 1));
    const Eigen::VectorXd e = ys[n] - H * m;
    const Eigen::MatrixXd L = llt.matrixL();
    const double log_det = 2.0 * L.diagonal().array().log().sum();
    const double ll = -0.5 * (d * kLog2Pi + log_det + e.dot(llt.solve(e)));
    out.step_log_likelihood.push_back(ll);
    out.log_likelihood += ll;
    const Eigen::MatrixXd K = llt.solve(H * P).transpose();
    m += K * e;
    P -= K * H * P;
    P = 0.5 * (P + P.transpose()).eval();
    out.filtered_means.push_back(m);
    out.filtered_covariances.push_back(P);
  }
  return out;
}

KalmanResult kalman_exact_loglik(const LinearGaussianLatticeModel& model, const ObservationSeries& data, double offset) {
  const Eigen::Index n = model.m0().size();
  if (data.layout() != model.observation_layout())
    throw std::invalid_argument("observation layout does not match the model");
  std::vector<Eigen::VectorXd> ys;
  for (std::size_t k = 0; k < data.n_times(); ++k) {
    const auto row = data.row(k);
    ys.push_back(Eigen::Map<const Eigen::VectorXd>(row.data(), n).array() - offset);
  }
  return kalman_exact_loglik(model.A(), model.q().asDiagonal(), Eigen::MatrixXd::Identity(n, n), model.r().asDiagonal(),
                             model.m0(), model.P0(), ys);
}

DiscreteHMMModel::DiscreteHMMModel(std::vector<Vertex> vertices)
    : vertices_(std::move(vertices)),
      states_(UnitLayout::uniform(vertices_.size(), 1)),
      params_(vertices_.size(), {}, {}) {
  for (std::size_t v = 0; v < vertices_.size(); ++v) {
    const Vertex& vx = vertices_[v];
    if (vx.states == 0 || vx.symbols == 0) throw std::invalid_argument("alphabets must be nonempty");
    std::size_t configs = 1;
    for (std::size_t p : vx.parents) {
      if (p >= vertices_.size()) throw std::invalid_argument("parent index out of range");
      configs *= vertices_[p].states;
    }
    if (vx.transition.size() != configs * vx.states || vx.emission.size() != vx.states * vx.symbols ||
        vx.initial.size() != vx.states)
      throw std::invalid_argument("table sizes disagree with alphabets at vertex " + std::to_string(v));
    for (std::size_t c = 0; c < configs; ++c)
      check_row(std::span(vx.transition).subspan(c * vx.states, vx.states), "transition", v);
    for (std::size_t s = 0; s < vx.states; ++s)
      check_row(std::span(vx.emission).subspan(s * vx.symbols, vx.symbols), "emission", v);
    check_row(vx.initial, "initial", v);
  }
}

DiscreteHMMModel DiscreteHMMModel::random(const SpatialGraph& graph, std::size_t states, std::size_t symbols,
                                          double coupling, RngKey key, double persistence) {
  std::vector<Vertex> vertices(graph.size());
  for (std::size_t v = 0; v < graph.size(); ++v) {
    Stream rng = key.child(StreamTag::simulation, v).stream();
    Vertex& vx = vertices[v];
    vx.states = states;
    vx.symbols = symbols;
    vx.parents = graph.neighborhood(v);
    std::size_t configs = 1;
    for (std::size_t i = 0; i < vx.parents.size(); ++i) configs *= states;
    vx.transition.resize(configs * states);
    std::vector<std::size_t> prev(vx.parents.size());
    for (std::size_t c = 0; c < configs; ++c) {
      std::size_t rest = c;
      for (std::size_t i = vx.parents.size(); i-- > 0;) {
        prev[i] = rest % states;
        rest /= states;
      }
      std::span<double> row(vx.transition.data() + c * states, states);
      for (double& p : row) p = rng.uniform();
      for (std::size_t i = 0; i < vx.parents.size(); ++i) {
        if (vx.parents[i] == v)
          row[prev[i]] += persistence;
        else
          row[prev[i]] += coupling / static_cast<double>(vx.parents.size() - 1);
      }
      normalize(row);
    }
    vx.emission.resize(states * symbols);
    for (std::size_t s = 0; s < states; ++s) {
      std::span<double> row(vx.emission.data() + s * symbols, symbols);
      for (double& p : row) p = rng.uniform();
      if (s < symbols) row[s] += 1.0;
      normalize(row);
    }
    vx.initial.resize(states);
    for (double& p : vx.initial) p = rng.uniform();
    normalize(vx.initial);
  }
  return DiscreteHMMModel(std::move(vertices));
}

std::span<const double> DiscreteHMMModel::transition_row(std::size_t v, std::span<const double> previous) const {
  const Vertex& vx = vertices_[v];
  std::size_t c = 0;
  for (std::size_t p : vx.parents) c = c * vertices_[p].states + static_cast<std::size_t>(previous[p]);
  return std::span(vx.transition).subspan(c * vx.states, vx.states);
}

std::span<const double> DiscreteHMMModel::transition_row(std::size_t v, std::span<const std::size_t> previous) const {
  const Vertex& vx = vertices_[v];
  std::size_t c = 0;
  for (std::size_t p : vx.parents) c = c * vertices_[p].states + previous[p];
  return std::span(vx.transition).subspan(c * vx.states, vx.states);
}

void DiscreteHMMModel::rinit(std::span<const double>, double, std::span<double> x, Stream& rng) const {
  for (std::size_t v = 0; v < vertices_.size(); ++v) x[v] = static_cast<double>(sample_row(vertices_[v].initial, rng));
}

void DiscreteHMMModel::rprocess(std::span<double> x, std::span<const double>, double, double, Stream& rng) const {
  const std::vector<double> previous(x.begin(), x.end());
  for (std::size_t v = 0; v < vertices_.size(); ++v)
    x[v] = static_cast<double>(sample_row(transition_row(v, std::span<const double>(previous)), rng));
}

LogValue DiscreteHMMModel::dmeasure_unit(std::size_t v, std::span<const double> y, std::span<const double> x,
                                         std::span<const double>) const {
  const Vertex& vx = vertices_[v];
  return log_of(vx.emission[static_cast<std::size_t>(x[0]) * vx.symbols + static_cast<std::size_t>(y[0])]);
}

void DiscreteHMMModel::rmeasure_unit(std::size_t v, std::span<const double> x, std::span<const double>,
                                     std::span<double> y, Stream& rng) const {
  const Vertex& vx = vertices_[v];
  y[0] = static_cast<double>(
      sample_row(std::span(vx.emission).subspan(static_cast<std::size_t>(x[0]) * vx.symbols, vx.symbols), rng));
}

namespace {

// Enumerated joint space with vertex 0 as the least significant digit.
struct JointSpace {
  std::vector<std::size_t> radix;
  std::size_t size = 1;

  explicit JointSpace(const DiscreteHMMModel& model) {
    for (const auto& vx : model.vertices()) {
      radix.push_back(vx.states);
      if (size > kMaxEnumeratedStates / vx.states) {
        std::ostringstream msg;
        msg << "joint state space exceeds " << kMaxEnumeratedStates << " states";
        throw std::length_error(msg.str());
      }
      size *= vx.states;
    }
  }

  void decode(std::size_t index, std::vector<std::size_t>& out) const {
    for (std::size_t v = 0; v < radix.size(); ++v) {
      out[v] = index % radix[v];
      index /= radix[v];
    }
  }
};

std::vector<double> predict(const DiscreteHMMModel& model, const JointSpace& space, const std::vector<double>& prior) {
  const std::size_t n = space.radix.size();
  std::vector<double> next(space.size, 0.0);
  std::vector<std::size_t> from(n), to(n);
  std::vector<std::span<const double>> rows(n);
  for (std::size_t a = 0; a < space.size; ++a) {
    if (prior[a] == 0.0) continue;
    space.decode(a, from);
    for (std::size_t v = 0; v < n; ++v) rows[v] = model.transition_row(v, std::span<const std::size_t>(from));
    for (std::size_t b = 0; b < space.size; ++b) {
      space.decode(b, to);
      double p = prior[a];
      for (std::size_t v = 0; v < n && p > 0.0; ++v) p *= rows[v][to[v]];
      next[b] += p;
    }
  }
  return next;
}

std::vector<double> initial_joint(const DiscreteHMMModel& model, const JointSpace& space) {
  std::vector<double> joint(space.size);
  std::vector<std::size_t> s(space.radix.size());
  for (std::size_t a = 0; a < space.size; ++a) {
    space.decode(a, s);
    double p = 1.0;
    for (std::size_t v = 0; v < s.size(); ++v) p *= model.vertices()[v].initial[s[v]];
    joint[a] = p;
  }
  return joint;
}

double emission(const DiscreteHMMModel& model, std::size_t v, std::size_t state, std::span<const double> y) {
  const auto& vx = model.vertices()[v];
  return vx.emission[state * vx.symbols + static_cast<std::size_t>(y[v])];
}

std::vector<std::vector<double>> vertex_marginals(const JointSpace& space, const std::vector<double>& joint) {
  std::vector<std::vector<double>> out;
  for (std::size_t k : space.radix) out.emplace_back(k, 0.0);
  std::vector<std::size_t> s(space.radix.size());
  for (std::size_t a = 0; a < space.size; ++a) {
    space.decode(a, s);
    for (std::size_t v = 0; v < s.size(); ++v) out[v][s[v]] += joint[a];
  }
  return out;
}

void check_data(const DiscreteHMMModel& model, const ObservationSeries& data) {
  if (data.layout() != model.observation_layout())
    throw std::invalid_argument("observation layout does not match the model");
  for (double y : data.values())
    if (!(y >= 0.0) || y != std::floor(y)) throw std::invalid_argument("observations must be symbol indices");
  for (std::size_t n = 0; n < data.n_times(); ++n)
    for (std::size_t v = 0; v < model.vertices().size(); ++v)
      if (static_cast<std::size_t>(data.row(n)[v]) >= model.vertices()[v].symbols)
        throw std::invalid_argument("observation symbol out of range");
}

}  // namespace

ExactFilterResult enumerate_exact_filter(const DiscreteHMMModel& model, const ObservationSeries& data) {
  const JointSpace space(model);
  check_data(model, data);
  ExactFilterResult out;
  std::vector<double> joint = initial_joint(model, space);
  std::vector<std::size_t> s(space.radix.size());
  for (std::size_t n = 0; n < data.n_times(); ++n) {
    joint = predict(model, space, joint);
    const auto y = data.row(n);
    double total = 0.0;
    for (std::size_t a = 0; a < space.size; ++a) {
      space.decode(a, s);
      for (std::size_t v = 0; v < s.size(); ++v) joint[a] *= emission(model, v, s[v], y);
      total += joint[a];
    }
    if (!(total > 0.0)) throw std::runtime_error("observations have zero probability at step " + std::to_string(n + 1));
    for (double& p : joint) p /= total;
    out.step_log_likelihood.push_back(std::log(total));
    out.log_likelihood += std::log(total);
    out.marginals.push_back(vertex_marginals(space, joint));
    out.joint.push_back(joint);
  }
  return out;
}

ExactFilterResult enumerate_exact_blocked_filter(const DiscreteHMMModel& model, const BlockPartition& partition,
                                                 const ObservationSeries& data) {
  const JointSpace space(model);
  check_data(model, data);
  if (partition.n_vertices() != space.radix.size()) throw std::invalid_argument("partition does not match the model");

  // Block-local index of each joint configuration, and block space sizes.
  const std::size_t n_blocks = partition.size();
  std::vector<std::size_t> block_size(n_blocks, 1);
  for (std::size_t k = 0; k < n_blocks; ++k)
    for (std::size_t v : partition.block(k)) block_size[k] *= space.radix[v];
  std::vector<std::size_t> local(space.size * n_blocks);
  std::vector<std::size_t> s(space.radix.size());
  for (std::size_t a = 0; a < space.size; ++a) {
    space.decode(a, s);
    for (std::size_t k = 0; k < n_blocks; ++k) {
      std::size_t idx = 0;
      const auto& b = partition.block(k);
      for (std::size_t i = b.size(); i-- > 0;) idx = idx * space.radix[b[i]] + s[b[i]];
      local[a * n_blocks + k] = idx;
    }
  }

  ExactFilterResult out;
  std::vector<double> joint = initial_joint(model, space);
  std::vector<std::vector<double>> block_law(n_blocks);
  for (std::size_t n = 0; n < data.n_times(); ++n) {
    joint = predict(model, space, joint);
    const auto y = data.row(n);
    // B: block marginals of the predicted joint, then C: per-block correction
    for (std::size_t k = 0; k < n_blocks; ++k) block_law[k].assign(block_size[k], 0.0);
    for (std::size_t a = 0; a < space.size; ++a)
      for (std::size_t k = 0; k < n_blocks; ++k) block_law[k][local[a * n_blocks + k]] += joint[a];
    double step = 0.0;
    for (std::size_t k = 0; k < n_blocks; ++k) {
      const auto& b = partition.block(k);
      std::vector<std::size_t> bs(b.size());
      double total = 0.0;
      for (std::size_t i = 0; i < block_size[k]; ++i) {
        std::size_t rest = i;
        double like = 1.0;
        for (std::size_t j = 0; j < b.size(); ++j) {
          bs[j] = rest % space.radix[b[j]];
          rest /= space.radix[b[j]];
          like *= emission(model, b[j], bs[j], y);
        }
        block_law[k][i] *= like;
        total += block_law[k][i];
      }
      if (!(total > 0.0))
        throw std::runtime_error("block observations have zero probability at step " + std::to_string(n + 1));
      for (double& p : block_law[k]) p /= total;
      step += std::log(total);
    }
    // re-form the product measure
    for (std::size_t a = 0; a < space.size; ++a) {
      double p = 1.0;
      for (std::size_t k = 0; k < n_blocks; ++k) p *= block_law[k][local[a * n_blocks + k]];
      joint[a] = p;
    }
    out.step_log_likelihood.push_back(step);
    out.log_likelihood += step;
    out.marginals.push_back(vertex_marginals(space, joint));
    out.joint.push_back(joint);
  }
  return out;
}

GaussianLocationModel::GaussianLocationModel(std::size_t n_units, double sd)
    : sd_(sd),
      states_(UnitLayout::uniform(n_units, 1)),
      params_(n_units, {ParamSpec{"mu", Transform::identity, false}}, {}) {
  if (!(sd > 0.0)) throw std::invalid_argument("measurement sd must be positive");
}

void GaussianLocationModel::rinit(std::span<const double> theta, double, std::span<double> x, Stream&) const {
  for (std::size_t v = 0; v < x.size(); ++v) x[v] = theta[v];
}

void GaussianLocationModel::rprocess(std::span<double> x, std::span<const double> theta, double, double,
                                     Stream&) const {
  for (std::size_t v = 0; v < x.size(); ++v) x[v] = theta[v];
}

LogValue GaussianLocationModel::dmeasure_unit(std::size_t, std::span<const double> y, std::span<const double> x,
                                              std::span<const double>) const {
  return LogValue(normal_logpdf(y[0], x[0], sd_ * sd_));
}

void GaussianLocationModel::rmeasure_unit(std::size_t, std::span<const double> x, std::span<const double>,
                                          std::span<double> y, Stream& rng) const {
  y[0] = x[0] + sd_ * variates::standard_normal(rng);
}

void GaussianLocationModel::emeasure_unit(std::size_t, std::span<const double> x, std::span<const double>,
                                          std::span<double> mean, std::span<double> variance) const {
  mean[0] = x[0];
  variance[0] = sd_ * sd_;
}

void BoundInputs::validate() const {
  std::vector<std::string> problems;
  auto in_unit = [&](double e, const char* name) {
    if (!(e > 0.0 && e <= 1.0)) problems.push_back(std::string(name) + " must lie in (0, 1]");
  };
  in_unit(eps_x, "eps_x");
  in_unit(eps_y, "eps_y");
  in_unit(eps_theta, "eps_theta");
  auto positive = [&](std::size_t x, const char* name) {
    if (x == 0) problems.push_back(std::string(name) + " must be positive");
  };
  positive(delta, "delta");
  positive(delta_blocks, "delta_blocks");
  positive(max_block, "max_block");
  positive(radius, "radius");
  positive(particles, "particles");
  positive(subset_size, "subset_size");
  if (!problems.empty()) {
    std::string msg = "invalid bound inputs:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw std::invalid_argument(msg);
  }
}

BoundReport bound_calculator(const BoundInputs& in) {
  in.validate();
  BoundReport out;
  const double delta = static_cast<double>(in.delta);
  const double delta_k = static_cast<double>(in.delta_blocks);
  const double kinf = static_cast<double>(in.max_block);
  const double c = 18.0 * delta_k * delta * delta;
  out.threshold = std::pow(1.0 - 1.0 / c, 1.0 / (2.0 * delta));
  const double product = in.eps_x * in.eps_theta;
  out.condition_satisfied = product > out.threshold;

  const double mixing_gap = 1.0 - std::pow(product, 2.0 * delta);  // 1 - (ε_x ε_θ)^{2Δ}
  out.beta = mixing_gap > 0.0 ? std::log(1.0 / (c * mixing_gap)) / (2.0 * static_cast<double>(in.radius))
                              : std::numeric_limits<double>::infinity();
  out.bias_term = mixing_gap > 0.0 ? 8.0 * mixing_gap * std::exp(-out.beta * static_cast<double>(in.boundary_distance))
                                   : 0.0;
  out.variance_term = 192.0 / (5.0 * std::sqrt(static_cast<double>(in.particles))) *
                      std::pow(in.eps_theta, -4.0 * kinf) * std::pow(in.eps_x, -4.0 * kinf) *
                      std::pow(in.eps_y, -2.0 * kinf * (delta_k - 1.0)) * delta_k;
  if (out.condition_satisfied) {
    const double decay = std::exp(-out.beta);
    out.total_bound = decay * static_cast<double>(in.subset_size) / (1.0 - decay) * (out.bias_term + out.variance_term);
  }
  return out;
}

}  // namespace gpomp
