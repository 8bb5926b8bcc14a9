#pragma once

// Exactly solvable reference models and the error-bound calculator.  These
// exist to check the filters: a linear-Gaussian lattice with its Kalman
// filter, a finite-state HMM with brute-force enumeration of both the exact
// filter and the blocked filter, and a Gaussian location model whose MLE is
// the sample mean.

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "gpomp/graph.hpp"
#include "gpomp/model.hpp"
#include "gpomp/rng.hpp"

namespace gpomp {

/// X_n = A X_{n-1} + N(0, Q), Y_n^v = X_n^v + offset + N(0, R_v); one scalar
/// state per vertex.  Q and R are diagonal.  The only parameter is the shared
/// observation offset.
class LinearGaussianLatticeModel final : public Model {
 public:
  LinearGaussianLatticeModel(const SpatialGraph& graph, Eigen::MatrixXd A, Eigen::VectorXd q, Eigen::VectorXd r,
                             Eigen::VectorXd m0, Eigen::MatrixXd P0);

  const UnitLayout& state_layout() const override { return states_; }
  const UnitLayout& observation_layout() const override { return states_; }
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

  UnitParameterField parameters(double offset = 0.0) const;

  const Eigen::MatrixXd& A() const noexcept { return A_; }
  const Eigen::VectorXd& q() const noexcept { return q_; }
  const Eigen::VectorXd& r() const noexcept { return r_; }
  const Eigen::VectorXd& m0() const noexcept { return m0_; }
  const Eigen::MatrixXd& P0() const noexcept { return P0_; }

 private:
  Eigen::MatrixXd A_;
  Eigen::VectorXd q_, r_, m0_;
  Eigen::MatrixXd P0_, L0_;
  UnitLayout states_;
  ParamLayout params_;
};

struct KalmanResult {
  double log_likelihood = 0.0;
  std::vector<double> step_log_likelihood;
  std::vector<Eigen::VectorXd> filtered_means;
  std::vector<Eigen::MatrixXd> filtered_covariances;
};

/// Exact log-likelihood by the Kalman recursion.  Works on the raw matrices so
/// that it can also be fed re-based systems.  Throws when an innovation
/// covariance is not positive definite.
KalmanResult kalman_exact_loglik(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& H,
                                 const Eigen::MatrixXd& R, const Eigen::VectorXd& m0, const Eigen::MatrixXd& P0,
                                 const std::vector<Eigen::VectorXd>& ys);
KalmanResult kalman_exact_loglik(const LinearGaussianLatticeModel& model, const ObservationSeries& data,
                                 double offset = 0.0);

/// Finite-state HMM on a graph.  Vertex v takes values 0..k_v-1; its next
/// state is drawn from a table indexed by the previous states of its parents
/// (mixed radix, first parent most significant).  Emissions are per-vertex
/// k_v x m_v matrices; the initial law is a product over vertices.
class DiscreteHMMModel final : public Model {
 public:
  struct Vertex {
    std::size_t states = 2;
    std::size_t symbols = 2;
    std::vector<std::size_t> parents;
    std::vector<double> transition;  // (∏ parent states) x states
    std::vector<double> emission;    // states x symbols
    std::vector<double> initial;     // states
  };

  explicit DiscreteHMMModel(std::vector<Vertex> vertices);

  /// Random model on `graph`: parents are the r-neighbourhood, transition rows
  /// favour staying put with weight `persistence` and are pulled toward the
  /// parents' majority with weight `coupling`; other mass is random.
  static DiscreteHMMModel random(const SpatialGraph& graph, std::size_t states, std::size_t symbols, double coupling,
                                 RngKey key, double persistence = 1.0);

  const UnitLayout& state_layout() const override { return states_; }
  const UnitLayout& observation_layout() const override { return states_; }
  const ParamLayout& param_layout() const override { return params_; }

  void rinit(std::span<const double> theta, double t0, std::span<double> x, Stream& rng) const override;
  void rprocess(std::span<double> x, std::span<const double> theta, double t0, double t1,
                Stream& rng) const override;
  LogValue dmeasure_unit(std::size_t v, std::span<const double> y, std::span<const double> x,
                         std::span<const double> theta) const override;
  void rmeasure_unit(std::size_t v, std::span<const double> x, std::span<const double> theta, std::span<double> y,
                     Stream& rng) const override;

  const std::vector<Vertex>& vertices() const noexcept { return vertices_; }
  /// Row of vertex v's transition table for the given previous field.
  std::span<const double> transition_row(std::size_t v, std::span<const double> previous) const;
  /// Same, for previous states given as integers.
  std::span<const double> transition_row(std::size_t v, std::span<const std::size_t> previous) const;
  UnitParameterField parameters() const { return UnitParameterField(params_); }

 private:
  std::vector<Vertex> vertices_;
  UnitLayout states_;
  ParamLayout params_;
};

struct ExactFilterResult {
  double log_likelihood = 0.0;
  std::vector<double> step_log_likelihood;
  std::vector<std::vector<double>> joint;  // per step; empty for the blocked filter unless requested
  /// marginals[n][v][s] = filtered P(X_n^v = s).
  std::vector<std::vector<std::vector<double>>> marginals;
};

inline constexpr std::size_t kMaxEnumeratedStates = 1'000'000;

/// Forward recursion over the enumerated joint space.  Joint index is mixed
/// radix with vertex 0 least significant.  Throws std::length_error when the
/// joint space exceeds kMaxEnumeratedStates.
ExactFilterResult enumerate_exact_filter(const DiscreteHMMModel& model, const ObservationSeries& data);

/// Same recursion with the blocking operator inserted: after prediction the
/// joint law is replaced by the product of its block marginals, and each
/// block is corrected with its own observations.  The log-likelihood is the
/// sum over blocks of the log normalizers.
ExactFilterResult enumerate_exact_blocked_filter(const DiscreteHMMModel& model, const BlockPartition& partition,
                                                 const ObservationSeries& data);

/// Y_n^v ~ N(mu^v, sd²) with a degenerate latent state that tracks mu^v, so
/// filtering it with perturbed parameters is pure parameter learning.  The
/// MLE of mu^v is the sample mean of unit v.
class GaussianLocationModel final : public Model {
 public:
  explicit GaussianLocationModel(std::size_t n_units = 1, double sd = 1.0);

  const UnitLayout& state_layout() const override { return states_; }
  const UnitLayout& observation_layout() const override { return states_; }
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

  double sd() const noexcept { return sd_; }

 private:
  double sd_;
  UnitLayout states_;
  ParamLayout params_;
};

struct BoundInputs {
  double eps_x = 1.0;
  double eps_y = 1.0;
  double eps_theta = 1.0;
  std::size_t delta = 1;        // Δ
  std::size_t delta_blocks = 1; // Δ_𝒦
  std::size_t max_block = 1;    // |𝒦|∞
  std::size_t radius = 1;       // r
  std::size_t particles = 1;    // J
  std::size_t boundary_distance = 0;  // d(K̃, ∂K)
  std::size_t subset_size = 1;  // card(K̃)

  /// Throws std::invalid_argument listing every violated constraint.
  void validate() const;
};

struct BoundReport {
  bool condition_satisfied = false;
  double threshold = 0.0;  // the lower bound ε_x ε_θ must exceed
  double beta = 0.0;       // NaN when the log argument is not positive
  double bias_term = 0.0;
  double variance_term = 0.0;
  std::optional<double> total_bound;
};

BoundReport bound_calculator(const BoundInputs& inputs);

}  // namespace gpomp
