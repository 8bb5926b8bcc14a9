#pragma once

#include <Eigen/Dense>
#include <span>

#include "gpomp/model.hpp"
#include "gpomp/rng.hpp"

namespace gpomp::detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Thrown when the regularized innovation covariance is still not positive
/// definite.
class InnovationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Perturbed-observation analysis step.
///
/// `ensemble` is J x d (states, optionally augmented with transformed
/// parameters); `predicted_mean` and `predicted_var` are J x p from
/// emeasure_unit.  Measurement covariance R is diagonal with the ensemble
/// average of the predicted variances.  Returns the Gaussian predictive
/// log-density of y.
LogValue enkf_analysis(Eigen::Ref<RowMatrix> ensemble, const RowMatrix& predicted_mean,
                       const RowMatrix& predicted_var, std::span<const double> y, RngKey noise_key);

/// Ridge added to the innovation covariance diagonal.
double innovation_ridge(const Eigen::MatrixXd& innovation);

}  // namespace gpomp::detail
