#include "ensemble_engine.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace gpomp::detail {

double innovation_ridge(const Eigen::MatrixXd& innovation) {
  const double ridge = 1e-8 * innovation.trace() / static_cast<double>(innovation.rows());
  // A collapsed ensemble with zero measurement variance has zero trace.
  return ridge > 0.0 ? ridge : 1e-8;
}

LogValue enkf_analysis(Eigen::Ref<RowMatrix> ensemble, const RowMatrix& predicted_mean,
                       const RowMatrix& predicted_var, std::span<const double> y, RngKey noise_key) {
  const Eigen::Index J = ensemble.rows();
  const Eigen::Index p = predicted_mean.cols();
  const double denom = static_cast<double>(J - 1);

  const Eigen::RowVectorXd x_bar = ensemble.colwise().mean();
  const Eigen::RowVectorXd y_bar = predicted_mean.colwise().mean();
  const Eigen::RowVectorXd r_diag = predicted_var.colwise().mean();
  const RowMatrix ax = ensemble.rowwise() - x_bar;
  const RowMatrix ay = predicted_mean.rowwise() - y_bar;

  Eigen::MatrixXd innovation = (ay.transpose() * ay) / denom;
  innovation.diagonal() += r_diag.transpose();
  innovation.diagonal().array() += innovation_ridge(innovation);
  const Eigen::MatrixXd cross = (ax.transpose() * ay) / denom;

  Eigen::LLT<Eigen::MatrixXd> llt(innovation);
  if (llt.info() != Eigen::Success) throw InnovationFailure("innovation covariance is not positive definite");

  const Eigen::Map<const Eigen::VectorXd> y_vec(y.data(), p);
  const Eigen::VectorXd resid = y_vec - y_bar.transpose();
  const Eigen::VectorXd solved = llt.solve(resid);
  const Eigen::MatrixXd L = llt.matrixL();
  const double log_det = 2.0 * L.diagonal().array().log().sum();
  const double ll = -0.5 * (static_cast<double>(p) * std::log(2.0 * std::numbers::pi) + log_det + resid.dot(solved));

  // gain = cross * innovation^{-1}, computed as (innovation^{-1} cross^T)^T
  const Eigen::MatrixXd gain = llt.solve(cross.transpose()).transpose();

  const Eigen::RowVectorXd r_sd = r_diag.array().max(0.0).sqrt();
  Eigen::VectorXd innov(p);
  for (Eigen::Index j = 0; j < J; ++j) {
    Stream rng = noise_key.child(static_cast<std::uint64_t>(j)).stream();
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < p; ++i) innov(i) = y_vec(i) + r_sd(i) * normal(rng) - predicted_mean(j, i);
    ensemble.row(j) += (gain * innov).transpose();
  }
  return std::isfinite(ll) ? LogValue(ll) : LogValue::zero();
}

}  // namespace gpomp::detail
