#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "nd/core/errors.hpp"
#include "nd/core/math.hpp"

namespace nd::vi {

/// KL(N(mu, sigma^2) || N(0, 1)) summed over all entries.
inline double kl_standard_normal(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& sigma) {
  if (mu.rows() != sigma.rows() || mu.cols() != sigma.cols()) throw ShapeError("kl: mu and sigma differ in shape");
  if ((sigma.array() <= 0.0).any()) throw DomainError("kl: sigma must be positive");
  const auto s2 = sigma.array().square();
  return 0.5 * (mu.array().square() + s2 - s2.log() - 1.0).sum();
}

inline double kl_standard_normal(double mu, double sigma) {
  return kl_standard_normal(Eigen::MatrixXd::Constant(1, 1, mu), Eigen::MatrixXd::Constant(1, 1, sigma));
}

/// sum_{j,i} -0.5 log(2 pi sigma_j^2) - (y_ji - mean_ji)^2 / (2 sigma_j^2); y and mean are P x N.
inline double gaussian_loglik(const Eigen::MatrixXd& y, const Eigen::MatrixXd& mean, const Eigen::VectorXd& sigma) {
  if (y.rows() != mean.rows() || y.cols() != mean.cols()) throw ShapeError("loglik: y and mean differ in shape");
  if (sigma.size() != y.rows()) throw ShapeError("loglik: one sigma per feature required");
  if ((sigma.array() <= 0.0).any()) throw DomainError("loglik: sigma must be positive");
  const Eigen::ArrayXd inv_var = sigma.array().square().inverse();
  const double n = static_cast<double>(y.cols());
  const double norm = -0.5 * n * (kLog2Pi + 2.0 * sigma.array().log()).sum();
  const double sq = ((y - mean).array().square().colwise() * inv_var).sum();
  return norm - 0.5 * sq;
}

}  // namespace nd::vi
