#pragma once

// Relaxed-Bernoulli (binary concrete) gates on each (feature, term) pair.
//
// With location logit a and temperature tau, a sample is s = sigmoid(l) where
// l = (a + L) / tau and L is standard logistic noise. The log density of l is
//     log tau + a - tau*l - 2*softplus(a - tau*l),
// and the KL to the prior is estimated from one sample as log q(l) - log p(l);
// the Jacobian of l -> s cancels in the ratio.

#include <cmath>
#include <string_view>

#include <Eigen/Dense>

#include "nd/core/errors.hpp"
#include "nd/core/math.hpp"

namespace nd::vi {

enum class MaskMode { Stochastic, Expected };

struct SparsityMasks {
  Eigen::MatrixXd logits;  // P x T variational logits u
  double prior = 0.1;      // p0
  double temperature = 0.5;
  MaskMode mode = MaskMode::Stochastic;

  void validate() const {
    if (!(temperature > 0.0)) throw ArgumentError("mask temperature must be positive");
    if (!(prior > 0.0 && prior < 1.0)) throw ArgumentError("mask prior must lie in (0, 1)");
  }

  static SparsityMasks init(Eigen::Index features, Eigen::Index terms, double initial_probability = 0.9) {
    SparsityMasks m;
    m.logits = Eigen::MatrixXd::Constant(features, terms, logit(initial_probability));
    return m;
  }
};

struct MaskSample {
  Eigen::MatrixXd values;      // s in (0, 1)
  Eigen::MatrixXd dvalues;     // ds / du
  double kl = 0.0;             // log q(l) - log p(l), summed
  Eigen::MatrixXd dkl;         // d kl / du
};

namespace detail {
inline double concrete_logdensity(double l, double loc, double tau) {
  return std::log(tau) + loc - tau * l - 2.0 * softplus(loc - tau * l);
}
}  // namespace detail

/// Reparameterised sample with the given logistic noise (P x T). In expected mode
/// the noise is ignored, values are sigmoid(u) and the KL contribution is zero.
inline MaskSample sample_masks(const SparsityMasks& masks, const Eigen::MatrixXd& noise) {
  masks.validate();
  MaskSample out;
  const auto rows = masks.logits.rows();
  const auto cols = masks.logits.cols();
  out.values.resize(rows, cols);
  out.dvalues.resize(rows, cols);
  out.dkl = Eigen::MatrixXd::Zero(rows, cols);
  if (masks.mode == MaskMode::Expected) {
    out.values = masks.logits.unaryExpr([](double u) { return sigmoid(u); });
    out.dvalues = (out.values.array() * (1.0 - out.values.array())).matrix();
    return out;
  }
  if (noise.rows() != rows || noise.cols() != cols) throw ShapeError("mask noise must be P x T");
  const double tau = masks.temperature;
  const double prior_loc = logit(masks.prior);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double u = masks.logits(i, j);
      const double l = (u + noise(i, j)) / tau;
      const double s = sigmoid(l);
      out.values(i, j) = s;
      out.dvalues(i, j) = s * (1.0 - s) / tau;
      out.kl += detail::concrete_logdensity(l, u, tau) - detail::concrete_logdensity(l, prior_loc, tau);
      // log q(l(u); u) does not depend on u; only the prior term moves with l.
      out.dkl(i, j) = 1.0 - 2.0 * sigmoid(prior_loc - tau * l);
    }
  }
  return out;
}

}  // namespace nd::vi
