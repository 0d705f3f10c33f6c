#pragma once

#include <Eigen/Dense>

#include "nd/core/errors.hpp"
#include "nd/core/math.hpp"
#include "nd/core/random.hpp"
#include "nd/nn/dense_net.hpp"

namespace nd::vi {

/// Amortised Gaussian posterior q(z | y, c). A single network maps the stacked
/// input [y; c] to 2*dim(z) outputs: the mean, then the pre-softplus scale.
struct EncoderState {
  nn::DenseNet net;
  int latent_dim = 1;
  Eigen::Index features = 0;
  Eigen::Index covariates = 0;
  bool uses_covariates = true;

  static constexpr double kMinScale = 1e-6;

  static EncoderState make(Eigen::Index features, Eigen::Index covariates, int latent_dim,
                           const std::vector<Eigen::Index>& hidden, nn::Activation act, bool uses_covariates,
                           Rng& rng) {
    if (latent_dim < 1) throw ConfigError("latent dimension must be at least 1");
    EncoderState e;
    e.latent_dim = latent_dim;
    e.features = features;
    e.covariates = covariates;
    e.uses_covariates = uses_covariates;
    const Eigen::Index in = features + (uses_covariates ? covariates : 0);
    e.net = nn::DenseNet::mlp(in, hidden, 2 * latent_dim, act, rng);
    return e;
  }

  Eigen::MatrixXd stack_inputs(const Eigen::MatrixXd& y, const Eigen::MatrixXd& c) const {
    if (y.rows() != features) throw ShapeError("encoder: expected " + std::to_string(features) + " feature rows");
    if (!uses_covariates || covariates == 0) return y;
    if (c.rows() != covariates || c.cols() != y.cols()) throw ShapeError("encoder: covariate block has wrong shape");
    Eigen::MatrixXd x(features + covariates, y.cols());
    x << y, c;
    return x;
  }
};

struct EncoderPass {
  nn::ForwardCache cache;
  Eigen::MatrixXd mean;       // dz x N
  Eigen::MatrixXd raw_scale;  // dz x N
  Eigen::MatrixXd scale;      // dz x N, softplus(raw) + kMinScale
};

inline EncoderPass encode(const EncoderState& enc, const Eigen::MatrixXd& y, const Eigen::MatrixXd& c) {
  EncoderPass p;
  const auto out = enc.net.forward(enc.stack_inputs(y, c), p.cache);
  p.mean = out.topRows(enc.latent_dim);
  p.raw_scale = out.bottomRows(enc.latent_dim);
  p.scale = p.raw_scale.unaryExpr([](double v) { return softplus(v) + EncoderState::kMinScale; });
  return p;
}

/// z = mean + scale .* noise.
inline Eigen::MatrixXd reparameterize(const Eigen::MatrixXd& mean, const Eigen::MatrixXd& scale,
                                      const Eigen::MatrixXd& noise) {
  if (mean.rows() != noise.rows() || mean.cols() != noise.cols() || scale.rows() != mean.rows() ||
      scale.cols() != mean.cols())
    throw ShapeError("reparameterize: mean, scale and noise must share a shape");
  return mean + (scale.array() * noise.array()).matrix();
}

struct EncodeSample {
  EncoderPass pass;
  Eigen::MatrixXd z;
};

inline EncodeSample encode_reparameterize(const EncoderState& enc, const Eigen::MatrixXd& y,
                                          const Eigen::MatrixXd& c, const Eigen::MatrixXd& noise) {
  EncodeSample s;
  s.pass = encode(enc, y, c);
  s.z = reparameterize(s.pass.mean, s.pass.scale, noise);
  return s;
}

/// Gradient tape of the encoder given d loss / d mean and d loss / d scale.
inline nn::GradientTape encoder_backward(const EncoderState& enc, const EncoderPass& pass,
                                         const Eigen::MatrixXd& d_mean, const Eigen::MatrixXd& d_scale) {
  Eigen::MatrixXd up(2 * enc.latent_dim, d_mean.cols());
  up.topRows(enc.latent_dim) = d_mean;
  up.bottomRows(enc.latent_dim) =
      (d_scale.array() * pass.raw_scale.unaryExpr([](double v) { return sigmoid(v); }).array()).matrix();
  return enc.net.backward(pass.cache, up);
}

}  // namespace nd::vi
