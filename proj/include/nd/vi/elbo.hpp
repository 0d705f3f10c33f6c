#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nd/constraints/constraint_set.hpp"
#include "nd/core/errors.hpp"
#include "nd/core/params.hpp"
#include "nd/core/random.hpp"
#include "nd/decomp/decode.hpp"
#include "nd/vi/encoder.hpp"
#include "nd/vi/likelihood.hpp"
#include "nd/vi/masks.hpp"

namespace nd::vi {

/// Conditional VAE with a decomposable decoder. Decoder inputs are ordered
/// [z_1..z_d, c_1..c_k]: latent coordinates first, then covariates.
struct VaeModel {
  decomp::DecompositionModel decoder;
  EncoderState encoder;
  SparsityMasks masks;
  bool use_masks = false;

  int latent_dim() const { return encoder.latent_dim; }
  Eigen::Index features() const { return decoder.features(); }
};

struct VaeGradients {
  std::vector<nn::GradientTape> terms;
  Eigen::VectorXd intercept;
  Eigen::VectorXd log_noise;
  nn::GradientTape encoder;
  Eigen::MatrixXd mask_logits;
};

/// Exogenous randomness of one objective evaluation (common random numbers).
struct NoiseDraw {
  Eigen::MatrixXd latent;  // dz x B standard normal
  Eigen::MatrixXd mask;    // P x T logistic
};

inline NoiseDraw draw_noise(const VaeModel& model, Eigen::Index batch, Rng& rng) {
  NoiseDraw n;
  n.latent = standard_normal(model.latent_dim(), batch, rng);
  n.mask = logistic_noise(model.features(), static_cast<Eigen::Index>(model.decoder.terms.size()), rng);
  return n;
}

struct ElboTerms {
  double recon = 0.0;  // sum over the batch
  double kl_z = 0.0;   // sum over the batch
  double kl_s = 0.0;   // global
  double elbo() const { return recon - kl_z - kl_s; }
};

struct ObjectiveResult {
  ElboTerms terms;
  double loss = 0.0;  // -(recon - kl_z)/B - kl_s/N + augmentation
  double augmentation = 0.0;
  VaeGradients grad;
  std::vector<constraints::ResidualField> residuals;
};

/// Decoder input [z; c] for a batch.
inline Eigen::MatrixXd decoder_inputs(const Eigen::MatrixXd& z, const Eigen::MatrixXd& c) {
  if (c.rows() == 0) return z;
  Eigen::MatrixXd x(z.rows() + c.rows(), z.cols());
  x << z, c;
  return x;
}

/// Negative per-datapoint ELBO of the batch (y: P x B, c: dc x B) and its gradients.
/// `dataset_size` scales the global mask KL so that a full pass sums to -ELBO/N.
inline ObjectiveResult elbo(const VaeModel& model, const Eigen::MatrixXd& y, const Eigen::MatrixXd& c,
                            const NoiseDraw& noise, Eigen::Index dataset_size) {
  const auto batch = y.cols();
  if (batch < 1) throw ArgumentError("elbo: empty batch");
  if (dataset_size < batch) throw ArgumentError("elbo: dataset size smaller than batch");
  const auto& dec = model.decoder;
  if (dec.input_dim() != model.latent_dim() + c.rows())
    throw ShapeError("elbo: decoder input width must equal dim(z) + dim(c)");

  ObjectiveResult r;
  const auto enc = encode_reparameterize(model.encoder, y, c, noise.latent);

  MaskSample ms;
  const Eigen::MatrixXd* mask = nullptr;
  if (model.use_masks) {
    ms = sample_masks(model.masks, noise.mask);
    mask = &ms.values;
    r.terms.kl_s = ms.kl;
  }
  const auto x = decoder_inputs(enc.z, c);
  const auto pass = decomp::decode_forward(dec, x, mask);

  const Eigen::VectorXd sigma = dec.noise_scale();
  r.terms.recon = gaussian_loglik(y, pass.output, sigma);
  r.terms.kl_z = kl_standard_normal(enc.pass.mean, enc.pass.scale);

  const double inv_b = 1.0 / static_cast<double>(batch);
  const double inv_n = 1.0 / static_cast<double>(dataset_size);
  r.loss = -(r.terms.recon - r.terms.kl_z) * inv_b + r.terms.kl_s * inv_n;
  if (!std::isfinite(r.loss)) throw NumericError("elbo: non-finite objective");

  // d loss / d decoded mean = -(y - mean) / sigma^2 / B
  const Eigen::ArrayXd inv_var = sigma.array().square().inverse();
  const Eigen::MatrixXd resid = y - pass.output;
  const Eigen::MatrixXd d_out = (-(resid.array().colwise() * inv_var) * inv_b).matrix();
  auto dg = decomp::decode_backward(dec, pass, d_out, mask);

  r.grad.terms = std::move(dg.terms);
  r.grad.intercept = std::move(dg.intercept);
  r.grad.log_noise =
      ((1.0 - (resid.array().square().colwise() * inv_var)).rowwise().sum() * inv_b).matrix();

  const auto dz = model.latent_dim();
  const Eigen::MatrixXd d_z = dg.input.topRows(dz);
  const Eigen::MatrixXd d_mean = d_z + enc.pass.mean * inv_b;
  const Eigen::MatrixXd d_scale =
      (d_z.array() * noise.latent.array() +
       (enc.pass.scale.array() - enc.pass.scale.array().inverse()) * inv_b)
          .matrix();
  r.grad.encoder = encoder_backward(model.encoder, enc.pass, d_mean, d_scale);

  if (model.use_masks)
    r.grad.mask_logits = (dg.mask.array() * ms.dvalues.array() + ms.dkl.array() * inv_n).matrix();
  else
    r.grad.mask_logits = Eigen::MatrixXd::Zero(model.masks.logits.rows(), model.masks.logits.cols());
  return r;
}

/// Adds the constraint augmentation (value and term gradients) to `r`.
inline void add_constraints(ObjectiveResult& r, const VaeModel& model, const constraints::ConstraintSet& cs,
                            const constraints::Estimator& est) {
  const auto ev = constraints::evaluate_constraints(model.decoder, cs, est);
  const auto aug = constraints::penalty_terms(model.decoder, cs, ev);
  r.augmentation = aug.value;
  r.loss += aug.value;
  for (std::size_t k = 0; k < r.grad.terms.size(); ++k) r.grad.terms[k].accumulate(aug.term_grads[k]);
  r.residuals = ev.residuals;
}

/// Parameter blocks of every trainable quantity paired with `g`.
inline ParamBlocks bind_parameters(VaeModel& model, const VaeGradients& g) {
  ParamBlocks blocks;
  for (std::size_t k = 0; k < model.decoder.terms.size(); ++k)
    model.decoder.terms[k].net.append_blocks(blocks, g.terms[k], "term" + std::to_string(k) + ".");
  blocks.push_back({"intercept", as_span(model.decoder.intercept), as_span(g.intercept)});
  blocks.push_back({"log_noise", as_span(model.decoder.log_noise), as_span(g.log_noise)});
  model.encoder.net.append_blocks(blocks, g.encoder, "encoder.");
  if (model.use_masks) blocks.push_back({"mask_logits", as_span(model.masks.logits), as_span(g.mask_logits)});
  return blocks;
}

/// Posterior means of z for a full dataset (dz x N).
inline Eigen::MatrixXd posterior_mean(const VaeModel& model, const Eigen::MatrixXd& y, const Eigen::MatrixXd& c) {
  return encode(model.encoder, y, c).mean;
}

}  // namespace nd::vi
