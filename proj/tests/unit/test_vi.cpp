#include <catch_amalgamated.hpp>

#include <cmath>

#include "nd/core/math.hpp"
#include "nd/vi/elbo.hpp"
#include "nd/vi/grad_check.hpp"
#include "nd/vi/likelihood.hpp"
#include "nd/vi/masks.hpp"
#include "nd/vi/trainer.hpp"

using namespace nd;
using namespace nd::vi;
using Catch::Approx;

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

// Toy model: latent z plus one continuous covariate, every term a small softplus net.
VaeModel toy_model(Eigen::Index p, Rng& rng, bool masks) {
  std::vector<decomp::InputCoordinate> in{{"z", decomp::CoordinateKind::Latent, -3, 3},
                                          {"c", decomp::CoordinateKind::Continuous, -2, 2}};
  VaeModel m;
  m.decoder = decomp::make_model(in, p, decomp::enumerate_terms(2, 2), {{6}, nn::Activation::Softplus}, rng);
  m.decoder.intercept = uniform(p, 1, -0.5, 0.5, rng);
  m.decoder.log_noise = uniform(p, 1, -0.5, 0.2, rng);
  for (auto& t : m.decoder.terms)
    for (auto& l : t.net.mutable_layers()) l.bias = uniform(l.bias.size(), 1, -0.3, 0.3, rng);
  m.encoder = EncoderState::make(p, 1, 1, {6}, nn::Activation::Softplus, true, rng);
  m.masks = SparsityMasks::init(p, 3);
  m.masks.logits = uniform(p, 3, -1, 2, rng);
  m.use_masks = masks;
  return m;
}

TrainingData toy_data(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  TrainingData d;
  const Eigen::RowVectorXd z = uniform(1, n, -2, 2, rng);
  d.c = uniform(1, n, -2, 2, rng);
  d.y.resize(3, n);
  d.y.row(0) = z.array().sin();
  d.y.row(1) = 0.5 * z + 0.3 * d.c;
  d.y.row(2) = (z.array() * d.c.array()).matrix() * 0.2;
  d.y += 0.05 * standard_normal(3, n, rng);
  d.covariates = {{"c", decomp::CoordinateKind::Continuous, 0, 1}};
  d.feature_names = {"a", "b", "d"};
  return d;
}

}  // namespace

TEST_CASE("reparameterisation arithmetic", "[vi_engine]") {
  const Eigen::MatrixXd mu = Eigen::MatrixXd::Constant(1, 1, 1.0), s = Eigen::MatrixXd::Constant(1, 1, 0.5);
  CHECK(reparameterize(mu, s, Eigen::MatrixXd::Zero(1, 1))(0, 0) == 1.0);
  CHECK(reparameterize(mu, s, Eigen::MatrixXd::Constant(1, 1, 2.0))(0, 0) == 2.0);
  CHECK_THROWS_AS(reparameterize(mu, s, Eigen::MatrixXd::Zero(2, 1)), ShapeError);

  Rng rng(3);
  auto enc = EncoderState::make(4, 1, 2, {8}, nn::Activation::Softplus, true, rng);
  const auto y = standard_normal(4, 6, rng);
  const auto c = standard_normal(1, 6, rng);
  const auto s0 = encode_reparameterize(enc, y, c, Eigen::MatrixXd::Zero(2, 6));
  CHECK(s0.z == s0.pass.mean);
  CHECK((s0.pass.scale.array() > 0.0).all());
}

TEST_CASE("reparameterised samples have the requested moments", "[vi_engine]") {
  Rng rng(5);
  const int n = 100000;
  const auto eps = standard_normal(1, n, rng);
  const auto z = reparameterize(Eigen::MatrixXd::Constant(1, n, 0.3), Eigen::MatrixXd::Constant(1, n, 1.2), eps);
  const double mean = z.mean();
  const double sd = std::sqrt((z.array() - mean).square().mean());
  CHECK(std::abs(mean - 0.3) < 0.02);
  CHECK(std::abs(sd - 1.2) < 0.02);

  // gradient of E[z^2] at (0, 1): d/dmu = 2z averages 0, d/dsigma = 2 z eps averages 2 sigma
  const Eigen::ArrayXd e = eps.row(0).transpose().array();
  const Eigen::ArrayXd gmu = 2.0 * e, gsig = 2.0 * e * e;
  auto se = [n](const Eigen::ArrayXd& a) { return std::sqrt((a - a.mean()).square().mean() / n); };
  CHECK(std::abs(gmu.mean()) < 3 * se(gmu));
  CHECK(std::abs(gsig.mean() - 2.0) < 3 * se(gsig));
}

TEST_CASE("KL to the standard normal", "[vi_engine]") {
  CHECK(std::abs(kl_standard_normal(0.0, 1.0)) < 1e-12);
  CHECK(std::abs(kl_standard_normal(1.0, 1.0) - 0.5) < 1e-12);
  CHECK(kl_standard_normal(0.0, 2.0) == Approx(0.5 * (4.0 - std::log(4.0) - 1.0)).margin(1e-12));
  CHECK(kl_standard_normal(0.0, 2.0) == Approx(0.80685).margin(1e-5));
  CHECK_THROWS_AS(kl_standard_normal(0.0, 0.0), DomainError);
  CHECK_THROWS_AS(kl_standard_normal(0.0, -1.0), DomainError);
  Rng rng(1);
  for (int k = 0; k < 200; ++k) {
    const auto mu = uniform(3, 1, -4, 4, rng), s = uniform(3, 1, 0.01, 5, rng);
    CHECK(kl_standard_normal(mu, s) >= 0.0);
  }
}

TEST_CASE("Gaussian log-likelihood", "[vi_engine]") {
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
  CHECK(gaussian_loglik(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1), one) ==
        Approx(-kHalfLog2Pi).margin(1e-12));
  CHECK(gaussian_loglik(Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Zero(1, 1), one) ==
        Approx(-kHalfLog2Pi - 0.5).margin(1e-12));
  Rng rng(2);
  const auto y = standard_normal(2, 5, rng), m = standard_normal(2, 5, rng);
  const Eigen::VectorXd s = (Eigen::VectorXd(2) << 0.5, 2.0).finished();
  double rows = 0.0;
  for (Eigen::Index i = 0; i < 5; ++i) rows += gaussian_loglik(y.col(i), m.col(i), s);
  CHECK(gaussian_loglik(y, m, s) == Approx(rows).margin(1e-12));
  CHECK_THROWS_AS(gaussian_loglik(y, m, Eigen::VectorXd::Zero(2)), DomainError);
}

TEST_CASE("relaxed Bernoulli masks", "[vi_engine]") {
  SparsityMasks m = SparsityMasks::init(1, 1, 0.5);
  m.temperature = 0.3;
  CHECK(sample_masks(m, Eigen::MatrixXd::Zero(1, 1)).values(0, 0) == 0.5);

  // near-zero temperature concentrates on {0, 1} with P(s > 0.5) = pi
  Rng rng(4);
  const int draws = 10000;
  SparsityMasks sharp = SparsityMasks::init(1, draws, 0.9);
  sharp.temperature = 0.01;
  const auto s = sample_masks(sharp, logistic_noise(1, draws, rng));
  CHECK(std::abs((s.values.array() > 0.5).cast<double>().mean() - 0.9) < 0.02);
  CHECK(((s.values.array() < 0.01) || (s.values.array() > 0.99)).cast<double>().mean() > 0.9);
  CHECK(((s.values.array() >= 0.0) && (s.values.array() <= 1.0)).all());

  // q equal to the prior: KL estimate averages to zero
  SparsityMasks at_prior = SparsityMasks::init(1, 1, 0.1);
  at_prior.prior = 0.1;
  double sum = 0.0, sq = 0.0;
  for (int k = 0; k < 2000; ++k) {
    const double kl = sample_masks(at_prior, logistic_noise(1, 1, rng)).kl;
    sum += kl;
    sq += kl * kl;
  }
  const double mean = sum / 2000, se = std::sqrt(std::max(0.0, sq / 2000 - mean * mean) / 2000);
  CHECK(std::abs(mean) <= 3 * se + 1e-12);

  // expected mode is monotone in the logit and has no KL
  SparsityMasks e = SparsityMasks::init(1, 5);
  e.mode = MaskMode::Expected;
  e.logits << -2, -1, 0, 1, 2;
  const auto ev = sample_masks(e, Eigen::MatrixXd());
  for (int k = 1; k < 5; ++k) CHECK(ev.values(0, k) > ev.values(0, k - 1));
  CHECK(ev.kl == 0.0);

  SparsityMasks bad = SparsityMasks::init(1, 1);
  bad.temperature = 0.0;
  CHECK_THROWS_AS(sample_masks(bad, Eigen::MatrixXd::Zero(1, 1)), ArgumentError);
}

TEST_CASE("ELBO of an exact decoder with the encoder at the prior", "[vi_engine]") {
  Rng rng(6);
  const Eigen::Index p = 3, n = 4;
  auto m = toy_model(p, rng, false);
  for (auto& t : m.decoder.terms)
    for (auto& l : t.net.mutable_layers()) l.weight.setZero(), l.bias.setZero();
  m.decoder.intercept = Eigen::VectorXd::LinSpaced(p, -1, 1);
  m.decoder.log_noise.setZero();
  auto& layers = m.encoder.net.mutable_layers();
  for (auto& l : layers) l.weight.setZero(), l.bias.setZero();
  // softplus(b) + min scale = 1
  layers.back().bias[1] = std::log(std::expm1(1.0 - EncoderState::kMinScale));
  const Eigen::MatrixXd y = m.decoder.intercept.replicate(1, n);
  const auto noise = draw_noise(m, n, rng);
  const auto r = elbo(m, y, standard_normal(1, n, rng), noise, n);
  CHECK(r.terms.elbo() == Approx(-static_cast<double>(n * p) * kHalfLog2Pi).margin(1e-9));
}

TEST_CASE("ELBO gradients match finite differences", "[vi_engine]") {
  Rng rng(8);
  const Eigen::Index p = 5, n = 50;
  auto m = toy_model(p, rng, true);
  const auto y = standard_normal(p, n, rng), c = uniform(1, n, -2, 2, rng);
  const auto noise = draw_noise(m, n, rng);
  auto opt = constraints::ConstraintOptions{};
  opt.grid_nodes = 6;
  auto cs = constraints::make_constraints(m.decoder, opt);
  for (auto& l : cs.multipliers) l = uniform(l.rows(), l.cols(), -0.5, 0.5, rng);
  const auto rep = objective_grad_check(m, y, c, noise, 2 * n, &cs, 1e-6, 1e-3);
  for (const auto& b : rep.blocks) {
    INFO(b.name << " rel err " << b.relative_error);
    CHECK_FALSE(b.exceeds);
  }
}

TEST_CASE("ELBO lower-bounds the evidence of a linear-Gaussian model", "[vi_engine]") {
  Rng rng(12);
  const Eigen::Index p = 3, n = 20;
  VaeModel m;
  m.decoder = decomp::make_model({{"z", decomp::CoordinateKind::Latent, -3, 3}}, p, {decomp::TermIndex({0}, 1)},
                                 {{}, nn::Activation::Identity}, rng);
  m.decoder.intercept = Eigen::VectorXd::LinSpaced(p, -0.5, 0.5);
  m.decoder.log_noise = Eigen::VectorXd::Constant(p, std::log(0.4));
  m.encoder = EncoderState::make(p, 0, 1, {4}, nn::Activation::Softplus, true, rng);
  m.masks = SparsityMasks::init(p, 1);
  const Eigen::MatrixXd w = m.decoder.terms[0].net.layers()[0].weight;
  const Eigen::MatrixXd y = (w * standard_normal(1, n, rng)).colwise() + m.decoder.intercept +
                            0.4 * standard_normal(p, n, rng);

  const Eigen::MatrixXd cov = w * w.transpose() + 0.16 * Eigen::MatrixXd::Identity(p, p);
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const Eigen::MatrixXd centred = y.colwise() - m.decoder.intercept;
  const double quad = (centred.array() * llt.solve(centred).array()).sum();
  const double evidence = -0.5 * (static_cast<double>(n * p) * std::log(2 * M_PI) + n * logdet + quad);

  const int draws = 400;
  double sum = 0.0, sq = 0.0;
  const Eigen::MatrixXd none(0, n);
  for (int k = 0; k < draws; ++k) {
    const double e = elbo(m, y, none, draw_noise(m, n, rng), n).terms.elbo();
    sum += e;
    sq += e * e;
  }
  const double mean = sum / draws, se = std::sqrt((sq / draws - mean * mean) / draws);
  CHECK(mean - 3 * se <= evidence);
}

TEST_CASE("objective equals the negative ELBO when every residual vanishes", "[vi_engine]") {
  Rng rng(14);
  auto m = toy_model(2, rng, false);
  for (auto& t : m.decoder.terms)
    for (auto& l : t.net.mutable_layers()) l.weight.setZero(), l.bias.setZero();
  auto cs = constraints::make_constraints(m.decoder, {});
  for (auto& l : cs.multipliers) l.setConstant(3.0);
  const auto y = standard_normal(2, 10, rng), c = standard_normal(1, 10, rng);
  const auto noise = draw_noise(m, 10, rng);
  auto r = elbo(m, y, c, noise, 10);
  const double before = r.loss;
  add_constraints(r, m, cs, constraints::Estimator::quadrature());
  CHECK(r.augmentation == 0.0);
  CHECK(r.loss == before);
  CHECK(before == Approx(-r.terms.elbo() / 10.0).margin(1e-12));
}

TEST_CASE("fit with zero iterations returns the initial model", "[vi_engine]") {
  const auto data = toy_data(40, 1);
  TrainConfig cfg;
  cfg.iterations = 0;
  cfg.hidden = {8};
  const auto res = fit(data, cfg);
  CHECK(res.log.empty());
  CHECK(res.iterations_run == 0);
  Rng init(derive_seed(cfg.seed, 1));
  const auto fresh = build_model(data, cfg, init);
  CHECK(res.model.decoder.terms[2].net.layers()[0].weight == fresh.decoder.terms[2].net.layers()[0].weight);
  CHECK(res.model.encoder.net.layers()[1].weight == fresh.encoder.net.layers()[1].weight);
}

TEST_CASE("fit is deterministic and improves the ELBO", "[vi_engine]") {
  const auto data = toy_data(60, 2);
  TrainConfig cfg;
  cfg.iterations = 150;
  cfg.log_every = 10;
  cfg.hidden = {8};
  cfg.adam.learning_rate = 1e-2;
  cfg.trace_every = 50;
  cfg.constraints.grid_nodes = 8;
  cfg.constraints.eta = 0.01;
  cfg.constraints.schedule.c0 = 0.1;
  const auto a = fit(data, cfg);
  const auto b = fit(data, cfg);
  REQUIRE(a.log.size() == 15);
  for (std::size_t k = 0; k < a.log.size(); ++k) {
    CHECK(a.log[k].elbo == b.log[k].elbo);
    CHECK(a.log[k].max_residual == b.log[k].max_residual);
  }
  CHECK(a.log.back().elbo > a.log.front().elbo);
  CHECK(a.trace.size() == b.trace.size());
  CHECK_FALSE(a.trace.empty());
  CHECK_FALSE(a.diverged);

  cfg.restarts = 3;
  cfg.restart_iterations = 30;
  const auto r1 = fit(data, cfg), r2 = fit(data, cfg);
  CHECK(r1.log.back().elbo == r2.log.back().elbo);
}

TEST_CASE("fit reports tolerance failures without throwing", "[vi_engine]") {
  const auto data = toy_data(30, 3);
  TrainConfig cfg;
  cfg.iterations = 5;
  cfg.hidden = {4};
  cfg.constraints.epsilon = 1e-9;
  const auto res = fit(data, cfg);
  CHECK(res.constrained);
  CHECK_FALSE(res.tolerance.passed);
  CHECK(res.message.find("tolerance") != std::string::npos);

  cfg.variant = DecoderVariant::NdUnconstrained;
  CHECK_FALSE(fit(data, cfg).constrained);
}

TEST_CASE("train config validation", "[vi_engine]") {
  TrainConfig cfg;
  cfg.latent_dim = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.iterations = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.constraints.epsilon = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(variant_from_string("nd_constrained") == DecoderVariant::NdConstrained);
  CHECK_THROWS_AS(variant_from_string("transformer"), ConfigError);
}

TEST_CASE("decoder variants build the expected terms", "[vi_engine]") {
  const auto data = toy_data(10, 4);
  Rng rng(1);
  TrainConfig cfg;
  cfg.hidden = {4};
  cfg.variant = DecoderVariant::Cvae;
  const auto cvae = build_model(data, cfg, rng);
  REQUIRE(cvae.decoder.terms.size() == 1);
  CHECK(cvae.decoder.terms[0].index.order() == 2);
  cfg.variant = DecoderVariant::Linear;
  const auto lin = build_model(data, cfg, rng);
  CHECK(lin.decoder.terms.size() == 3);
  for (const auto& t : lin.decoder.terms) CHECK(t.net.layers().size() == 1);
  CHECK(lin.decoder.inputs[1].lo == data.c.minCoeff());
  CHECK(lin.decoder.inputs[1].hi == data.c.maxCoeff());
}
