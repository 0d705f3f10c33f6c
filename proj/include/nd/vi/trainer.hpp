#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "nd/constraints/constraint_set.hpp"
#include "nd/core/errors.hpp"
#include "nd/core/random.hpp"
#include "nd/decomp/model.hpp"
#include "nd/nn/adam.hpp"
#include "nd/vi/elbo.hpp"

namespace nd::vi {

/// linear: single-layer term networks, constrained.
/// nd_unconstrained: hidden-layer term networks without constraints.
/// nd_constrained: hidden-layer term networks under the integral constraints.
/// cvae: one unconstrained network over all decoder inputs (plain CVAE).
enum class DecoderVariant { Linear, NdUnconstrained, NdConstrained, Cvae };

inline std::string_view to_string(DecoderVariant v) {
  switch (v) {
    case DecoderVariant::Linear: return "linear";
    case DecoderVariant::NdUnconstrained: return "nd_unconstrained";
    case DecoderVariant::NdConstrained: return "nd_constrained";
    case DecoderVariant::Cvae: return "cvae";
  }
  return "?";
}

inline DecoderVariant variant_from_string(std::string_view s) {
  if (s == "linear") return DecoderVariant::Linear;
  if (s == "nd_unconstrained") return DecoderVariant::NdUnconstrained;
  if (s == "nd_constrained") return DecoderVariant::NdConstrained;
  if (s == "cvae") return DecoderVariant::Cvae;
  throw ConfigError("unknown decoder variant '" + std::string(s) + "'");
}

inline bool is_constrained(DecoderVariant v) {
  return v == DecoderVariant::Linear || v == DecoderVariant::NdConstrained;
}

struct TrainConfig {
  int iterations = 20000;
  int batch_size = 0;  // 0: full batch up to 2000 rows, 256 above
  std::uint64_t seed = 1;
  nn::AdamConfig adam;
  DecoderVariant variant = DecoderVariant::NdConstrained;
  constraints::ConstraintOptions constraints;
  constraints::EstimatorKind estimator = constraints::EstimatorKind::Quadrature;
  int mc_samples = 256;
  int latent_dim = 1;
  std::vector<Eigen::Index> hidden{64};
  nn::Activation activation = nn::Activation::Softplus;
  int max_order = 2;
  bool encoder_uses_covariates = true;
  bool use_masks = false;
  double mask_prior = 0.1;
  double temperature = 0.5;
  double temperature_final = 0.5;  // linear annealing target; equal to `temperature` disables it
  double latent_range = 3.0;       // latent integration domain [-r, r]
  int log_every = 50;
  int trace_every = 0;           // > 0: record constraint residuals at this interval
  double lr_final = 0.0;         // > 0: learning rate decays linearly to this value
  int restarts = 1;              // independent initialisations ranked by ELBO
  int restart_iterations = 1000; // training per restart before ranking

  void validate() const {
    if (iterations < 0) throw ConfigError("iterations must be non-negative");
    if (batch_size < 0) throw ConfigError("batch size must be non-negative");
    if (latent_dim < 1) throw ConfigError("latent dimension must be at least 1");
    if (max_order < 1) throw ConfigError("max_order must be at least 1");
    if (log_every < 1) throw ConfigError("log_every must be positive");
    if (trace_every < 0) throw ConfigError("trace_every must be non-negative");
    if (restarts < 1) throw ConfigError("restarts must be at least 1");
    if (restart_iterations < 1) throw ConfigError("restart_iterations must be positive");
    if (!(temperature > 0.0) || !(temperature_final > 0.0)) throw ConfigError("temperature must be positive");
    if (!(mask_prior > 0.0 && mask_prior < 1.0)) throw ConfigError("mask prior must lie in (0, 1)");
    if (!(constraints.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (!(adam.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(lr_final >= 0.0)) throw ConfigError("final learning rate must be non-negative");
    if (!(latent_range > 0.0)) throw ConfigError("latent range must be positive");
    if (estimator == constraints::EstimatorKind::MonteCarlo && mc_samples < 1)
      throw ConfigError("mc_samples must be positive");
  }
};

/// Training inputs: y is P x N, c is dc x N; one coordinate description per covariate row.
struct TrainingData {
  Eigen::MatrixXd y;
  Eigen::MatrixXd c;
  std::vector<decomp::InputCoordinate> covariates;
  std::vector<std::string> feature_names;

  Eigen::Index size() const { return y.cols(); }
};

struct LogRow {
  int iteration = 0;
  double elbo = 0.0;
  double recon = 0.0;
  double kl_z = 0.0;
  double kl_s = 0.0;
  double max_residual = 0.0;
  double penalty = 0.0;
};

struct FitResult {
  VaeModel model;
  constraints::ConstraintSet constraints;
  bool constrained = false;
  std::vector<LogRow> log;
  std::vector<constraints::TraceRow> trace;
  std::vector<constraints::ResidualField> final_residuals;
  constraints::ToleranceReport tolerance;
  int iterations_run = 0;
  bool diverged = false;
  std::string message;
};

/// Decoder coordinates for the data: latent z (or z1..zd), then covariates with
/// their integration domain set to the empirical [min, max].
inline std::vector<decomp::InputCoordinate> decoder_coordinates(const TrainingData& data, const TrainConfig& cfg) {
  std::vector<decomp::InputCoordinate> coords;
  for (int d = 0; d < cfg.latent_dim; ++d)
    coords.push_back({cfg.latent_dim == 1 ? "z" : "z" + std::to_string(d + 1), decomp::CoordinateKind::Latent,
                      -cfg.latent_range, cfg.latent_range});
  if (static_cast<Eigen::Index>(data.covariates.size()) != data.c.rows())
    throw ShapeError("one covariate description per covariate row required");
  for (std::size_t k = 0; k < data.covariates.size(); ++k) {
    auto c = data.covariates[k];
    if (c.kind == decomp::CoordinateKind::Latent) throw ConfigError("covariate '" + c.name + "' cannot be latent");
    if (c.kind == decomp::CoordinateKind::Continuous) {
      const auto row = data.c.row(static_cast<Eigen::Index>(k));
      c.lo = row.minCoeff();
      c.hi = row.maxCoeff();
      if (!(c.lo < c.hi)) throw DataError("covariate '" + c.name + "' is constant");
    }
    coords.push_back(std::move(c));
  }
  return coords;
}

inline VaeModel build_model(const TrainingData& data, const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  auto coords = decoder_coordinates(data, cfg);
  const int d = static_cast<int>(coords.size());
  std::vector<decomp::TermIndex> terms;
  decomp::TermArchitecture arch{cfg.hidden, cfg.activation};
  switch (cfg.variant) {
    case DecoderVariant::Cvae: {
      std::vector<int> all(static_cast<std::size_t>(d));
      std::iota(all.begin(), all.end(), 0);
      terms.emplace_back(all, d);
      break;
    }
    case DecoderVariant::Linear:
      arch.hidden.clear();
      terms = decomp::enumerate_terms(d, std::min(cfg.max_order, d));
      break;
    default:
      terms = decomp::enumerate_terms(d, std::min(cfg.max_order, d));
  }
  VaeModel m;
  m.decoder = decomp::make_model(std::move(coords), data.y.rows(), terms, arch, rng);
  m.encoder = EncoderState::make(data.y.rows(), data.c.rows(), cfg.latent_dim, cfg.hidden, cfg.activation,
                                 cfg.encoder_uses_covariates, rng);
  m.masks = SparsityMasks::init(data.y.rows(), static_cast<Eigen::Index>(terms.size()));
  m.masks.prior = cfg.mask_prior;
  m.masks.temperature = cfg.temperature;
  m.use_masks = cfg.use_masks;
  return m;
}

inline Eigen::Index effective_batch(const TrainConfig& cfg, Eigen::Index n) {
  if (cfg.batch_size > 0) return std::min<Eigen::Index>(cfg.batch_size, n);
  return n <= 2000 ? n : 256;
}

/// Mean full-data ELBO per row under a fixed noise draw; used to rank restarts.
inline double evaluation_elbo(const VaeModel& model, const TrainingData& data, std::uint64_t seed) {
  Rng rng(seed);
  const auto noise = draw_noise(model, data.size(), rng);
  const auto r = elbo(model, data.y, data.c, noise, data.size());
  return r.terms.elbo() / static_cast<double>(data.size());
}

/// One training run: per iteration a minibatch, -ELBO plus augmentation,
/// one Adam step on all parameters, then one multiplier ascent step.
class TrainingRun {
 public:
  TrainingRun(const TrainingData& data, const TrainConfig& cfg, std::uint64_t init_stream, std::uint64_t train_stream)
      : data_(data), cfg_(cfg), rng_(derive_seed(cfg.seed, train_stream)), adam_(cfg.adam) {
    Rng init_rng(derive_seed(cfg.seed, init_stream));
    res_.model = build_model(data, cfg, init_rng);
    res_.constraints = constraints::make_constraints(res_.model.decoder, cfg.constraints);
    res_.constrained = is_constrained(cfg.variant);
    batch_ = effective_batch(cfg, data.size());
    order_.resize(static_cast<std::size_t>(data.size()));
    std::iota(order_.begin(), order_.end(), Eigen::Index{0});
    cursor_ = order_.size();
  }

  /// Advances training up to iteration `until` (inclusive) or until divergence.
  void run_until(int until) {
    auto& model = res_.model;
    auto& cs = res_.constraints;
    const Eigen::Index n = data_.size();
    VaeModel last_good = model;
    Eigen::MatrixXd yb, cb;
    for (int it = res_.iterations_run + 1; it <= until && !res_.diverged; ++it) {
      if (batch_ == n) {
        yb = data_.y;
        cb = data_.c;
      } else {
        if (cursor_ + static_cast<std::size_t>(batch_) > order_.size()) {
          std::shuffle(order_.begin(), order_.end(), rng_);
          cursor_ = 0;
        }
        const auto first = order_.begin() + static_cast<std::ptrdiff_t>(cursor_);
        std::vector<Eigen::Index> idx(first, first + static_cast<std::ptrdiff_t>(batch_));
        cursor_ += static_cast<std::size_t>(batch_);
        yb = data_.y(Eigen::all, idx);
        cb = data_.c(Eigen::all, idx);
      }
      if (cfg_.temperature_final != cfg_.temperature)
        model.masks.temperature =
            cfg_.temperature + (cfg_.temperature_final - cfg_.temperature) * static_cast<double>(it - 1) /
                                   std::max(1, cfg_.iterations - 1);

      const auto noise = draw_noise(model, batch_, rng_);
      try {
        auto r = elbo(model, yb, cb, noise, n);
        if (res_.constrained) {
          const auto est = cfg_.estimator == constraints::EstimatorKind::MonteCarlo
                               ? constraints::Estimator::monte_carlo(cfg_.mc_samples,
                                                                     derive_seed(cfg_.seed, 1000 + it))
                               : constraints::Estimator::quadrature();
          add_constraints(r, model, cs, est);
        }
        if (!std::isfinite(r.loss)) throw NumericError("non-finite training objective");
        if (res_.constrained && cfg_.trace_every > 0 && (it % cfg_.trace_every == 0 || it == cfg_.iterations))
          constraints::append_trace(res_.trace, it, cs, r.residuals);
        last_good = model;
        if (cfg_.lr_final > 0.0)
          adam_.config.learning_rate =
              cfg_.adam.learning_rate + (cfg_.lr_final - cfg_.adam.learning_rate) * static_cast<double>(it - 1) /
                                            std::max(1, cfg_.iterations - 1);
        auto blocks = bind_parameters(model, r.grad);
        nn::adam_step(blocks, adam_);
        if (res_.constrained && cs.method != constraints::Method::Penalty) constraints::multiplier_update(cs, r.residuals);
        res_.iterations_run = it;
        if (it % cfg_.log_every == 0 || it == cfg_.iterations) {
          const double scale = static_cast<double>(n) / static_cast<double>(batch_);
          LogRow row;
          row.iteration = it;
          row.recon = r.terms.recon * scale;
          row.kl_z = r.terms.kl_z * scale;
          row.kl_s = r.terms.kl_s;
          row.elbo = row.recon - row.kl_z - row.kl_s;
          row.max_residual = res_.constrained ? constraints::max_abs_residual(r.residuals) : 0.0;
          row.penalty = cs.penalty;
          res_.log.push_back(row);
        }
      } catch (const NumericError& e) {
        model = last_good;
        res_.diverged = true;
        res_.message = "diverged at iteration " + std::to_string(it) + ": " + e.what();
      }
    }
  }

  const FitResult& result() const { return res_; }

  FitResult finish() && {
    res_.final_residuals = constraints::residuals(res_.model.decoder, res_.constraints);
    res_.tolerance = constraints::check_tolerance(res_.final_residuals, cfg_.constraints.epsilon);
    if (!res_.diverged && res_.constrained && !res_.tolerance.passed)
      res_.message = "constraint tolerance not reached: max |g| = " + std::to_string(res_.tolerance.max_abs);
    return std::move(res_);
  }

 private:
  const TrainingData& data_;
  TrainConfig cfg_;
  Rng rng_;
  nn::AdamState adam_;
  FitResult res_;
  Eigen::Index batch_ = 0;
  std::vector<Eigen::Index> order_;
  std::size_t cursor_ = 0;
};

/// Trains a model. With restarts > 1, that many independently initialised runs
/// are trained for restart_iterations each; the run with the highest
/// evaluation ELBO continues to the full iteration budget.
inline FitResult fit(const TrainingData& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() < 1) throw DataError("fit: empty dataset");
  if (data.c.cols() != data.size()) throw ShapeError("fit: covariate and feature column counts differ");

  if (cfg.restarts <= 1) {
    TrainingRun run(data, cfg, 1, 2);
    run.run_until(cfg.iterations);
    return std::move(run).finish();
  }
  const int warmup = std::min(cfg.restart_iterations, cfg.iterations);
  std::optional<TrainingRun> best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < cfg.restarts; ++k) {
    TrainingRun run(data, cfg, 1 + 2 * static_cast<std::uint64_t>(k), 2 + 2 * static_cast<std::uint64_t>(k));
    run.run_until(warmup);
    if (run.result().diverged) continue;
    const double score = evaluation_elbo(run.result().model, data, derive_seed(cfg.seed, 3));
    if (std::isfinite(score) && (!best || score > best_score)) {
      best_score = score;
      best.emplace(std::move(run));
    }
  }
  if (!best) {
    TrainingRun run(data, cfg, 1, 2);
    run.run_until(warmup);
    return std::move(run).finish();
  }
  best->run_until(cfg.iterations);
  return std::move(*best).finish();
}

}  // namespace nd::vi
