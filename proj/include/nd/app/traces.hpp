#pragma once

// Constrained fitting of a single two-input term network, recording the
// integral residuals on the quadrature grid over the whole run.
//
// The network f(x1, x2) plus an intercept is regressed onto the second
// feature of the Figure-1 toy. That target has non-zero main effects, so the
// least-squares fit and the zero-integral constraints pull against each other.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nd/constraints/constraint_set.hpp"
#include "nd/core/errors.hpp"
#include "nd/core/params.hpp"
#include "nd/core/random.hpp"
#include "nd/decomp/decode.hpp"
#include "nd/nn/adam.hpp"
#include "nd/synth/generators.hpp"

namespace nd::app {

struct TraceConfig {
  int iterations = 100000;
  int record_every = 500;
  double penalty = 1.0;  // c, shared by every method and held fixed
  double eta = 1.0;      // multiplier step, shared by BDMM and MDMM
  double learning_rate = 1e-3;
  bool adam = false;  // plain gradient descent otherwise
  double epsilon = 1e-2;
  int grid_nodes = 16;
  Eigen::Index samples = 500;
  double noise = 0.05;
  std::vector<Eigen::Index> hidden{64};
  std::uint64_t seed = 1;

  void validate() const {
    if (iterations < 1) throw ConfigError("traces: iterations must be positive");
    if (record_every < 1) throw ConfigError("traces: record_every must be positive");
    if (!(penalty > 0.0) || !(eta > 0.0) || !(learning_rate > 0.0) || !(epsilon > 0.0))
      throw ConfigError("traces: c, eta, learning rate and epsilon must be positive");
    if (samples < 2) throw ConfigError("traces: need at least 2 samples");
  }
};

struct TraceRun {
  constraints::Method method = constraints::Method::MDMM;
  std::vector<std::string> constraint_labels;
  std::vector<constraints::TraceRow> records;
  std::vector<int> recorded_iterations;
  std::vector<double> max_abs;  // max |g| at each recorded iteration
  double final_max_abs = 0.0;
  int settled_at = -1;          // first recorded iteration from which max |g| stays below epsilon
  double fit_mse = 0.0;
};

/// Largest number of sign changes over all individual grid-point traces.
inline int max_sign_changes(const TraceRun& run) {
  std::map<std::pair<std::size_t, Eigen::Index>, std::pair<double, int>> state;
  int best = 0;
  for (const auto& r : run.records) {
    auto [it, inserted] = state.try_emplace({r.constraint, r.grid_index}, r.g, 0);
    if (inserted) continue;
    auto& [prev, count] = it->second;
    if ((prev < 0.0 && r.g > 0.0) || (prev > 0.0 && r.g < 0.0)) best = std::max(best, ++count);
    if (r.g != 0.0) prev = r.g;
  }
  return best;
}

/// Ratio of the peak max |g| over the last quarter of the run to the peak over
/// the first quarter; below 1 means a decaying envelope.
inline double envelope_ratio(const TraceRun& run) {
  const std::size_t n = run.max_abs.size();
  if (n < 4) return std::numeric_limits<double>::quiet_NaN();
  const auto q = n / 4;
  const double early = *std::max_element(run.max_abs.begin(), run.max_abs.begin() + static_cast<std::ptrdiff_t>(q));
  const double late = *std::max_element(run.max_abs.end() - static_cast<std::ptrdiff_t>(q), run.max_abs.end());
  return early > 0.0 ? late / early : std::numeric_limits<double>::quiet_NaN();
}

inline decomp::DecompositionModel trace_model(const TraceConfig& cfg, Rng& rng) {
  std::vector<decomp::InputCoordinate> inputs{{"x1", decomp::CoordinateKind::Continuous, -2.0, 2.0},
                                              {"x2", decomp::CoordinateKind::Continuous, -2.0, 2.0}};
  return decomp::make_model(std::move(inputs), 1, {decomp::TermIndex({0, 1}, 2)},
                            {cfg.hidden, nn::Activation::Softplus}, rng);
}

inline TraceRun run_trace(const TraceConfig& cfg, constraints::Method method) {
  cfg.validate();
  synth::SyntheticSpec spec;
  spec.id = synth::Generator::Fig1Toy;
  spec.n = cfg.samples;
  spec.noise = cfg.noise;
  spec.seed = cfg.seed;
  const auto data = synth::generate(spec);
  Eigen::MatrixXd x(2, data.y.cols());
  x << data.z, data.c;
  const Eigen::MatrixXd target = data.y.row(1);

  Rng rng(derive_seed(cfg.seed, 31));
  auto model = trace_model(cfg, rng);
  constraints::ConstraintOptions opt;
  opt.grid_nodes = cfg.grid_nodes;
  opt.method = method;
  opt.eta = cfg.eta;
  opt.epsilon = cfg.epsilon;
  opt.schedule.c0 = cfg.penalty;
  opt.schedule.growth = 1.0;
  opt.schedule.c_max = cfg.penalty;
  auto cs = constraints::make_constraints(model, opt);

  TraceRun run;
  run.method = method;
  for (const auto& c : cs.constraints) run.constraint_labels.push_back(c.label);
  nn::AdamConfig ac;
  ac.learning_rate = cfg.learning_rate;
  nn::AdamState adam(ac);
  const double inv_n = 1.0 / static_cast<double>(x.cols());

  for (int it = 1; it <= cfg.iterations; ++it) {
    const auto pass = decomp::decode_forward(model, x);
    const Eigen::MatrixXd resid = pass.output - target;
    const Eigen::MatrixXd d_out = 2.0 * inv_n * resid;
    auto dg = decomp::decode_backward(model, pass, d_out);
    const auto ev = constraints::evaluate_constraints(model, cs);
    const auto aug = constraints::penalty_terms(model, cs, ev);
    dg.terms[0].accumulate(aug.term_grads[0]);

    if (it == 1 || it % cfg.record_every == 0 || it == cfg.iterations) {
      const double m = constraints::max_abs_residual(ev.residuals);
      run.recorded_iterations.push_back(it);
      run.max_abs.push_back(m);
      constraints::append_trace(run.records, it, cs, ev.residuals);
    }

    ParamBlocks blocks;
    model.terms[0].net.append_blocks(blocks, dg.terms[0], "term.");
    blocks.push_back({"intercept", as_span(model.intercept), as_span(dg.intercept)});
    if (cfg.adam) {
      nn::adam_step(blocks, adam);
    } else {
      for (auto& b : blocks)
        for (std::size_t i = 0; i < b.value.size(); ++i) b.value[i] -= cfg.learning_rate * b.grad[i];
    }
    if (method != constraints::Method::Penalty) constraints::multiplier_update(cs, ev.residuals);
  }

  const auto final_g = constraints::residuals(model, cs);
  run.final_max_abs = constraints::max_abs_residual(final_g);
  for (std::size_t k = run.max_abs.size(); k-- > 0;) {
    if (!(run.max_abs[k] < cfg.epsilon)) break;
    run.settled_at = run.recorded_iterations[k];
  }
  run.fit_mse = (decomp::decode(model, x) - target).squaredNorm() * inv_n;
  return run;
}

}  // namespace nd::app
