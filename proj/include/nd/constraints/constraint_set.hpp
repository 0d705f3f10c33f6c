#pragma once

// Integral identifiability constraints for decomposition terms.
//
// Every term f_I carries one constraint per coordinate i in I:
//     g_{I,i}(x_{I\i}) = \int f_I(x_I) dx_i = 0,
// a field over the remaining coordinates, discretised on the product of their
// quadrature nodes, with one value per output feature. The multiplier for a
// constraint has the same P x K shape as its residual field.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "nd/constraints/quadrature.hpp"
#include "nd/core/errors.hpp"
#include "nd/core/random.hpp"
#include "nd/decomp/model.hpp"
#include "nd/nn/dense_net.hpp"

namespace nd::constraints {

enum class Method { Penalty, BDMM, MDMM };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::Penalty: return "penalty";
    case Method::BDMM: return "bdmm";
    case Method::MDMM: return "mdmm";
  }
  return "?";
}

inline Method method_from_string(std::string_view s) {
  if (s == "penalty") return Method::Penalty;
  if (s == "bdmm") return Method::BDMM;
  if (s == "mdmm") return Method::MDMM;
  throw ConfigError("unknown constraint method '" + std::string(s) + "'");
}

/// c_t starts at c0 and is multiplied by `growth` every `every` multiplier
/// updates, capped at c_max. growth == 1 keeps c fixed.
struct PenaltySchedule {
  double c0 = 1.0;
  double growth = 1.001;
  int every = 100;
  double c_max = 1e4;
};

struct ConstraintOptions {
  int grid_nodes = 32;
  Method method = Method::MDMM;
  PenaltySchedule schedule;
  double eta = 1.0;
  double epsilon = 1e-2;
};

struct Constraint {
  decomp::TermIndex term;
  std::size_t term_slot = 0;           // position of the term in the model
  int axis = 0;                        // integrated coordinate
  std::vector<int> conditioning;       // remaining coordinates of the term
  Eigen::MatrixXd conditioning_points; // |conditioning| x K (1 x 1 zero when empty)
  Eigen::VectorXd conditioning_weights;// K, product of trapezoid weights (1 when empty)
  std::string label;                   // e.g. "z:c/dz"

  Eigen::Index grid_size() const { return conditioning_weights.size(); }
};

using ResidualField = Eigen::MatrixXd;  // P x K

struct ConstraintSet {
  std::vector<QuadratureGrid> grids;  // one per input coordinate
  std::vector<Constraint> constraints;
  std::vector<Eigen::MatrixXd> multipliers;  // P x K per constraint
  Method method = Method::MDMM;
  PenaltySchedule schedule;
  double penalty = 1.0;  // current c_t
  double eta = 1.0;
  double epsilon = 1e-2;
  std::uint64_t updates = 0;

  std::size_t size() const { return constraints.size(); }
};

namespace detail {

/// Row-major enumeration of a product grid over `coords`.
inline Eigen::MatrixXd product_points(const std::vector<QuadratureGrid>& grids, const std::vector<int>& coords,
                                      Eigen::VectorXd* weights = nullptr) {
  Eigen::Index total = 1;
  for (int c : coords) total *= grids[static_cast<std::size_t>(c)].size();
  Eigen::MatrixXd pts(static_cast<Eigen::Index>(coords.size()), total);
  if (weights) weights->setOnes(total);
  for (Eigen::Index m = 0; m < total; ++m) {
    Eigen::Index rem = m;
    for (std::size_t r = coords.size(); r-- > 0;) {
      const auto& g = grids[static_cast<std::size_t>(coords[r])];
      const Eigen::Index k = rem % g.size();
      rem /= g.size();
      pts(static_cast<Eigen::Index>(r), m) = g.nodes[k];
      if (weights) (*weights)[m] *= g.weights[k];
    }
  }
  return pts;
}

}  // namespace detail

/// One constraint per (term, coordinate of the term), multipliers at zero.
inline ConstraintSet make_constraints(const decomp::DecompositionModel& model, const ConstraintOptions& opt) {
  if (opt.grid_nodes < 2) throw ArgumentError("constraint grid needs at least 2 nodes");
  if (!(opt.epsilon > 0.0)) throw ArgumentError("constraint tolerance must be positive");
  if (!(opt.schedule.c0 > 0.0) || opt.schedule.c_max < opt.schedule.c0 || opt.schedule.growth < 1.0 ||
      opt.schedule.every < 1)
    throw ArgumentError("invalid penalty schedule");
  ConstraintSet cs;
  cs.method = opt.method;
  cs.schedule = opt.schedule;
  cs.penalty = opt.schedule.c0;
  cs.eta = opt.eta;
  cs.epsilon = opt.epsilon;
  for (const auto& c : model.inputs) cs.grids.push_back(QuadratureGrid::for_coordinate(c, opt.grid_nodes));
  const auto names = model.input_names();
  for (std::size_t t = 0; t < model.terms.size(); ++t) {
    const auto& idx = model.terms[t].index;
    for (int axis : idx.coords()) {
      Constraint con;
      con.term = idx;
      con.term_slot = t;
      con.axis = axis;
      for (int c : idx.coords())
        if (c != axis) con.conditioning.push_back(c);
      if (con.conditioning.empty()) {
        con.conditioning_points = Eigen::MatrixXd::Zero(0, 1);
        con.conditioning_weights = Eigen::VectorXd::Ones(1);
      } else {
        con.conditioning_points = detail::product_points(cs.grids, con.conditioning, &con.conditioning_weights);
      }
      con.label = idx.label(names) + "/d" + names[static_cast<std::size_t>(axis)];
      cs.multipliers.push_back(Eigen::MatrixXd::Zero(model.features(), con.grid_size()));
      cs.constraints.push_back(std::move(con));
    }
  }
  return cs;
}

enum class EstimatorKind { Quadrature, MonteCarlo };

struct Estimator {
  EstimatorKind kind = EstimatorKind::Quadrature;
  int samples = 0;          // Monte Carlo draws per conditioning point
  std::uint64_t seed = 0;

  static Estimator quadrature() { return {}; }
  static Estimator monte_carlo(int samples, std::uint64_t seed) {
    if (samples < 1) throw ArgumentError("Monte Carlo estimator needs at least one sample");
    return {EstimatorKind::MonteCarlo, samples, seed};
  }
};

/// Points at which one term network is evaluated and how each constraint of that
/// term sums them: g[:, cond[m]] += weight[m] * f(points[:, point[m]]).
struct Stencil {
  std::size_t constraint = 0;
  std::vector<Eigen::Index> point;
  std::vector<Eigen::Index> cond;
  std::vector<double> weight;
};

struct TermPlan {
  std::size_t term_slot = 0;
  Eigen::MatrixXd points;  // |I| x M
  std::vector<Stencil> stencils;
};

struct ConstraintEvaluation {
  std::vector<TermPlan> plans;
  std::vector<nn::ForwardCache> caches;
  std::vector<Eigen::MatrixXd> outputs;  // P x M per plan
  std::vector<ResidualField> residuals;  // per constraint
};

namespace detail {

inline std::vector<TermPlan> quadrature_plans(const decomp::DecompositionModel& model, const ConstraintSet& cs) {
  std::vector<TermPlan> plans;
  for (std::size_t t = 0; t < model.terms.size(); ++t) {
    std::vector<std::size_t> owned;
    for (std::size_t k = 0; k < cs.size(); ++k)
      if (cs.constraints[k].term_slot == t) owned.push_back(k);
    if (owned.empty()) continue;
    const auto& coords = model.terms[t].index.coords();
    TermPlan plan;
    plan.term_slot = t;
    plan.points = product_points(cs.grids, coords);
    const Eigen::Index m_total = plan.points.cols();
    std::vector<Eigen::Index> dims;
    for (int c : coords) dims.push_back(cs.grids[static_cast<std::size_t>(c)].size());
    for (std::size_t k : owned) {
      const auto& con = cs.constraints[k];
      const int pos = model.terms[t].index.position(con.axis);
      const auto& axis_grid = cs.grids[static_cast<std::size_t>(con.axis)];
      Stencil st;
      st.constraint = k;
      st.point.resize(static_cast<std::size_t>(m_total));
      st.cond.resize(static_cast<std::size_t>(m_total));
      st.weight.resize(static_cast<std::size_t>(m_total));
      for (Eigen::Index m = 0; m < m_total; ++m) {
        // Decompose m into per-axis indices (row-major), drop the integrated axis.
        Eigen::Index rem = m, cond = 0, stride = 1, axis_index = 0;
        for (std::size_t r = coords.size(); r-- > 0;) {
          const Eigen::Index i = rem % dims[r];
          rem /= dims[r];
          if (static_cast<int>(r) == pos) {
            axis_index = i;
          } else {
            cond += i * stride;
            stride *= dims[r];
          }
        }
        const auto mi = static_cast<std::size_t>(m);
        st.point[mi] = m;
        st.cond[mi] = cond;
        st.weight[mi] = axis_grid.weights[axis_index];
      }
      plan.stencils.push_back(std::move(st));
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

inline std::vector<TermPlan> monte_carlo_plans(const decomp::DecompositionModel& model, const ConstraintSet& cs,
                                               const Estimator& est) {
  Rng rng(est.seed);
  std::vector<TermPlan> plans;
  for (std::size_t t = 0; t < model.terms.size(); ++t) {
    std::vector<std::size_t> owned;
    for (std::size_t k = 0; k < cs.size(); ++k)
      if (cs.constraints[k].term_slot == t) owned.push_back(k);
    if (owned.empty()) continue;
    const auto& idx = model.terms[t].index;
    TermPlan plan;
    plan.term_slot = t;
    std::vector<Eigen::VectorXd> columns;
    for (std::size_t k : owned) {
      const auto& con = cs.constraints[k];
      const auto& coord = model.inputs[static_cast<std::size_t>(con.axis)];
      const bool binary = coord.kind == decomp::CoordinateKind::Binary;
      const int draws = binary ? 2 : est.samples;
      std::uniform_real_distribution<double> u(coord.lo, coord.hi);
      Stencil st;
      st.constraint = k;
      for (Eigen::Index kc = 0; kc < con.grid_size(); ++kc) {
        for (int s = 0; s < draws; ++s) {
          Eigen::VectorXd x(static_cast<Eigen::Index>(idx.order()));
          std::size_t r = 0;
          for (std::size_t q = 0; q < idx.order(); ++q) {
            const int c = idx.coords()[q];
            if (c == con.axis) {
              x[static_cast<Eigen::Index>(q)] = binary ? static_cast<double>(s) : u(rng);
            } else {
              x[static_cast<Eigen::Index>(q)] = con.conditioning_points(static_cast<Eigen::Index>(r++), kc);
            }
          }
          st.point.push_back(static_cast<Eigen::Index>(columns.size()));
          st.cond.push_back(kc);
          st.weight.push_back(binary ? 0.5 : (coord.hi - coord.lo) / draws);
          columns.push_back(std::move(x));
        }
      }
      plan.stencils.push_back(std::move(st));
    }
    plan.points.resize(static_cast<Eigen::Index>(idx.order()), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t m = 0; m < columns.size(); ++m) plan.points.col(static_cast<Eigen::Index>(m)) = columns[m];
    plans.push_back(std::move(plan));
  }
  return plans;
}

}  // namespace detail

/// Evaluates every term network at its constraint points and forms the residual fields.
inline ConstraintEvaluation evaluate_constraints(const decomp::DecompositionModel& model, const ConstraintSet& cs,
                                                 const Estimator& est = Estimator::quadrature()) {
  for (const auto& con : cs.constraints) {
    if (con.term_slot >= model.terms.size() || !(model.terms[con.term_slot].index == con.term))
      throw KeyError("constraint " + con.label + " refers to a term missing from the model");
  }
  ConstraintEvaluation ev;
  ev.plans = est.kind == EstimatorKind::Quadrature ? detail::quadrature_plans(model, cs)
                                                   : detail::monte_carlo_plans(model, cs, est);
  ev.caches.resize(ev.plans.size());
  ev.residuals.resize(cs.size());
  const auto p = model.features();
  for (std::size_t q = 0; q < ev.plans.size(); ++q) {
    const auto& plan = ev.plans[q];
    ev.outputs.push_back(model.terms[plan.term_slot].net.forward(plan.points, ev.caches[q]));
    const auto& f = ev.outputs.back();
    for (const auto& st : plan.stencils) {
      ResidualField g = ResidualField::Zero(p, cs.constraints[st.constraint].grid_size());
      for (std::size_t m = 0; m < st.point.size(); ++m) g.col(st.cond[m]) += st.weight[m] * f.col(st.point[m]);
      ev.residuals[st.constraint] = std::move(g);
    }
  }
  return ev;
}

inline std::vector<ResidualField> residuals(const decomp::DecompositionModel& model, const ConstraintSet& cs,
                                            const Estimator& est = Estimator::quadrature()) {
  return evaluate_constraints(model, cs, est).residuals;
}

inline void check_residual_shapes(const std::vector<ResidualField>& g, const ConstraintSet& cs) {
  if (g.size() != cs.size()) throw ShapeError("residual count differs from constraint count");
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g[k].rows() != cs.multipliers[k].rows() || g[k].cols() != cs.multipliers[k].cols())
      throw ShapeError("residual field shape mismatch for " + cs.constraints[k].label);
}

/// sum_k <lambda_k, g_k> + c <g_k, g_k>, inner products weighted by the
/// conditioning-grid quadrature weights and summed over features. The
/// multiplier part is dropped for the penalty method, the quadratic part for BDMM.
inline double augmentation_value(const std::vector<ResidualField>& g, const ConstraintSet& cs) {
  check_residual_shapes(g, cs);
  const bool use_lambda = cs.method != Method::Penalty;
  const bool use_quad = cs.method != Method::BDMM;
  double total = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!g[k].allFinite()) throw NumericError("non-finite residual in constraint " + cs.constraints[k].label);
    const auto& w = cs.constraints[k].conditioning_weights;
    if (use_lambda) total += ((cs.multipliers[k].array() * g[k].array()).colwise().sum().matrix() * w)(0);
    if (use_quad) total += cs.penalty * (g[k].array().square().colwise().sum().matrix() * w)(0);
  }
  return total;
}

struct Augmentation {
  double value = 0.0;
  std::vector<nn::GradientTape> term_grads;  // model term order; zero tapes for unconstrained terms
};

/// Augmentation value and its exact gradient with respect to every term network.
inline Augmentation penalty_terms(const decomp::DecompositionModel& model, const ConstraintSet& cs,
                                  const ConstraintEvaluation& ev) {
  Augmentation aug;
  aug.value = augmentation_value(ev.residuals, cs);
  for (const auto& t : model.terms) aug.term_grads.push_back(t.net.zero_tape());
  const bool use_lambda = cs.method != Method::Penalty;
  const bool use_quad = cs.method != Method::BDMM;
  for (std::size_t q = 0; q < ev.plans.size(); ++q) {
    const auto& plan = ev.plans[q];
    Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(ev.outputs[q].rows(), ev.outputs[q].cols());
    for (const auto& st : plan.stencils) {
      const auto& con = cs.constraints[st.constraint];
      const auto& g = ev.residuals[st.constraint];
      Eigen::MatrixXd d_g = Eigen::MatrixXd::Zero(g.rows(), g.cols());
      if (use_lambda) d_g += cs.multipliers[st.constraint];
      if (use_quad) d_g += 2.0 * cs.penalty * g;
      d_g.array().rowwise() *= con.conditioning_weights.transpose().array();
      for (std::size_t m = 0; m < st.point.size(); ++m) upstream.col(st.point[m]) += st.weight[m] * d_g.col(st.cond[m]);
    }
    auto tape = model.terms[plan.term_slot].net.backward(ev.caches[q], upstream);
    aug.term_grads[plan.term_slot].accumulate(tape);
  }
  return aug;
}

/// lambda <- lambda + eta * g (ascent), then advance the penalty schedule.
inline void multiplier_update(ConstraintSet& cs, const std::vector<ResidualField>& g) {
  if (cs.method == Method::Penalty) throw StateError("multiplier_update is undefined for the penalty method");
  check_residual_shapes(g, cs);
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!g[k].allFinite()) throw NumericError("non-finite residual in constraint " + cs.constraints[k].label);
    cs.multipliers[k] += cs.eta * g[k];
  }
  ++cs.updates;
  if (cs.method == Method::MDMM && cs.updates % static_cast<std::uint64_t>(cs.schedule.every) == 0)
    cs.penalty = std::min(cs.schedule.c_max, cs.penalty * cs.schedule.growth);
}

/// One residual value with its multiplier, as streamed to trace files.
struct TraceRow {
  int iteration = 0;
  std::size_t constraint = 0;
  Eigen::Index grid_index = 0;
  Eigen::Index feature = 0;
  double g = 0.0;
  double lambda = 0.0;
  double c = 0.0;
};

inline void append_trace(std::vector<TraceRow>& rows, int iteration, const ConstraintSet& cs,
                         const std::vector<ResidualField>& g) {
  check_residual_shapes(g, cs);
  for (std::size_t k = 0; k < g.size(); ++k)
    for (Eigen::Index col = 0; col < g[k].cols(); ++col)
      for (Eigen::Index p = 0; p < g[k].rows(); ++p)
        rows.push_back({iteration, k, col, p, g[k](p, col), cs.multipliers[k](p, col), cs.penalty});
}

struct ToleranceReport {
  bool passed = true;
  double epsilon = 0.0;
  double max_abs = 0.0;
  std::vector<double> per_constraint;  // max |g| per constraint
  std::vector<std::size_t> violators;
};

inline double max_abs_residual(const std::vector<ResidualField>& g) {
  double m = 0.0;
  for (const auto& r : g)
    if (r.size()) m = std::max(m, r.cwiseAbs().maxCoeff());
  return m;
}

inline ToleranceReport check_tolerance(const std::vector<ResidualField>& g, double epsilon) {
  if (!(epsilon > 0.0)) throw ArgumentError("check_tolerance: epsilon must be positive");
  ToleranceReport rep;
  rep.epsilon = epsilon;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double m = g[k].size() ? g[k].cwiseAbs().maxCoeff() : 0.0;
    rep.per_constraint.push_back(m);
    rep.max_abs = std::max(rep.max_abs, m);
    if (!(m <= epsilon)) rep.violators.push_back(k);
  }
  rep.passed = rep.violators.empty();
  return rep;
}

}  // namespace nd::constraints
