#include <catch_amalgamated.hpp>

#include <cmath>

#include "nd/constraints/constraint_set.hpp"
#include "nd/constraints/orthogonality.hpp"
#include "nd/constraints/quadrature.hpp"
#include "nd/nn/grad_check.hpp"

using namespace nd;
using namespace nd::constraints;
using Catch::Approx;

namespace {

nn::DenseNet affine(Eigen::MatrixXd w, Eigen::VectorXd b) {
  nn::DenseLayer l;
  l.weight = std::move(w);
  l.bias = std::move(b);
  return nn::DenseNet({l});
}

// z, c both on [-2, 2]
decomp::DecompositionModel model_with(std::vector<decomp::Term> terms, Eigen::Index p = 1) {
  decomp::DecompositionModel m;
  m.inputs = {{"z", decomp::CoordinateKind::Latent, -2, 2}, {"c", decomp::CoordinateKind::Continuous, -2, 2}};
  m.intercept = Eigen::VectorXd::Zero(p);
  m.log_noise = Eigen::VectorXd::Zero(p);
  m.terms = std::move(terms);
  m.validate();
  return m;
}

ConstraintOptions options(Method method, int g = 9) {
  ConstraintOptions o;
  o.method = method;
  o.grid_nodes = g;
  return o;
}

// Scalar problem with one constraint and one conditioning node.
ConstraintSet scalar_set(Method method, double lambda, double c) {
  const auto m = model_with({{decomp::TermIndex({0}, 2), affine(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1))}});
  auto cs = make_constraints(m, options(method));
  cs.multipliers[0](0, 0) = lambda;
  cs.penalty = c;
  return cs;
}

}  // namespace

TEST_CASE("trapezoid rule examples", "[constraint_engine]") {
  const auto g5 = QuadratureGrid::trapezoid(-2, 2, 5);
  CHECK(trapezoid_integral(Eigen::VectorXd(Eigen::VectorXd::Ones(5)), g5) == Approx(4.0).margin(1e-12));
  for (int n : {2, 3, 8, 33}) {
    const auto g = QuadratureGrid::trapezoid(-2, 2, n);
    CHECK(std::abs(trapezoid_integral(Eigen::VectorXd(Eigen::VectorXd::Ones(n)), g) - 4.0) < 1e-12);
    CHECK(std::abs(trapezoid_integral(g.nodes, g)) < 1e-12);
  }
  const Eigen::VectorXd sq = g5.nodes.array().square();
  CHECK(std::abs(trapezoid_integral(sq, g5) - 6.0) < 1e-12);
  CHECK_THROWS_AS(trapezoid_integral(Eigen::VectorXd(Eigen::VectorXd::Ones(4)), g5), ShapeError);
}

TEST_CASE("trapezoid is exact for affine integrands", "[constraint_engine]") {
  Rng rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int k = 0; k < 20; ++k) {
    double lo = u(rng), hi = u(rng);
    if (lo > hi) std::swap(lo, hi);
    const double a = u(rng), b = u(rng);
    const auto g = QuadratureGrid::trapezoid(lo, hi, 2 + k);
    const Eigen::VectorXd f = (a * g.nodes.array() + b).matrix();
    const double exact = 0.5 * a * (hi * hi - lo * lo) + b * (hi - lo);
    CHECK(std::abs(trapezoid_integral(f, g) - exact) < 1e-12 * std::max(1.0, std::abs(exact)));
  }
}

TEST_CASE("grid invariants", "[constraint_engine]") {
  const auto g = QuadratureGrid::trapezoid(-3, 3, 32);
  CHECK(g.weights.sum() == Approx(6.0).margin(1e-12));
  for (Eigen::Index k = 1; k < g.size(); ++k) CHECK(g.nodes[k] > g.nodes[k - 1]);
  CHECK(QuadratureGrid::binary().weights.sum() == 1.0);
  CHECK_THROWS_AS(QuadratureGrid::trapezoid(-1, 1, 1), ArgumentError);
}

TEST_CASE("residuals of closed-form terms", "[constraint_engine]") {
  // f_z(z) = z + 1: integral over [-2, 2] is 4
  auto m = model_with({{decomp::TermIndex({0}, 2), affine(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Ones(1))}});
  auto cs = make_constraints(m, options(Method::MDMM));
  auto g = residuals(m, cs);
  REQUIRE(g.size() == 1);
  CHECK(g[0](0, 0) == Approx(4.0).margin(1e-12));
  const auto rep = check_tolerance(g, 1e-2);
  CHECK_FALSE(rep.passed);
  CHECK(rep.max_abs == Approx(4.0).margin(1e-12));
  CHECK(rep.violators == std::vector<std::size_t>{0});
  CHECK_THROWS_AS(check_tolerance(g, 0.0), ArgumentError);

  // zero weights: every residual vanishes, tolerance passes
  Rng rng(1);
  auto zero = model_with({{decomp::TermIndex({0, 1}, 2), nn::DenseNet::mlp(2, {8}, 3, nn::Activation::Tanh, rng)}}, 3);
  for (auto& l : zero.terms[0].net.mutable_layers()) l.weight.setZero(), l.bias.setZero();
  const auto gz = residuals(zero, make_constraints(zero, options(Method::MDMM)));
  CHECK(max_abs_residual(gz) == 0.0);
  CHECK(check_tolerance(gz, 1e-9).passed);
}

TEST_CASE("odd interaction integrates to zero along z at every c node", "[constraint_engine]") {
  // hidden units read only z through tanh, so the term is odd in z
  nn::DenseLayer h;
  h.weight = (Eigen::MatrixXd(2, 2) << 1, 0, 1, 0).finished();
  h.bias = Eigen::VectorXd::Zero(2);
  h.activation = nn::Activation::Tanh;
  nn::DenseLayer o;
  o.weight = (Eigen::MatrixXd(1, 2) << 0.7, -1.3).finished();
  o.bias = Eigen::VectorXd::Zero(1);
  auto m = model_with({{decomp::TermIndex({0, 1}, 2), nn::DenseNet({h, o})}});
  auto cs = make_constraints(m, options(Method::MDMM, 16));
  const auto g = residuals(m, cs);
  REQUIRE(g.size() == 2);
  CHECK(cs.constraints[0].label == "z:c/dz");
  CHECK(g[0].cols() == 16);
  CHECK(g[0].cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("missing term is a key error", "[constraint_engine]") {
  auto m = model_with({{decomp::TermIndex({0}, 2), affine(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Ones(1))},
                       {decomp::TermIndex({1}, 2), affine(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Ones(1))}});
  const auto cs = make_constraints(m, options(Method::MDMM));
  m.terms.pop_back();
  CHECK_THROWS_AS(residuals(m, cs), KeyError);
}

TEST_CASE("augmentation arithmetic", "[constraint_engine]") {
  const std::vector<ResidualField> g{Eigen::MatrixXd::Constant(1, 1, 2.0)};
  CHECK(augmentation_value(g, scalar_set(Method::MDMM, 1.0, 0.5)) == Approx(4.0).margin(1e-12));
  CHECK(augmentation_value(g, scalar_set(Method::BDMM, 1.0, 0.5)) == Approx(2.0).margin(1e-12));
  CHECK(augmentation_value(g, scalar_set(Method::Penalty, 1.0, 0.5)) == Approx(2.0).margin(1e-12));
  const std::vector<ResidualField> zero{Eigen::MatrixXd::Zero(1, 1)};
  CHECK(augmentation_value(zero, scalar_set(Method::MDMM, 3.0, 7.0)) == 0.0);
  const std::vector<ResidualField> bad{Eigen::MatrixXd::Constant(1, 1, std::nan(""))};
  CHECK_THROWS_AS(augmentation_value(bad, scalar_set(Method::MDMM, 1.0, 1.0)), NumericError);
}

TEST_CASE("augmentation gradient matches finite differences", "[constraint_engine]") {
  Rng rng(17);
  std::vector<decomp::Term> terms;
  for (const auto& t : decomp::enumerate_terms(2, 2))
    terms.push_back({t, nn::DenseNet::mlp(static_cast<Eigen::Index>(t.order()), {6}, 2, nn::Activation::Softplus, rng)});
  auto m = model_with(std::move(terms), 2);
  for (auto method : {Method::Penalty, Method::BDMM, Method::MDMM}) {
    auto cs = make_constraints(m, options(method, 5));
    for (auto& l : cs.multipliers) l = uniform(l.rows(), l.cols(), -1, 1, rng);
    cs.penalty = 0.7;
    const auto ev = evaluate_constraints(m, cs);
    const auto aug = penalty_terms(m, cs, ev);
    for (std::size_t t = 0; t < m.terms.size(); ++t) {
      auto probe = m;
      auto& w = probe.terms[t].net.mutable_layers()[0].weight;
      Eigen::VectorXd numeric(w.size()), analytic(w.size());
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double saved = w.data()[i];
        w.data()[i] = saved + 1e-6;
        const double up = augmentation_value(residuals(probe, cs), cs);
        w.data()[i] = saved - 1e-6;
        const double down = augmentation_value(residuals(probe, cs), cs);
        w.data()[i] = saved;
        numeric[i] = (up - down) / 2e-6;
        analytic[i] = aug.term_grads[t].layers[0].weight.data()[i];
      }
      INFO("method " << to_string(method) << " term " << t);
      CHECK(nn::relative_error(analytic, numeric) < 1e-4);
    }
  }
}

TEST_CASE("multiplier update", "[constraint_engine]") {
  auto cs = scalar_set(Method::BDMM, 0.5, 1.0);
  cs.eta = 0.1;
  multiplier_update(cs, {Eigen::MatrixXd::Constant(1, 1, 2.0)});
  CHECK(std::abs(cs.multipliers[0](0, 0) - 0.7) < 1e-12);

  multiplier_update(cs, {Eigen::MatrixXd::Zero(1, 1)});
  CHECK(std::abs(cs.multipliers[0](0, 0) - 0.7) < 1e-12);

  double prev = cs.multipliers[0](0, 0);
  for (int k = 0; k < 10; ++k) {
    multiplier_update(cs, {Eigen::MatrixXd::Constant(1, 1, 0.3)});
    CHECK(cs.multipliers[0](0, 0) > prev);
    prev = cs.multipliers[0](0, 0);
  }

  auto pen = scalar_set(Method::Penalty, 0.0, 1.0);
  CHECK_THROWS_AS(multiplier_update(pen, {Eigen::MatrixXd::Zero(1, 1)}), StateError);
}

TEST_CASE("penalty schedule grows and caps", "[constraint_engine]") {
  auto cs = scalar_set(Method::MDMM, 0.0, 1.0);
  cs.schedule = {1.0, 2.0, 3, 10.0};
  for (int k = 0; k < 3; ++k) multiplier_update(cs, {Eigen::MatrixXd::Zero(1, 1)});
  CHECK(cs.penalty == 2.0);
  for (int k = 0; k < 30; ++k) multiplier_update(cs, {Eigen::MatrixXd::Zero(1, 1)});
  CHECK(cs.penalty == 10.0);
}

TEST_CASE("Monte Carlo residual agrees with quadrature", "[constraint_engine]") {
  Rng rng(23);
  auto m = model_with({{decomp::TermIndex({0, 1}, 2), nn::DenseNet::mlp(2, {8}, 1, nn::Activation::Softplus, rng)}});
  auto opt = options(Method::MDMM, 4);
  const auto cs = make_constraints(m, opt);
  const int samples = 100000;
  const auto gm = residuals(m, cs, Estimator::monte_carlo(samples, 5));

  // standard error from the spread of f along the integrated axis; reference from a fine trapezoid
  for (std::size_t k = 0; k < cs.size(); ++k) {
    const auto& con = cs.constraints[k];
    for (Eigen::Index kc = 0; kc < con.grid_size(); ++kc) {
      Eigen::MatrixXd x(2, 2001);
      const Eigen::RowVectorXd line = Eigen::RowVectorXd::LinSpaced(2001, -2, 2);
      x.row(con.axis) = line;
      x.row(1 - con.axis).setConstant(con.conditioning_points(0, kc));
      const Eigen::RowVectorXd f = m.terms[0].net.predict(x);
      const double sd = std::sqrt((f.array() - f.mean()).square().mean());
      const double se = 4.0 * sd / std::sqrt(static_cast<double>(samples));
      const double ref = trapezoid_integral(f.transpose().eval(), QuadratureGrid::trapezoid(-2, 2, 2001));
      CHECK(std::abs(gm[k](0, kc) - ref) < 3.0 * se + 1e-6);
    }
  }
  // Same seed, same draws.
  CHECK(residuals(m, cs, Estimator::monte_carlo(100, 9))[0] == residuals(m, cs, Estimator::monte_carlo(100, 9))[0]);
  CHECK_THROWS_AS(Estimator::monte_carlo(0, 1), ArgumentError);
}

TEST_CASE("binary coordinates are constrained per level", "[constraint_engine]") {
  decomp::DecompositionModel m;
  m.inputs = {{"z", decomp::CoordinateKind::Latent, -2, 2}, {"b", decomp::CoordinateKind::Binary, 0, 1}};
  m.intercept = Eigen::VectorXd::Zero(1);
  m.log_noise = Eigen::VectorXd::Zero(1);
  // f_b(b) = b - 0.5 averages to zero over the two levels
  m.terms.push_back({decomp::TermIndex({1}, 2), affine(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Constant(1, -0.5))});
  const auto g = residuals(m, make_constraints(m, options(Method::MDMM)));
  CHECK(std::abs(g[0](0, 0)) < 1e-15);
}

TEST_CASE("disjoint inner products vanish for centred main effects", "[constraint_engine]") {
  // f_z = z, f_c = c: both integrate to zero, inner product over the product grid is 0
  auto m = model_with({{decomp::TermIndex({0}, 2), affine(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1))},
                       {decomp::TermIndex({1}, 2), affine(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1))}});
  const auto ip = disjoint_inner_products(m, 9);
  REQUIRE(ip.size() == 1);
  CHECK(ip[0].first == "z");
  CHECK(ip[0].second == "c");
  CHECK(std::abs(ip[0].value[0]) < 1e-14);

  // adding constants breaks both constraints and the inner product becomes 1 * 1
  m.terms[0].net.mutable_layers()[0].bias[0] = 1.0;
  m.terms[1].net.mutable_layers()[0].bias[0] = 1.0;
  CHECK(disjoint_inner_products(m, 9)[0].value[0] == Approx(1.0).margin(1e-12));
}

TEST_CASE("trace rows carry multipliers and penalty", "[constraint_engine]") {
  auto cs = scalar_set(Method::MDMM, 0.25, 3.0);
  std::vector<TraceRow> rows;
  append_trace(rows, 7, cs, {Eigen::MatrixXd::Constant(1, 1, -0.5)});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].iteration == 7);
  CHECK(rows[0].g == -0.5);
  CHECK(rows[0].lambda == 0.25);
  CHECK(rows[0].c == 3.0);
}
