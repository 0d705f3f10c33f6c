#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "nd/decomp/decode.hpp"
#include "nd/decomp/identifiability.hpp"
#include "nd/decomp/report_io.hpp"
#include "nd/decomp/variance.hpp"

using namespace nd;
using namespace nd::decomp;
using Catch::Approx;

namespace {

nn::DenseNet affine(Eigen::MatrixXd w, Eigen::VectorXd b) {
  nn::DenseLayer l;
  l.weight = std::move(w);
  l.bias = std::move(b);
  return nn::DenseNet({l});
}

DecompositionModel two_input_model(Rng& rng, Eigen::Index p = 3) {
  std::vector<InputCoordinate> in{{"z", CoordinateKind::Latent, -3, 3}, {"c", CoordinateKind::Continuous, -2, 2}};
  auto m = make_model(in, p, enumerate_terms(2, 2), {}, rng);
  m.intercept = Eigen::VectorXd::LinSpaced(p, 0.5, 1.5);
  return m;
}

}  // namespace

TEST_CASE("term enumeration", "[decomposer]") {
  const auto t = enumerate_terms(2, 2);
  REQUIRE(t.size() == 3);
  CHECK(t[0].coords() == std::vector<int>{0});
  CHECK(t[1].coords() == std::vector<int>{1});
  CHECK(t[2].coords() == std::vector<int>{0, 1});

  const auto f = enumerate_terms(5, 2, interactions_with(0));
  REQUIRE(f.size() == 9);
  for (int k = 0; k < 5; ++k) CHECK(f[static_cast<std::size_t>(k)].coords() == std::vector<int>{k});
  for (int k = 1; k < 5; ++k) CHECK(f[static_cast<std::size_t>(4 + k)].coords() == std::vector<int>{0, k});

  CHECK(enumerate_terms(3, 3).size() == 7);
  CHECK_THROWS_AS(enumerate_terms(3, 4), ArgumentError);
  CHECK_THROWS_AS(enumerate_terms(3, 0), ArgumentError);
}

TEST_CASE("term index invariants", "[decomposer]") {
  CHECK_THROWS_AS(TermIndex({}, 2), ArgumentError);
  CHECK_THROWS_AS(TermIndex({1, 0}, 2), ArgumentError);
  CHECK_THROWS_AS(TermIndex({0, 2}, 2), ArgumentError);
  CHECK(TermIndex({0, 1}, 2).label({"z", "c"}) == "z:c");
}

TEST_CASE("all masks zero decode to the intercept", "[decomposer]") {
  Rng rng(1);
  const auto m = two_input_model(rng);
  TermMasks masks;
  for (const auto& t : m.terms) masks[t.index] = Eigen::VectorXd::Zero(m.features());
  const auto y = decode(m, uniform(2, 6, -2, 2, rng), masks);
  for (Eigen::Index i = 0; i < y.cols(); ++i) CHECK(y.col(i) == m.intercept);
}

TEST_CASE("single linear term arithmetic", "[decomposer]") {
  DecompositionModel m;
  m.inputs = {{"z", CoordinateKind::Latent, -3, 3}};
  m.intercept = Eigen::VectorXd::Ones(1);
  m.log_noise = Eigen::VectorXd::Zero(1);
  m.terms.push_back({TermIndex({0}, 1), affine(Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::VectorXd::Zero(1))});
  TermMasks masks{{TermIndex({0}, 1), Eigen::VectorXd::Ones(1)}};
  CHECK(decode(m, Eigen::MatrixXd::Constant(1, 1, 3.0), masks)(0, 0) == 7.0);
}

TEST_CASE("unknown term in masks is a key error", "[decomposer]") {
  Rng rng(1);
  auto m = two_input_model(rng);
  m.terms.pop_back();
  TermMasks masks{{TermIndex({0, 1}, 2), Eigen::VectorXd::Ones(m.features())}};
  CHECK_THROWS_AS(decode(m, Eigen::MatrixXd::Zero(2, 1), masks), KeyError);
}

TEST_CASE("decoding is exactly additive over terms", "[decomposer]") {
  Rng rng(7);
  const auto m = two_input_model(rng, 4);
  const auto x = uniform(2, 50, -2, 2, rng);
  Eigen::MatrixXd sum = m.intercept.replicate(1, x.cols());
  for (const auto& t : m.terms) sum += decode(single_term_model(m, t.index), x) - m.intercept.replicate(1, x.cols());
  const auto full = decode(m, x);
  CHECK((full - sum).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, full.cwiseAbs().maxCoeff()));

  // two-term identity: decode(A + B) = decode(A) + decode(B) - f0
  auto ab = m;
  ab.terms.pop_back();
  const Eigen::MatrixXd f0 = m.intercept.replicate(1, x.cols());
  const auto lhs = decode(ab, x);
  const Eigen::MatrixXd rhs = decode(single_term_model(m, m.terms[0].index), x) + decode(single_term_model(m, m.terms[1].index), x) - f0;
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("lifting a main effect into an interaction reproduces it exactly", "[decomposer]") {
  Rng rng(21);
  const auto m = two_input_model(rng, 5);
  const TermIndex z({0}, 2), zc({0, 1}, 2);
  const auto lifted = lift_term(m.terms[m.index_of(z)].net, z, zc);
  const auto x = uniform(2, 100, -3, 3, rng);
  const auto a = m.terms[m.index_of(z)].net.predict(x.topRows(1));
  const auto b = lifted.predict(x);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);

  // The model with f_z moved into f_zc decodes identically: two parameterisations, one function.
  auto moved = m;
  moved.terms[moved.index_of(zc)].net = lifted;
  moved.terms.erase(moved.terms.begin() + static_cast<std::ptrdiff_t>(moved.index_of(z)));
  auto original = m;
  original.terms.erase(original.terms.begin() + static_cast<std::ptrdiff_t>(original.index_of(zc)));
  CHECK((decode(moved, x) - decode(original, x)).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(lift_term(lifted, zc, z), ArgumentError);
}

TEST_CASE("variance fractions of a pure main effect", "[decomposer]") {
  Rng rng(3);
  DecompositionModel m;
  m.inputs = {{"z", CoordinateKind::Latent, -3, 3}, {"c", CoordinateKind::Continuous, -2, 2}};
  m.intercept = Eigen::VectorXd::Zero(1);
  m.log_noise = Eigen::VectorXd::Constant(1, -40.0);
  // only f_z is nonzero
  m.terms.push_back({TermIndex({0}, 2), nn::DenseNet::mlp(1, {8}, 1, nn::Activation::Tanh, rng)});
  m.terms.push_back({TermIndex({1}, 2), affine(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1))});
  const auto r = term_variances(m, uniform(2, 1000, -2, 2, rng));
  CHECK(r.features[0].fractions[0] == Approx(1.0).margin(1e-12));
  CHECK(r.features[0].fractions[1] == 0.0);
}

TEST_CASE("uniform main effects split variance evenly", "[decomposer]") {
  Rng rng(5);
  DecompositionModel m;
  m.inputs = {{"z", CoordinateKind::Latent, -2, 2}, {"c", CoordinateKind::Continuous, -2, 2}};
  m.intercept = Eigen::VectorXd::Zero(1);
  m.log_noise = Eigen::VectorXd::Constant(1, -40.0);
  m.terms.push_back({TermIndex({0}, 2), affine(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1))});
  m.terms.push_back({TermIndex({1}, 2), affine(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1))});
  const auto r = term_variances(m, uniform(2, 100000, -2, 2, rng));
  CHECK(r.features[0].term_variance[0] == Approx(4.0 / 3.0).epsilon(0.02));
  CHECK(r.features[0].term_variance[1] == Approx(4.0 / 3.0).epsilon(0.02));
  CHECK(r.features[0].fractions[0] == Approx(0.5).margin(0.02));
  CHECK(r.features[0].fractions[1] == Approx(0.5).margin(0.02));
}

TEST_CASE("variance report invariants", "[decomposer]") {
  Rng rng(8);
  const auto m = two_input_model(rng, 4);
  const auto r = term_variances(m, uniform(2, 500, -2, 2, rng));
  for (const auto& f : r.features) {
    double s = f.noise_fraction;
    for (double v : f.term_variance) CHECK(v >= 0.0);
    for (double v : f.fractions) s += v;
    CHECK(std::abs(s - 1.0) <= f.residual_fraction + 1e-12);
  }
  CHECK_THROWS_AS(term_variances(m, Eigen::MatrixXd::Zero(2, 1)), ArgumentError);
}

TEST_CASE("uniform grid reference covers every coordinate", "[decomposer]") {
  Rng rng(8);
  const auto m = two_input_model(rng, 2);
  const auto ref = uniform_grid_reference(m, 5);
  CHECK(ref.rows() == 2);
  CHECK(ref.cols() == 25);
  CHECK(ref.row(0).minCoeff() == -3.0);
  CHECK(ref.row(1).maxCoeff() == 2.0);
}

TEST_CASE("variance report round-trips through JSON and writes CSV", "[decomposer]") {
  Rng rng(9);
  const auto m = two_input_model(rng, 2);
  const auto r = term_variances(m, uniform(2, 50, -2, 2, rng));
  const auto back = report_from_json(report_to_json(r));
  CHECK(back.term_labels == r.term_labels);
  CHECK(back.features[1].fractions == r.features[1].fractions);
  std::ostringstream os;
  write_report_csv(os, r);
  CHECK(os.str().rfind("feature,z,c,z:c,noise,residual\ny1,", 0) == 0);
  CHECK(os.str().find('\r') == std::string::npos);
}
