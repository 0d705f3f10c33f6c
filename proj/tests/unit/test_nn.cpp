#include <catch_amalgamated.hpp>

#include <cmath>

#include "nd/nn/adam.hpp"
#include "nd/nn/dense_net.hpp"
#include "nd/nn/grad_check.hpp"

using namespace nd;
using namespace nd::nn;
using Catch::Approx;

namespace {

DenseNet scalar_net(double w, double b, Activation act = Activation::Identity) {
  DenseLayer l;
  l.weight = Eigen::MatrixXd::Constant(1, 1, w);
  l.bias = Eigen::VectorXd::Constant(1, b);
  l.activation = act;
  return DenseNet({l});
}

// Loss = sum of outputs squared / 2, so d loss / d out = out.
std::pair<double, Eigen::MatrixXd> half_square(const Eigen::MatrixXd& out) {
  return {0.5 * out.squaredNorm(), out};
}

}  // namespace

TEST_CASE("forward of an identity layer", "[nn_core]") {
  auto net = scalar_net(1.0, 0.0);
  const auto y = net.predict(Eigen::MatrixXd::Constant(1, 1, 2.0));
  CHECK(y(0, 0) == 2.0);
}

TEST_CASE("non-identity final layer is a configuration error", "[nn_core]") {
  CHECK_THROWS_AS(scalar_net(1.0, 0.0, Activation::ReLU), ConfigError);
}

TEST_CASE("zero weights give zero output", "[nn_core]") {
  Rng rng(3);
  auto net = DenseNet::mlp(1, {64}, 1, Activation::Softplus, rng);
  for (auto& l : net.mutable_layers()) {
    l.weight.setZero();
    l.bias.setZero();
  }
  const auto y = net.predict(Eigen::RowVectorXd::LinSpaced(7, -3, 3));
  CHECK(y.isZero(0.0));
}

TEST_CASE("forward rejects wrong input width", "[nn_core]") {
  Rng rng(1);
  auto net = DenseNet::mlp(2, {4}, 1, Activation::Tanh, rng);
  CHECK_THROWS_AS(net.predict(Eigen::MatrixXd::Zero(3, 5)), ShapeError);
}

TEST_CASE("backward of a linear unit", "[nn_core]") {
  auto net = scalar_net(0.7, -0.2);
  ForwardCache cache;
  net.forward(Eigen::MatrixXd::Constant(1, 1, 3.0), cache);
  const auto tape = net.backward(cache, Eigen::MatrixXd::Ones(1, 1));
  CHECK(tape.layers[0].weight(0, 0) == 3.0);
  CHECK(tape.layers[0].bias[0] == 1.0);
  CHECK(tape.input_grad(0, 0) == Approx(0.7));
}

TEST_CASE("zero upstream gives a zero tape", "[nn_core]") {
  Rng rng(5);
  auto net = DenseNet::mlp(3, {8, 8}, 2, Activation::Softplus, rng);
  ForwardCache cache;
  net.forward(Eigen::MatrixXd::Random(3, 4), cache);
  CHECK(net.backward(cache, Eigen::MatrixXd::Zero(2, 4)).is_zero());
}

TEST_CASE("backward on a stale cache is a state error", "[nn_core]") {
  Rng rng(5);
  auto net = DenseNet::mlp(1, {4}, 1, Activation::Tanh, rng);
  ForwardCache cache;
  net.forward(Eigen::MatrixXd::Ones(1, 2), cache);
  net.mutable_layers()[0].bias[0] += 1.0;
  CHECK_THROWS_AS(net.backward(cache, Eigen::MatrixXd::Ones(1, 2)), StateError);
  CHECK_THROWS_AS(net.backward(ForwardCache{}, Eigen::MatrixXd::Ones(1, 2)), StateError);
}

TEST_CASE("tanh network matches finite differences", "[nn_core]") {
  Rng rng(11);
  auto net = DenseNet::mlp(1, {8}, 1, Activation::Tanh, rng);
  const auto x = uniform(1, 10, -2, 2, rng);
  const auto rep = finite_diff_check(net, half_square, x, 1e-5, 1e-4);
  CHECK(rep.passed);
  CHECK(rep.max_relative_error < 1e-4);
}

TEST_CASE("gradients for every activation and depths 1 to 3", "[nn_core]") {
  for (auto act : {Activation::Identity, Activation::ReLU, Activation::Softplus, Activation::Tanh}) {
    for (int depth = 1; depth <= 3; ++depth) {
      Rng rng(100 + static_cast<int>(act) * 10 + depth);
      std::vector<Eigen::Index> hidden(static_cast<std::size_t>(depth - 1), 6);
      auto net = DenseNet::mlp(2, hidden, 2, act, rng);
      auto x = uniform(2, 8, -2, 2, rng);
      if (act == Activation::ReLU) {
        // keep points whose pre-activations stay away from the kink
        ForwardCache c;
        net.forward(x, c);
        std::vector<Eigen::Index> keep;
        for (Eigen::Index i = 0; i < x.cols(); ++i) {
          bool ok = true;
          for (std::size_t k = 0; k + 1 < c.pre.size(); ++k) ok = ok && (c.pre[k].col(i).cwiseAbs().minCoeff() > 1e-3);
          if (ok) keep.push_back(i);
        }
        x = Eigen::MatrixXd(x(Eigen::all, keep));
      }
      INFO("activation " << to_string(act) << " depth " << depth);
      CHECK(finite_diff_check(net, half_square, x, 1e-5, 1e-4).passed);
    }
  }
}

TEST_CASE("finite_diff_check on a linear net with quadratic loss", "[nn_core]") {
  Rng rng(2);
  auto net = DenseNet::mlp(3, {}, 2, Activation::Identity, rng);
  const auto rep = finite_diff_check(net, half_square, Eigen::MatrixXd::Random(3, 5), 1e-4, 1e-8);
  CHECK(rep.max_relative_error < 1e-8);
}

TEST_CASE("finite_diff_check on a softplus net", "[nn_core]") {
  Rng rng(4);
  auto net = DenseNet::mlp(2, {16}, 3, Activation::Softplus, rng);
  CHECK(finite_diff_check(net, half_square, uniform(2, 6, -1, 1, rng), 1e-5, 1e-4).max_relative_error < 1e-4);
}

TEST_CASE("finite_diff_check rejects a zero step", "[nn_core]") {
  auto net = scalar_net(1.0, 0.0);
  CHECK_THROWS_AS(finite_diff_check(net, half_square, Eigen::MatrixXd::Ones(1, 1), 0.0, 1e-4), ArgumentError);
}

TEST_CASE("adam with zero gradient leaves parameters unchanged", "[nn_core]") {
  Eigen::VectorXd p = Eigen::VectorXd::LinSpaced(4, -1, 1), g = Eigen::VectorXd::Zero(4);
  const Eigen::VectorXd before = p;
  AdamState st;
  adam_step({{"p", as_span(p), as_span(g)}}, st);
  CHECK(p == before);
  CHECK(st.step == 1);
}

TEST_CASE("first adam step has magnitude lr", "[nn_core]") {
  for (double gv : {-3.0, 1e-3, 0.5, 40.0}) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(1), g = Eigen::VectorXd::Constant(1, gv);
    AdamState st(AdamConfig{0.01, 0.9, 0.999, 1e-8});
    adam_step({{"p", as_span(p), as_span(g)}}, st);
    const double expected = -0.01 * gv / (std::abs(gv) + 1e-8);
    CHECK(std::abs(p[0] / expected - 1.0) < 1e-6);
  }
}

TEST_CASE("adam decreases a parameter under repeated positive gradients", "[nn_core]") {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(1), g = Eigen::VectorXd::Ones(1);
  AdamState st(AdamConfig{0.1, 0.9, 0.999, 1e-8});
  double prev = p[0];
  for (int k = 0; k < 2; ++k) {
    adam_step({{"p", as_span(p), as_span(g)}}, st);
    CHECK(p[0] < prev);
    prev = p[0];
  }
}

TEST_CASE("adam rejects non-finite gradients by block name", "[nn_core]") {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(2), g(2);
  g << 1.0, std::nan("");
  AdamState st;
  CHECK_THROWS_WITH(adam_step({{"decoder.w", as_span(p), as_span(g)}}, st),
                    Catch::Matchers::ContainsSubstring("decoder.w"));
  CHECK(p.isZero(0.0));
}

TEST_CASE("training steps are bitwise deterministic", "[nn_core]") {
  auto run = [] {
    Rng rng(9);
    auto net = DenseNet::mlp(1, {8}, 1, Activation::Softplus, rng);
    const auto x = uniform(1, 20, -2, 2, rng);
    const Eigen::MatrixXd target = x.array().sin();
    AdamState st;
    for (int k = 0; k < 25; ++k) {
      ForwardCache c;
      const auto out = net.forward(x, c);
      const auto tape = net.backward(c, out - target);
      ParamBlocks blocks;
      net.append_blocks(blocks, tape, "");
      adam_step(blocks, st);
    }
    return net.layers()[0].weight;
  };
  CHECK(run() == run());
}
