#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nd/core/errors.hpp"
#include "nd/nn/dense_net.hpp"

namespace nd::nn {

/// Scalar loss of a network output batch, returning the value and d loss / d output.
using OutputLoss = std::function<std::pair<double, Eigen::MatrixXd>(const Eigen::MatrixXd&)>;

struct BlockCheck {
  std::string name;
  double relative_error = 0.0;
  bool exceeds = false;
};

struct GradCheckReport {
  std::vector<BlockCheck> blocks;
  double max_relative_error = 0.0;
  bool passed = true;
};

/// Relative error ||a - n|| / max(||a||, ||n||), zero when both vanish.
inline double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  const double scale = std::max(analytic.norm(), numeric.norm());
  if (scale == 0.0) return 0.0;
  return (analytic - numeric).norm() / scale;
}

/// Compares backward() against central differences for every parameter block.
inline GradCheckReport finite_diff_check(const DenseNet& net, const OutputLoss& loss,
                                         const Eigen::MatrixXd& points, double step, double tol) {
  if (!(step > 0.0)) throw ArgumentError("finite_diff_check: step must be positive");
  ForwardCache cache;
  const auto out = net.forward(points, cache);
  const auto tape = net.backward(cache, loss(out).second);

  DenseNet probe = net;
  auto eval = [&]() { return loss(probe.predict(points)).first; };
  GradCheckReport report;
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    for (int which = 0; which < 2; ++which) {
      auto& layers = probe.mutable_layers();
      double* data = which == 0 ? layers[k].weight.data() : layers[k].bias.data();
      const Eigen::Index size = which == 0 ? layers[k].weight.size() : layers[k].bias.size();
      Eigen::VectorXd numeric(size);
      for (Eigen::Index i = 0; i < size; ++i) {
        const double saved = data[i];
        data[i] = saved + step;
        const double up = eval();
        data[i] = saved - step;
        const double down = eval();
        data[i] = saved;
        numeric[i] = (up - down) / (2.0 * step);
      }
      const Eigen::VectorXd analytic =
          which == 0 ? Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(tape.layers[k].weight.data(), size))
                     : tape.layers[k].bias;
      BlockCheck b;
      b.name = "layer" + std::to_string(k) + (which == 0 ? ".weight" : ".bias");
      b.relative_error = relative_error(analytic, numeric);
      b.exceeds = b.relative_error > tol;
      report.max_relative_error = std::max(report.max_relative_error, b.relative_error);
      report.passed = report.passed && !b.exceeds;
      report.blocks.push_back(std::move(b));
    }
  }
  return report;
}

}  // namespace nd::nn
