#pragma once

#include <Eigen/Dense>

#include "nd/core/errors.hpp"
#include "nd/decomp/model.hpp"

namespace nd::constraints {

/// Integration nodes and weights along one coordinate.
struct QuadratureGrid {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  Eigen::Index size() const { return nodes.size(); }

  /// Composite trapezoid rule with `n` equispaced nodes on [lo, hi]; weights sum to hi - lo.
  static QuadratureGrid trapezoid(double lo, double hi, int n) {
    if (n < 2) throw ArgumentError("trapezoid grid needs at least 2 nodes");
    if (!(lo < hi)) throw ArgumentError("trapezoid grid needs lo < hi");
    QuadratureGrid g;
    g.nodes = Eigen::VectorXd::LinSpaced(n, lo, hi);
    const double h = (hi - lo) / (n - 1);
    g.weights = Eigen::VectorXd::Constant(n, h);
    g.weights[0] = g.weights[n - 1] = 0.5 * h;
    return g;
  }

  /// Levels {0, 1} with weight 1/2 each: the integral becomes the mean over levels.
  static QuadratureGrid binary() {
    QuadratureGrid g;
    g.nodes = (Eigen::VectorXd(2) << 0.0, 1.0).finished();
    g.weights = (Eigen::VectorXd(2) << 0.5, 0.5).finished();
    return g;
  }

  static QuadratureGrid for_coordinate(const decomp::InputCoordinate& c, int n) {
    return c.kind == decomp::CoordinateKind::Binary ? binary() : trapezoid(c.lo, c.hi, n);
  }
};

/// sum_k w_k * values_k.
inline double trapezoid_integral(const Eigen::VectorXd& values, const QuadratureGrid& grid) {
  if (values.size() != grid.size())
    throw ShapeError("trapezoid_integral: " + std::to_string(values.size()) + " values for " +
                     std::to_string(grid.size()) + " nodes");
  return grid.weights.dot(values);
}

/// Integrates each row of `values` (rows x nodes) over the grid.
inline Eigen::VectorXd trapezoid_integral(const Eigen::MatrixXd& values, const QuadratureGrid& grid) {
  if (values.cols() != grid.size()) throw ShapeError("trapezoid_integral: column count differs from node count");
  return values * grid.weights;
}

}  // namespace nd::constraints
