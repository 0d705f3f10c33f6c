#pragma once

#include <vector>

#include "nd/core/errors.hpp"
#include "nd/decomp/model.hpp"
#include "nd/decomp/term_index.hpp"
#include "nd/nn/dense_net.hpp"

namespace nd::decomp {

/// Re-expresses a term network on the subset `from` as a network on the superset
/// `to` that ignores the extra coordinates: first-layer weights on those inputs are zero.
/// Without integral constraints both parameterisations describe the same function,
/// so the split between a main effect and an interaction is not identifiable.
inline nn::DenseNet lift_term(const nn::DenseNet& net, const TermIndex& from, const TermIndex& to) {
  for (int c : from.coords())
    if (!to.contains(c)) throw ArgumentError("lift_term: target subset must contain the source subset");
  if (net.input_dim() != static_cast<Eigen::Index>(from.order()))
    throw ShapeError("lift_term: network input width differs from the source subset");
  auto layers = net.layers();
  auto& first = layers.front();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(first.weight.rows(), static_cast<Eigen::Index>(to.order()));
  for (std::size_t k = 0; k < from.order(); ++k)
    w.col(to.position(from.coords()[k])) = first.weight.col(static_cast<Eigen::Index>(k));
  first.weight = std::move(w);
  return nn::DenseNet(std::move(layers));
}

}  // namespace nd::decomp
