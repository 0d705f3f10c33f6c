#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nd/constraints/constraint_set.hpp"
#include "nd/constraints/quadrature.hpp"
#include "nd/decomp/decode.hpp"
#include "nd/decomp/model.hpp"

namespace nd::constraints {

struct InnerProduct {
  std::string first;
  std::string second;
  Eigen::VectorXd value;  // per feature
};

/// Empirical L2 inner product between every pair of disjoint terms: the mean of
/// f_I * f_J over the equally weighted product grid of the coordinates in I and J.
inline std::vector<InnerProduct> disjoint_inner_products(const decomp::DecompositionModel& model, int grid_nodes) {
  std::vector<QuadratureGrid> grids;
  for (const auto& c : model.inputs) grids.push_back(QuadratureGrid::for_coordinate(c, grid_nodes));
  const auto names = model.input_names();
  std::vector<InnerProduct> out;
  for (std::size_t a = 0; a < model.terms.size(); ++a)
    for (std::size_t b = a + 1; b < model.terms.size(); ++b) {
      const auto& ia = model.terms[a].index;
      const auto& ib = model.terms[b].index;
      if (!ia.disjoint(ib)) continue;
      std::vector<int> coords = ia.coords();
      coords.insert(coords.end(), ib.coords().begin(), ib.coords().end());
      std::sort(coords.begin(), coords.end());
      const Eigen::MatrixXd pts = detail::product_points(grids, coords);
      auto gather = [&](const decomp::TermIndex& t) {
        Eigen::MatrixXd x(static_cast<Eigen::Index>(t.order()), pts.cols());
        for (std::size_t k = 0; k < t.order(); ++k)
          x.row(static_cast<Eigen::Index>(k)) =
              pts.row(std::lower_bound(coords.begin(), coords.end(), t.coords()[k]) - coords.begin());
        return x;
      };
      const Eigen::MatrixXd fa = model.terms[a].net.predict(gather(ia));
      const Eigen::MatrixXd fb = model.terms[b].net.predict(gather(ib));
      out.push_back({ia.label(names), ib.label(names),
                     (fa.array() * fb.array()).rowwise().mean().matrix()});
    }
  return out;
}

}  // namespace nd::constraints
