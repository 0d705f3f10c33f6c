#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nd/core/errors.hpp"
#include "nd/decomp/decode.hpp"
#include "nd/decomp/model.hpp"

namespace nd::decomp {

struct FeatureVariance {
  std::vector<double> term_variance;  // Var(mask * f_I), model term order
  double noise_variance = 0.0;
  double total_variance = 0.0;        // Var of the summed decoded mean
  std::vector<double> fractions;      // term_variance / (total_variance + noise_variance)
  double noise_fraction = 0.0;
  double residual = 0.0;              // |total_variance - sum(term_variance)|
  double residual_fraction = 0.0;     // residual / (total_variance + noise_variance)
};

struct VarianceReport {
  std::vector<std::string> term_labels;
  std::vector<std::string> feature_names;
  std::vector<FeatureVariance> features;

  double max_residual_fraction() const {
    double m = 0.0;
    for (const auto& f : features) m = std::max(m, f.residual_fraction);
    return m;
  }
};

namespace detail {
inline double population_variance(const Eigen::RowVectorXd& v) {
  const double mean = v.mean();
  return (v.array() - mean).square().mean();
}
}  // namespace detail

/// Variance decomposition of every feature over the reference inputs `reference`
/// (D x N, one point per column). `mask` (P x T) rescales terms when given.
inline VarianceReport term_variances(const DecompositionModel& model, const Eigen::MatrixXd& reference,
                                     const Eigen::MatrixXd* mask = nullptr,
                                     std::vector<std::string> feature_names = {}) {
  if (reference.cols() < 2) throw ArgumentError("term_variances: need at least 2 reference points");
  const auto pass = decode_forward(model, reference, mask);
  const auto p = model.features();
  if (feature_names.empty())
    for (Eigen::Index j = 0; j < p; ++j) feature_names.push_back("y" + std::to_string(j + 1));
  if (static_cast<Eigen::Index>(feature_names.size()) != p)
    throw ShapeError("term_variances: feature name count differs from P");

  VarianceReport report;
  report.term_labels = model.term_labels();
  report.feature_names = std::move(feature_names);
  const Eigen::VectorXd noise = model.noise_scale();
  for (Eigen::Index j = 0; j < p; ++j) {
    FeatureVariance fv;
    double sum = 0.0;
    for (std::size_t k = 0; k < model.terms.size(); ++k) {
      Eigen::RowVectorXd row = pass.term_outputs[k].row(j);
      if (mask) row *= (*mask)(j, static_cast<Eigen::Index>(k));
      const double v = detail::population_variance(row);
      fv.term_variance.push_back(v);
      sum += v;
    }
    fv.total_variance = detail::population_variance(pass.output.row(j));
    fv.noise_variance = noise[j] * noise[j];
    const double denom = fv.total_variance + fv.noise_variance;
    for (double v : fv.term_variance) fv.fractions.push_back(denom > 0 ? v / denom : 0.0);
    fv.noise_fraction = denom > 0 ? fv.noise_variance / denom : 0.0;
    fv.residual = std::abs(fv.total_variance - sum);
    fv.residual_fraction = denom > 0 ? fv.residual / denom : 0.0;
    report.features.push_back(std::move(fv));
  }
  return report;
}

/// Equispaced product grid over every input coordinate (binary coordinates use {0,1}).
inline Eigen::MatrixXd uniform_grid_reference(const DecompositionModel& model, int nodes) {
  if (nodes < 2) throw ArgumentError("uniform_grid_reference: need at least 2 nodes");
  std::vector<Eigen::VectorXd> axes;
  Eigen::Index total = 1;
  for (const auto& c : model.inputs) {
    if (c.kind == CoordinateKind::Binary)
      axes.push_back((Eigen::VectorXd(2) << 0.0, 1.0).finished());
    else
      axes.push_back(Eigen::VectorXd::LinSpaced(nodes, c.lo, c.hi));
    total *= axes.back().size();
  }
  Eigen::MatrixXd out(model.input_dim(), total);
  for (Eigen::Index m = 0; m < total; ++m) {
    Eigen::Index rem = m;
    for (Eigen::Index d = model.input_dim(); d-- > 0;) {
      const auto& ax = axes[static_cast<std::size_t>(d)];
      out(d, m) = ax[rem % ax.size()];
      rem /= ax.size();
    }
  }
  return out;
}

}  // namespace nd::decomp
