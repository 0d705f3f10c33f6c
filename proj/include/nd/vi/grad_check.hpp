#pragma once

#include <algorithm>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "nd/constraints/constraint_set.hpp"
#include "nd/nn/grad_check.hpp"
#include "nd/vi/elbo.hpp"

namespace nd::vi {

/// Central-difference check of every trainable block of the full objective
/// (negative ELBO, plus the constraint augmentation when `cs` is given) under a
/// fixed noise draw.
inline nn::GradCheckReport objective_grad_check(VaeModel model, const Eigen::MatrixXd& y, const Eigen::MatrixXd& c,
                                                const NoiseDraw& noise, Eigen::Index dataset_size,
                                                const constraints::ConstraintSet* cs, double step, double tol) {
  if (!(step > 0.0)) throw ArgumentError("objective_grad_check: step must be positive");
  const auto est = constraints::Estimator::quadrature();
  auto objective = [&](const VaeModel& m) {
    auto r = elbo(m, y, c, noise, dataset_size);
    if (cs) add_constraints(r, m, *cs, est);
    return r;
  };
  const auto ref = objective(model);
  const auto blocks = bind_parameters(model, ref.grad);
  nn::GradCheckReport report;
  for (const auto& b : blocks) {
    Eigen::VectorXd numeric(static_cast<Eigen::Index>(b.value.size()));
    for (std::size_t i = 0; i < b.value.size(); ++i) {
      const double saved = b.value[i];
      b.value[i] = saved + step;
      const double up = objective(model).loss;
      b.value[i] = saved - step;
      const double down = objective(model).loss;
      b.value[i] = saved;
      numeric[static_cast<Eigen::Index>(i)] = (up - down) / (2.0 * step);
    }
    const Eigen::VectorXd analytic =
        Eigen::Map<const Eigen::VectorXd>(b.grad.data(), static_cast<Eigen::Index>(b.grad.size()));
    nn::BlockCheck bc{b.name, nn::relative_error(analytic, numeric), false};
    bc.exceeds = bc.relative_error > tol;
    report.max_relative_error = std::max(report.max_relative_error, bc.relative_error);
    report.passed = report.passed && !bc.exceeds;
    report.blocks.push_back(std::move(bc));
  }
  return report;
}

}  // namespace nd::vi
