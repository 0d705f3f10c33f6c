#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nd/core/errors.hpp"
#include "nd/core/params.hpp"

namespace nd::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Eigen::VectorXd> first_moment;
  std::vector<Eigen::VectorXd> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(AdamConfig c) : config(c) {}
};

/// One bias-corrected Adam update over `blocks`. Moments are allocated on the
/// first call; afterwards block count and sizes must stay the same. Nothing is
/// modified if any gradient is non-finite.
inline void adam_step(const ParamBlocks& blocks, AdamState& state) {
  for (const auto& b : blocks) {
    if (b.grad.size() != b.value.size())
      throw ShapeError("adam: gradient size differs from parameter size for " + b.name);
    for (double g : b.grad)
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient in block " + b.name);
  }
  if (state.first_moment.empty()) {
    for (const auto& b : blocks) {
      state.first_moment.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(b.value.size())));
      state.second_moment.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(b.value.size())));
    }
  }
  if (state.first_moment.size() != blocks.size())
    throw ShapeError("adam: block count changed between steps");
  for (std::size_t k = 0; k < blocks.size(); ++k)
    if (state.first_moment[k].size() != static_cast<Eigen::Index>(blocks[k].value.size()))
      throw ShapeError("adam: moment shape mismatch for " + blocks[k].name);

  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double m_corr = 1.0 - std::pow(c.beta1, t);
  const double v_corr = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    const auto& b = blocks[k];
    for (std::size_t i = 0; i < b.value.size(); ++i) {
      const double g = b.grad[i];
      const auto ii = static_cast<Eigen::Index>(i);
      m[ii] = c.beta1 * m[ii] + (1.0 - c.beta1) * g;
      v[ii] = c.beta2 * v[ii] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[ii] / m_corr;
      const double v_hat = v[ii] / v_corr;
      b.value[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace nd::nn
