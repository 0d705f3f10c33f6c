#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nd {

/// A named view onto one contiguous parameter array and its gradient.
struct ParamBlock {
  std::string name;
  std::span<double> value;
  std::span<const double> grad;
};

using ParamBlocks = std::vector<ParamBlock>;

template <typename Derived>
std::span<double> as_span(Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

template <typename Derived>
std::span<const double> as_span(const Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

}  // namespace nd
