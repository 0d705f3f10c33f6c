#pragma once

#include <algorithm>
#include <compare>
#include <functional>
#include <string>
#include <vector>

#include "nd/core/errors.hpp"

namespace nd::decomp {

/// Sorted, non-empty subset of input coordinates that a decoder term depends on.
class TermIndex {
 public:
  TermIndex() = default;

  TermIndex(std::vector<int> coords, int input_dim) : coords_(std::move(coords)) {
    if (coords_.empty()) throw ArgumentError("term index must be non-empty");
    for (std::size_t k = 0; k < coords_.size(); ++k) {
      if (coords_[k] < 0 || coords_[k] >= input_dim)
        throw ArgumentError("term coordinate " + std::to_string(coords_[k]) + " out of range");
      if (k > 0 && coords_[k] <= coords_[k - 1])
        throw ArgumentError("term coordinates must be strictly increasing");
    }
  }

  const std::vector<int>& coords() const { return coords_; }
  std::size_t order() const { return coords_.size(); }
  bool contains(int c) const { return std::binary_search(coords_.begin(), coords_.end(), c); }

  bool disjoint(const TermIndex& o) const {
    return std::none_of(coords_.begin(), coords_.end(), [&](int c) { return o.contains(c); });
  }

  /// Position of coordinate `c` inside the subset, or -1.
  int position(int c) const {
    auto it = std::lower_bound(coords_.begin(), coords_.end(), c);
    return (it != coords_.end() && *it == c) ? static_cast<int>(it - coords_.begin()) : -1;
  }

  /// Coordinate names joined by ':' (e.g. "z:c").
  std::string label(const std::vector<std::string>& names) const {
    std::string s;
    for (std::size_t k = 0; k < coords_.size(); ++k) {
      if (k) s += ':';
      s += names.at(static_cast<std::size_t>(coords_[k]));
    }
    return s;
  }

  // Lower order first, then lexicographic.
  std::strong_ordering operator<=>(const TermIndex& o) const {
    if (auto c = coords_.size() <=> o.coords_.size(); c != 0) return c;
    return coords_ <=> o.coords_;
  }
  bool operator==(const TermIndex& o) const = default;

 private:
  std::vector<int> coords_;
};

using TermFilter = std::function<bool(const TermIndex&)>;

/// Keeps main effects and those interactions that include coordinate `c`.
inline TermFilter interactions_with(int c) {
  return [c](const TermIndex& t) { return t.order() == 1 || t.contains(c); };
}

/// All subsets of {0..D-1} with at most `max_order` elements, ordered by size then
/// lexicographically, optionally filtered.
inline std::vector<TermIndex> enumerate_terms(int input_dim, int max_order,
                                              const TermFilter& filter = {}) {
  if (input_dim < 1) throw ArgumentError("enumerate_terms: input dimension must be positive");
  if (max_order < 1 || max_order > input_dim)
    throw ArgumentError("enumerate_terms: max_order must lie in [1, " + std::to_string(input_dim) + "]");
  std::vector<TermIndex> out;
  for (int order = 1; order <= max_order; ++order) {
    // Lexicographic combinations of size `order`.
    std::vector<int> idx(static_cast<std::size_t>(order));
    for (int k = 0; k < order; ++k) idx[static_cast<std::size_t>(k)] = k;
    while (true) {
      TermIndex t(idx, input_dim);
      if (!filter || filter(t)) out.push_back(std::move(t));
      int k = order - 1;
      while (k >= 0 && idx[static_cast<std::size_t>(k)] == input_dim - order + k) --k;
      if (k < 0) break;
      ++idx[static_cast<std::size_t>(k)];
      for (int m = k + 1; m < order; ++m)
        idx[static_cast<std::size_t>(m)] = idx[static_cast<std::size_t>(m - 1)] + 1;
    }
  }
  return out;
}

}  // namespace nd::decomp
