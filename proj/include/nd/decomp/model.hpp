#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "nd/core/errors.hpp"
#include "nd/core/random.hpp"
#include "nd/decomp/term_index.hpp"
#include "nd/nn/dense_net.hpp"

namespace nd::decomp {

enum class CoordinateKind { Latent, Continuous, Binary };

inline std::string_view to_string(CoordinateKind k) {
  switch (k) {
    case CoordinateKind::Latent: return "latent";
    case CoordinateKind::Continuous: return "continuous";
    case CoordinateKind::Binary: return "binary";
  }
  return "?";
}

inline CoordinateKind coordinate_kind_from_string(std::string_view s) {
  if (s == "latent") return CoordinateKind::Latent;
  if (s == "continuous") return CoordinateKind::Continuous;
  if (s == "binary") return CoordinateKind::Binary;
  throw ConfigError("unknown coordinate kind '" + std::string(s) + "'");
}

/// One decoder input coordinate and the domain its constraints integrate over.
/// Binary coordinates take the levels {0, 1}; lo/hi are ignored for them.
struct InputCoordinate {
  std::string name;
  CoordinateKind kind = CoordinateKind::Latent;
  double lo = -3.0;
  double hi = 3.0;
};

struct Term {
  TermIndex index;
  nn::DenseNet net;
};

/// Additive decoder f0 + sum_I f_I(x_I) with per-feature Gaussian noise scales.
struct DecompositionModel {
  std::vector<InputCoordinate> inputs;
  Eigen::VectorXd intercept;  // P
  Eigen::VectorXd log_noise;  // P, log sigma_j
  std::vector<Term> terms;

  Eigen::Index features() const { return intercept.size(); }
  int input_dim() const { return static_cast<int>(inputs.size()); }

  std::vector<std::string> input_names() const {
    std::vector<std::string> names;
    for (const auto& c : inputs) names.push_back(c.name);
    return names;
  }

  std::vector<std::string> term_labels() const {
    std::vector<std::string> out;
    const auto names = input_names();
    for (const auto& t : terms) out.push_back(t.index.label(names));
    return out;
  }

  std::optional<std::size_t> find(const TermIndex& idx) const {
    for (std::size_t k = 0; k < terms.size(); ++k)
      if (terms[k].index == idx) return k;
    return std::nullopt;
  }

  std::size_t index_of(const TermIndex& idx) const {
    if (auto k = find(idx)) return *k;
    throw KeyError("no term '" + idx.label(input_names()) + "' in model");
  }

  Eigen::VectorXd noise_scale() const { return log_noise.array().exp().matrix(); }

  void validate() const {
    const auto p = features();
    if (p < 1) throw ConfigError("model must have at least one feature");
    if (log_noise.size() != p) throw ShapeError("noise scale length differs from feature count");
    for (const auto& c : inputs)
      if (c.kind != CoordinateKind::Binary && !(c.lo < c.hi))
        throw ConfigError("coordinate '" + c.name + "' needs lo < hi");
    for (const auto& t : terms) {
      for (int c : t.index.coords())
        if (c >= input_dim()) throw ConfigError("term references unknown coordinate");
      if (t.net.input_dim() != static_cast<Eigen::Index>(t.index.order()))
        throw ShapeError("term network input width differs from term order");
      if (t.net.output_dim() != p) throw ShapeError("term network output width differs from P");
    }
    for (std::size_t a = 0; a < terms.size(); ++a)
      for (std::size_t b = a + 1; b < terms.size(); ++b)
        if (terms[a].index == terms[b].index) throw ConfigError("duplicate term in model");
  }
};

struct TermArchitecture {
  std::vector<Eigen::Index> hidden{64};
  nn::Activation activation = nn::Activation::Softplus;
};

inline DecompositionModel make_model(std::vector<InputCoordinate> inputs, Eigen::Index features,
                                     const std::vector<TermIndex>& terms,
                                     const TermArchitecture& arch, Rng& rng) {
  DecompositionModel m;
  m.inputs = std::move(inputs);
  m.intercept = Eigen::VectorXd::Zero(features);
  m.log_noise = Eigen::VectorXd::Zero(features);
  for (const auto& t : terms)
    m.terms.push_back({t, nn::DenseNet::mlp(static_cast<Eigen::Index>(t.order()), arch.hidden,
                                            features, arch.activation, rng)});
  m.validate();
  return m;
}

/// Per-(feature, term) multipliers keyed by term.
using TermMasks = std::map<TermIndex, Eigen::VectorXd>;

/// P x T mask matrix in model term order; terms missing from `masks` get 1.
inline Eigen::MatrixXd mask_matrix(const DecompositionModel& model, const TermMasks& masks) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Ones(model.features(), static_cast<Eigen::Index>(model.terms.size()));
  for (const auto& [idx, v] : masks) {
    const auto k = model.index_of(idx);
    if (v.size() != model.features()) throw ShapeError("mask length differs from feature count");
    if ((v.array() < 0.0).any() || (v.array() > 1.0).any())
      throw ArgumentError("mask values must lie in [0, 1]");
    out.col(static_cast<Eigen::Index>(k)) = v;
  }
  return out;
}

}  // namespace nd::decomp
