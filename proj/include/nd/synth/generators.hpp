#pragma once

// Synthetic datasets with known functional-ANOVA structure.
//
// Each generator draws latent coordinates z (and a covariate c), evaluates the
// feature formulas, and adds N(0, sigma^2) noise. Alongside the data it returns
// the ground-truth decomposition: for every feature, the centred-or-not
// component functions attached to each input subset. Only their variances are
// used, so additive constants inside a component do not matter.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "nd/core/errors.hpp"
#include "nd/core/random.hpp"

namespace nd::synth {

enum class Generator { Fig1Toy, Fig4Panel, Batch2d };

inline std::string_view to_string(Generator g) {
  switch (g) {
    case Generator::Fig1Toy: return "fig1_toy";
    case Generator::Fig4Panel: return "fig4_panel";
    case Generator::Batch2d: return "batch2d";
  }
  return "?";
}

inline Generator generator_from_string(std::string_view s) {
  if (s == "fig1_toy" || s == "fig1") return Generator::Fig1Toy;
  if (s == "fig4_panel" || s == "fig4") return Generator::Fig4Panel;
  if (s == "batch2d") return Generator::Batch2d;
  throw ConfigError("unknown synthetic generator '" + std::string(s) + "'");
}

struct SyntheticSpec {
  Generator id = Generator::Fig4Panel;
  Eigen::Index n = 500;
  double noise = 0.05;
  std::uint64_t seed = 1;

  void validate() const {
    if (n <= 0) throw ArgumentError("synthetic N must be positive");
    if (!(noise >= 0.0)) throw ArgumentError("synthetic noise must be non-negative");
  }
};

/// A point of the generating input space: latent coordinates then the covariate.
using InputPoint = Eigen::VectorXd;
using Component = std::function<double(const InputPoint&)>;

struct GroundTruth {
  std::vector<std::string> input_names;
  std::vector<std::string> term_labels;               // e.g. "z", "c", "z:c"
  std::vector<std::vector<Component>> components;      // [feature][term]; empty function = zero
  double noise = 0.0;
  Generator id = Generator::Fig4Panel;

  std::size_t features() const { return components.size(); }
};

struct SyntheticDataset {
  Eigen::MatrixXd z;  // dz x N
  Eigen::MatrixXd c;  // 1 x N
  Eigen::MatrixXd y;  // P x N
  std::vector<std::string> latent_names;
  std::string covariate_name = "c";
  bool binary_covariate = false;
  std::vector<std::string> feature_names;
  GroundTruth truth;
};

namespace detail {

inline std::vector<std::string> feature_names(int p) {
  std::vector<std::string> out;
  for (int j = 1; j <= p; ++j) out.push_back("y" + std::to_string(j));
  return out;
}

constexpr double kFig4Block1[] = {0.1, 0.2, 0.3, 0.4, 0.5};
constexpr double kFig4Block2[] = {0.05, 0.1, 0.15, 0.2, 0.25};
constexpr double kFig4Block3[] = {0.01, 0.02, 0.03, 0.04, 0.05};
constexpr double kFig4Block4[] = {0.02, 0.04, 0.06, 0.08, 0.1};
constexpr double kFig4Block5[] = {0.2, 0.4, 0.6, 0.8, 1.0};

constexpr double kBatchBlock1[] = {1, 2, 3, 4, 5};
constexpr double kBatchBlock3[] = {0.1, 0.2, 0.3, 0.4, 0.5};
constexpr double kBatchBlock4[] = {0.2, 0.4, 0.6, 0.8, 1.0};

}  // namespace detail

/// Noise-free feature values of the Figure-1 toy at (z, c); P = 2.
inline Eigen::VectorXd fig1_features(double z, double c) {
  Eigen::VectorXd y(2);
  y[0] = std::exp(-z * z) + 0.3 * std::tanh(c);
  y[1] = std::sin(z) + 0.2 * c + 0.2 * std::sin(z) * c * (z > 0 ? 1.0 : 0.0);
  return y;
}

/// Noise-free feature values of the 25-feature panel at (z, c).
inline Eigen::VectorXd fig4_features(double z, double c) {
  using namespace detail;
  Eigen::VectorXd y(25);
  for (int k = 0; k < 5; ++k) {
    y[k] = kFig4Block1[k] * std::cos(z);
    y[5 + k] = 0.5 * z + kFig4Block2[k] * c;
    y[10 + k] = kFig4Block3[k] * std::tanh(z) * c;
    y[15 + k] = kFig4Block4[k] * c + 0.01 * (0.12 - kFig4Block4[k]) * z * std::tanh(c);
    y[20 + k] = 0.1 * std::tanh(z) + 0.2 * std::tanh(c) + kFig4Block5[k] * std::sin(z) * c;
  }
  return y;
}

/// Noise-free feature values of the two-latent batch example at (z1, z2, c), c in {0, 1}.
inline Eigen::VectorXd batch2d_features(double z1, double z2, double c) {
  using namespace detail;
  Eigen::VectorXd y(25);
  for (int k = 0; k < 5; ++k) {
    const double w1 = kBatchBlock1[k];
    y[k] = 0.3 * w1 * std::tanh(z1) + 0.2 * w1 * std::exp(-0.5 * z2 * z2) + 0.3 * w1 * c;
    y[5 + k] = 0.2 * w1 * std::tanh(z2) + 0.4 * (6.0 - w1) * c;
    const double w3 = kBatchBlock3[k];
    y[10 + k] = w3 * z1 + (0.6 - w3) * z2 + (0.6 - w3) * std::tanh(z1) * c;
    const double w4 = kBatchBlock4[k];
    y[15 + k] = std::tanh(2.0 * z1) + w4 * std::tanh(z2);
    y[20 + k] = 0.1 * c + w4 * std::tanh(z1) * c;
  }
  return y;
}

inline GroundTruth fig1_truth(double noise) {
  GroundTruth t;
  t.id = Generator::Fig1Toy;
  t.noise = noise;
  t.input_names = {"z", "c"};
  t.term_labels = {"z", "c", "z:c"};
  // E_z[sin(z) 1(z>0)] for z ~ U(-2, 2).
  const double m = (1.0 - std::cos(2.0)) / 4.0;
  t.components.push_back({[](const InputPoint& x) { return std::exp(-x[0] * x[0]); },
                          [](const InputPoint& x) { return 0.3 * std::tanh(x[1]); }, Component{}});
  t.components.push_back(
      {[](const InputPoint& x) { return std::sin(x[0]); },
       [m](const InputPoint& x) { return 0.2 * x[1] + 0.2 * m * x[1]; },
       [m](const InputPoint& x) { return 0.2 * x[1] * (std::sin(x[0]) * (x[0] > 0 ? 1.0 : 0.0) - m); }});
  return t;
}

inline GroundTruth fig4_truth(double noise) {
  using namespace detail;
  GroundTruth t;
  t.id = Generator::Fig4Panel;
  t.noise = noise;
  t.input_names = {"z", "c"};
  t.term_labels = {"z", "c", "z:c"};
  t.components.resize(25);
  for (int k = 0; k < 5; ++k) {
    const double w1 = kFig4Block1[k], w2 = kFig4Block2[k], w3 = kFig4Block3[k], w4 = kFig4Block4[k],
                 w5 = kFig4Block5[k];
    t.components[k] = {[w1](const InputPoint& x) { return w1 * std::cos(x[0]); }, Component{}, Component{}};
    t.components[5 + k] = {[](const InputPoint& x) { return 0.5 * x[0]; },
                           [w2](const InputPoint& x) { return w2 * x[1]; }, Component{}};
    t.components[10 + k] = {Component{}, Component{},
                            [w3](const InputPoint& x) { return w3 * std::tanh(x[0]) * x[1]; }};
    t.components[15 + k] = {Component{}, [w4](const InputPoint& x) { return w4 * x[1]; },
                            [w4](const InputPoint& x) { return 0.01 * (0.12 - w4) * x[0] * std::tanh(x[1]); }};
    t.components[20 + k] = {[](const InputPoint& x) { return 0.1 * std::tanh(x[0]); },
                            [](const InputPoint& x) { return 0.2 * std::tanh(x[1]); },
                            [w5](const InputPoint& x) { return w5 * std::sin(x[0]) * x[1]; }};
  }
  return t;
}

inline GroundTruth batch2d_truth(double noise) {
  using namespace detail;
  GroundTruth t;
  t.id = Generator::Batch2d;
  t.noise = noise;
  t.input_names = {"z1", "z2", "c"};
  t.term_labels = {"z1", "z2", "c", "z1:z2", "z1:c", "z2:c"};
  t.components.resize(25);
  const Component none{};
  for (int k = 0; k < 5; ++k) {
    const double w1 = kBatchBlock1[k], w3 = kBatchBlock3[k], w4 = kBatchBlock4[k];
    t.components[k] = {[w1](const InputPoint& x) { return 0.3 * w1 * std::tanh(x[0]); },
                       [w1](const InputPoint& x) { return 0.2 * w1 * std::exp(-0.5 * x[1] * x[1]); },
                       [w1](const InputPoint& x) { return 0.3 * w1 * x[2]; }, none, none, none};
    t.components[5 + k] = {none, [w1](const InputPoint& x) { return 0.2 * w1 * std::tanh(x[1]); },
                           [w1](const InputPoint& x) { return 0.4 * (6.0 - w1) * x[2]; }, none, none, none};
    // tanh(z1) c splits into 0.5 tanh(z1) (main) and tanh(z1)(c - 0.5) (interaction).
    t.components[10 + k] = {
        [w3](const InputPoint& x) { return w3 * x[0] + 0.5 * (0.6 - w3) * std::tanh(x[0]); },
        [w3](const InputPoint& x) { return (0.6 - w3) * x[1]; }, none, none,
        [w3](const InputPoint& x) { return (0.6 - w3) * std::tanh(x[0]) * (x[2] - 0.5); }, none};
    t.components[15 + k] = {[](const InputPoint& x) { return std::tanh(2.0 * x[0]); },
                            [w4](const InputPoint& x) { return w4 * std::tanh(x[1]); }, none, none, none, none};
    t.components[20 + k] = {[w4](const InputPoint& x) { return 0.5 * w4 * std::tanh(x[0]); }, none,
                            [](const InputPoint& x) { return 0.1 * x[2]; }, none,
                            [w4](const InputPoint& x) { return w4 * std::tanh(x[0]) * (x[2] - 0.5); }, none};
  }
  return t;
}

/// One draw from the generating input distribution of `id`.
inline InputPoint draw_inputs(Generator id, Rng& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  if (id == Generator::Batch2d) {
    std::bernoulli_distribution b(0.5);
    InputPoint x(3);
    x[0] = u(rng);
    x[1] = u(rng);
    x[2] = b(rng) ? 1.0 : 0.0;
    return x;
  }
  InputPoint x(2);
  x[0] = u(rng);
  x[1] = u(rng);
  return x;
}

inline Eigen::VectorXd features_at(Generator id, const InputPoint& x) {
  switch (id) {
    case Generator::Fig1Toy: return fig1_features(x[0], x[1]);
    case Generator::Fig4Panel: return fig4_features(x[0], x[1]);
    case Generator::Batch2d: return batch2d_features(x[0], x[1], x[2]);
  }
  throw ConfigError("unknown generator");
}

inline GroundTruth truth_for(Generator id, double noise) {
  switch (id) {
    case Generator::Fig1Toy: return fig1_truth(noise);
    case Generator::Fig4Panel: return fig4_truth(noise);
    case Generator::Batch2d: return batch2d_truth(noise);
  }
  throw ConfigError("unknown generator");
}

inline SyntheticDataset generate(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, 17));
  std::normal_distribution<double> eps(0.0, 1.0);
  SyntheticDataset d;
  d.truth = truth_for(spec.id, spec.noise);
  const int dz = spec.id == Generator::Batch2d ? 2 : 1;
  d.latent_names = dz == 1 ? std::vector<std::string>{"z"} : std::vector<std::string>{"z1", "z2"};
  d.binary_covariate = spec.id == Generator::Batch2d;
  const auto p = static_cast<int>(d.truth.features());
  d.feature_names = detail::feature_names(p);
  d.z.resize(dz, spec.n);
  d.c.resize(1, spec.n);
  d.y.resize(p, spec.n);
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    const auto x = draw_inputs(spec.id, rng);
    d.z.col(i) = x.head(dz);
    d.c(0, i) = x[dz];
    d.y.col(i) = features_at(spec.id, x);
  }
  if (spec.noise > 0.0)
    for (Eigen::Index i = 0; i < spec.n; ++i)
      for (int j = 0; j < p; ++j) d.y(j, i) += spec.noise * eps(rng);
  return d;
}

inline SyntheticDataset generate_fig1(SyntheticSpec spec) {
  spec.id = Generator::Fig1Toy;
  return generate(spec);
}
inline SyntheticDataset generate_fig4(SyntheticSpec spec) {
  spec.id = Generator::Fig4Panel;
  return generate(spec);
}
inline SyntheticDataset generate_batch2d(SyntheticSpec spec) {
  spec.id = Generator::Batch2d;
  return generate(spec);
}

struct TruthFractions {
  std::vector<std::string> term_labels;
  std::vector<std::vector<double>> fractions;  // [feature][term]
  std::vector<double> noise_fraction;
};

/// Variance fractions of every component under the generating distribution,
/// estimated from `draws` Monte Carlo samples: Var(f_I) / (Var(sum of f_I) + sigma^2).
inline TruthFractions truth_fractions(const GroundTruth& truth, std::size_t draws = 1000000, std::uint64_t seed = 7) {
  if (draws < 2) throw ArgumentError("truth_fractions: need at least 2 draws");
  Rng rng(derive_seed(seed, 99));
  const std::size_t p = truth.features();
  const std::size_t t = truth.term_labels.size();
  // Per feature, running sums for each component and for the total.
  std::vector<double> sum(p * (t + 1), 0.0), sumsq(p * (t + 1), 0.0);
  std::vector<double> shift(p * (t + 1), 0.0);
  for (std::size_t s = 0; s < draws; ++s) {
    const auto x = draw_inputs(truth.id, rng);
    for (std::size_t j = 0; j < p; ++j) {
      double total = 0.0;
      for (std::size_t k = 0; k <= t; ++k) {
        double v;
        if (k < t) {
          const auto& f = truth.components[j][k];
          v = f ? f(x) : 0.0;
          total += v;
        } else {
          v = total;
        }
        const std::size_t at = j * (t + 1) + k;
        if (s == 0) shift[at] = v;  // shifted sums for numerical stability
        const double d = v - shift[at];
        sum[at] += d;
        sumsq[at] += d * d;
      }
    }
  }
  TruthFractions out;
  out.term_labels = truth.term_labels;
  const double n = static_cast<double>(draws);
  const double noise_var = truth.noise * truth.noise;
  for (std::size_t j = 0; j < p; ++j) {
    auto var = [&](std::size_t k) {
      const std::size_t at = j * (t + 1) + k;
      const double mean = sum[at] / n;
      return std::max(0.0, sumsq[at] / n - mean * mean);
    };
    const double denom = var(t) + noise_var;
    std::vector<double> fr;
    for (std::size_t k = 0; k < t; ++k) fr.push_back(denom > 0 ? var(k) / denom : 0.0);
    out.fractions.push_back(std::move(fr));
    out.noise_fraction.push_back(denom > 0 ? noise_var / denom : 0.0);
  }
  return out;
}

}  // namespace nd::synth
