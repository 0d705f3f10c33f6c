#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "nd/core/errors.hpp"
#include "nd/core/random.hpp"
#include "nd/decomp/variance.hpp"
#include "nd/synth/generators.hpp"

namespace nd::app {

/// Cross-validated accuracy of a k-nearest-neighbour classifier predicting
/// `labels` from the columns of `z`. Folds come from a seeded shuffle; votes
/// are tied towards the smaller label.
inline double knn_accuracy(const Eigen::MatrixXd& z, const std::vector<int>& labels, int k = 5, int folds = 5,
                           std::uint64_t seed = 1) {
  const auto n = z.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw ShapeError("knn_accuracy: one label per column required");
  if (k < 1 || folds < 2) throw ArgumentError("knn_accuracy: k >= 1 and folds >= 2 required");
  if (n < folds) throw ArgumentError("knn_accuracy: fewer points than folds");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(derive_seed(seed, 61));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (std::size_t r = 0; r < order.size(); ++r) fold[static_cast<std::size_t>(order[r])] = static_cast<int>(r % folds);

  Eigen::Index correct = 0;
  std::vector<std::pair<double, Eigen::Index>> dist;
  for (Eigen::Index i = 0; i < n; ++i) {
    dist.clear();
    for (Eigen::Index j = 0; j < n; ++j)
      if (fold[static_cast<std::size_t>(j)] != fold[static_cast<std::size_t>(i)])
        dist.emplace_back((z.col(i) - z.col(j)).squaredNorm(), j);
    const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
    std::map<int, int> votes;
    for (std::size_t q = 0; q < kk; ++q) ++votes[labels[static_cast<std::size_t>(dist[q].second)]];
    int best = 0, best_votes = -1;
    for (const auto& [label, v] : votes)
      if (v > best_votes) best = label, best_votes = v;
    if (best == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

namespace detail {
inline Eigen::VectorXd ranks(const Eigen::VectorXd& v) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return v[a] < v[b]; });
  Eigen::VectorXd r(v.size());
  for (std::size_t s = 0; s < idx.size();) {
    std::size_t e = s;
    while (e + 1 < idx.size() && v[idx[e + 1]] == v[idx[s]]) ++e;
    const double avg = 0.5 * static_cast<double>(s + e) + 1.0;
    for (std::size_t q = s; q <= e; ++q) r[idx[q]] = avg;
    s = e + 1;
  }
  return r;
}
}  // namespace detail

inline double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() < 2) throw ShapeError("pearson: need two equal-length series");
  const Eigen::ArrayXd da = a.array() - a.mean(), db = b.array() - b.mean();
  const double den = std::sqrt(da.square().sum() * db.square().sum());
  return den > 0.0 ? (da * db).sum() / den : 0.0;
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return pearson(detail::ranks(a), detail::ranks(b));
}

struct ScoreResult {
  std::vector<std::string> feature_names;
  std::vector<double> feature_error;  // sum over terms of |estimated - true|
  double mean_error = 0.0;
  double max_error = 0.0;
  std::vector<std::string> latent_match;  // truth latent matched to each report latent, in report order
  std::vector<double> spearman;       // per latent coordinate, when generating z is known
};

namespace detail {

inline std::vector<std::string> split_label(const std::string& label) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto colon = label.find(':', start);
    parts.push_back(label.substr(start, colon - start));
    if (colon == std::string::npos) return parts;
    start = colon + 1;
  }
}

/// Renames coordinates inside a term label and rewrites it in the truth's coordinate order.
inline std::string relabel(const std::string& label, const std::map<std::string, std::string>& rename,
                           const std::vector<std::string>& order) {
  auto parts = split_label(label);
  for (auto& p : parts)
    if (auto it = rename.find(p); it != rename.end()) p = it->second;
  auto rank = [&](const std::string& p) {
    return std::find(order.begin(), order.end(), p) - order.begin();
  };
  std::stable_sort(parts.begin(), parts.end(), [&](const auto& a, const auto& b) { return rank(a) < rank(b); });
  std::string out;
  for (std::size_t k = 0; k < parts.size(); ++k) out += (k ? ":" : "") + parts[k];
  return out;
}

inline std::string join_labels(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + v[k];
  return s.empty() ? std::string("none") : s;
}

}  // namespace detail

/// Per-feature L1 distance between estimated and true term fractions, matching terms by label.
/// Latent coordinates are only identified up to relabelling, so every assignment of the
/// report's `latent` names onto themselves is tried and the smallest mean error kept.
inline ScoreResult score_against_truth(const decomp::VarianceReport& report, const synth::TruthFractions& truth,
                                       const std::vector<std::string>& latent = {}) {
  if (report.features.size() != truth.fractions.size())
    throw ShapeError("score: report has " + std::to_string(report.features.size()) + " features, truth has " +
                     std::to_string(truth.fractions.size()));
  std::vector<std::string> order;  // coordinate order from the truth's main effects
  for (const auto& l : truth.term_labels)
    if (l.find(':') == std::string::npos) order.push_back(l);

  std::vector<std::string> missing, extra;
  for (const auto& l : truth.term_labels)
    if (std::find(report.term_labels.begin(), report.term_labels.end(), l) == report.term_labels.end())
      missing.push_back(l);
  for (const auto& l : report.term_labels)
    if (std::find(truth.term_labels.begin(), truth.term_labels.end(), l) == truth.term_labels.end()) extra.push_back(l);
  if (!missing.empty() || !extra.empty())
    throw KeyError("score: term sets differ; missing from report: " + detail::join_labels(missing) +
                   "; not in truth: " + detail::join_labels(extra));

  std::optional<ScoreResult> best;
  std::vector<std::string> target = latent;
  std::sort(target.begin(), target.end());
  do {
    std::map<std::string, std::string> rename;
    for (std::size_t k = 0; k < latent.size(); ++k) rename[latent[k]] = target[k];
    std::vector<std::size_t> pos;  // report column of each truth term
    for (const auto& l : truth.term_labels) {
      std::size_t hit = report.term_labels.size();
      for (std::size_t r = 0; r < report.term_labels.size(); ++r)
        if (detail::relabel(report.term_labels[r], rename, order) == l) hit = r;
      pos.push_back(hit);
    }
    if (std::find(pos.begin(), pos.end(), report.term_labels.size()) != pos.end()) continue;

    ScoreResult s;
    s.feature_names = report.feature_names;
    s.latent_match = {target.begin(), target.end()};
    for (std::size_t k = 0; k < latent.size(); ++k) s.latent_match[k] = rename[latent[k]];
    for (std::size_t j = 0; j < report.features.size(); ++j) {
      double e = 0.0;
      for (std::size_t k = 0; k < truth.term_labels.size(); ++k)
        e += std::abs(report.features[j].fractions[pos[k]] - truth.fractions[j][k]);
      s.feature_error.push_back(e);
      s.max_error = std::max(s.max_error, e);
      s.mean_error += e;
    }
    if (!s.feature_error.empty()) s.mean_error /= static_cast<double>(s.feature_error.size());
    if (!best || s.mean_error < best->mean_error) best = std::move(s);
  } while (std::next_permutation(target.begin(), target.end()));
  return *best;
}

inline nlohmann::json truth_to_json(const synth::TruthFractions& t, const std::vector<std::string>& feature_names) {
  nlohmann::json j;
  j["terms"] = t.term_labels;
  j["features"] = nlohmann::json::array();
  for (std::size_t k = 0; k < t.fractions.size(); ++k)
    j["features"].push_back({{"name", k < feature_names.size() ? feature_names[k] : "y" + std::to_string(k + 1)},
                             {"fractions", t.fractions[k]},
                             {"noise_fraction", t.noise_fraction[k]}});
  return j;
}

inline synth::TruthFractions truth_from_json(const nlohmann::json& j) {
  try {
    synth::TruthFractions t;
    t.term_labels = j.at("terms").get<std::vector<std::string>>();
    for (const auto& f : j.at("features")) {
      t.fractions.push_back(f.at("fractions").get<std::vector<double>>());
      t.noise_fraction.push_back(f.at("noise_fraction").get<double>());
      if (t.fractions.back().size() != t.term_labels.size()) throw DataError("truth feature has wrong term count");
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed ground truth: ") + e.what());
  }
}

}  // namespace nd::app
