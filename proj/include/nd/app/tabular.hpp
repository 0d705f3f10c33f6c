#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <tuple>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "nd/core/errors.hpp"
#include "nd/core/format.hpp"
#include "nd/decomp/model.hpp"

namespace nd::app {

struct CovariateSpec {
  std::string name;
  decomp::CoordinateKind kind = decomp::CoordinateKind::Continuous;
};

/// Y and C are stored one row per column (P x N and dc x N) like every batch in the library.
struct TabularDataset {
  Eigen::MatrixXd y;
  Eigen::MatrixXd c;
  std::vector<std::string> feature_names;
  std::vector<CovariateSpec> covariates;
  Eigen::VectorXd feature_mean, feature_scale;
  Eigen::VectorXd covariate_mean, covariate_scale;  // identity (0, 1) for binary columns
  std::vector<std::vector<std::string>> binary_levels;  // raw labels mapped to 0 and 1; empty for continuous
  std::size_t rejected_rows = 0;

  Eigen::Index rows() const { return y.cols(); }

  Eigen::MatrixXd raw_features() const {
    return ((y.array().colwise() * feature_scale.array()).colwise() + feature_mean.array()).matrix();
  }
  Eigen::MatrixXd raw_covariates() const {
    return ((c.array().colwise() * covariate_scale.array()).colwise() + covariate_mean.array()).matrix();
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  std::string out(s.substr(b, e - b + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

inline std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

/// Standardises each row in place; returns (mean, scale). Constant rows keep scale 1.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> standardize_rows(Eigen::MatrixXd& m) {
  Eigen::VectorXd mean = m.rowwise().mean();
  Eigen::VectorXd scale(m.rows());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double var = (m.row(r).array() - mean[r]).square().mean();
    scale[r] = var > 0.0 ? std::sqrt(var) : 1.0;
    m.row(r) = (m.row(r).array() - mean[r]) / scale[r];
  }
  return {mean, scale};
}

}  // namespace detail

/// Parses a header-first CSV. Declared covariate columns become C, all others Y.
/// Rows with an empty cell are dropped and counted in `rejected_rows`.
inline TabularDataset ingest_csv(std::istream& in, const std::vector<CovariateSpec>& covariates,
                                 bool standardize = true) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!detail::trim(line).empty()) {
      header = detail::split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw DataError("no data rows");

  std::map<std::string, std::size_t> column;
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k].empty()) throw DataError("empty column name at position " + std::to_string(k + 1));
    if (!column.emplace(header[k], k).second) throw DataError("duplicate column '" + header[k] + "'");
  }
  std::vector<std::size_t> cov_cols;
  for (const auto& cv : covariates) {
    if (cv.kind == decomp::CoordinateKind::Latent) throw ConfigError("covariate '" + cv.name + "' cannot be latent");
    const auto it = column.find(cv.name);
    if (it == column.end()) throw DataError("missing column '" + cv.name + "'");
    cov_cols.push_back(it->second);
  }
  std::vector<std::size_t> feat_cols;
  for (std::size_t k = 0; k < header.size(); ++k)
    if (std::find(cov_cols.begin(), cov_cols.end(), k) == cov_cols.end()) feat_cols.push_back(k);
  if (feat_cols.empty()) throw DataError("no feature columns");

  TabularDataset ds;
  ds.covariates = covariates;
  for (auto k : feat_cols) ds.feature_names.push_back(header[k]);

  std::vector<std::vector<double>> feats;
  std::vector<std::vector<std::string>> covs;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("row " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " cells, found " + std::to_string(cells.size()));
    if (std::any_of(cells.begin(), cells.end(), [](const std::string& s) { return s.empty(); })) {
      ++ds.rejected_rows;
      continue;
    }
    std::vector<double> f;
    for (auto k : feat_cols) {
      const auto v = detail::parse_number(cells[k]);
      if (!v)
        throw DataError("non-numeric cell at row " + std::to_string(line_no) + ", column '" + header[k] + "': '" +
                        cells[k] + "'");
      f.push_back(*v);
    }
    std::vector<std::string> cv;
    for (std::size_t q = 0; q < cov_cols.size(); ++q) {
      const auto& cell = cells[cov_cols[q]];
      if (covariates[q].kind == decomp::CoordinateKind::Continuous && !detail::parse_number(cell))
        throw DataError("non-numeric cell at row " + std::to_string(line_no) + ", column '" + covariates[q].name +
                        "': '" + cell + "'");
      cv.push_back(cell);
    }
    feats.push_back(std::move(f));
    covs.push_back(std::move(cv));
  }
  if (feats.empty()) throw DataError("no data rows");

  const auto n = static_cast<Eigen::Index>(feats.size());
  ds.y.resize(static_cast<Eigen::Index>(feat_cols.size()), n);
  ds.c.resize(static_cast<Eigen::Index>(cov_cols.size()), n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < ds.y.rows(); ++j)
      ds.y(j, i) = feats[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];

  ds.covariate_mean = Eigen::VectorXd::Zero(ds.c.rows());
  ds.covariate_scale = Eigen::VectorXd::Ones(ds.c.rows());
  ds.binary_levels.resize(cov_cols.size());
  for (std::size_t q = 0; q < cov_cols.size(); ++q) {
    const auto r = static_cast<Eigen::Index>(q);
    if (covariates[q].kind == decomp::CoordinateKind::Binary) {
      std::vector<std::string> levels;
      for (const auto& row : covs) {
        if (std::find(levels.begin(), levels.end(), row[q]) == levels.end()) levels.push_back(row[q]);
        if (levels.size() > 2) break;
      }
      const bool numeric = std::all_of(levels.begin(), levels.end(),
                                       [](const std::string& v) { return detail::parse_number(v).has_value(); });
      if (numeric)
        std::sort(levels.begin(), levels.end(), [](const std::string& a, const std::string& b) {
          return *detail::parse_number(a) < *detail::parse_number(b);
        });
      else
        std::sort(levels.begin(), levels.end());
      if (levels.size() != 2)
        throw DataError("binary column '" + covariates[q].name + "' has " +
                        (levels.size() < 2 ? "a single level" : "more than two levels"));
      for (Eigen::Index i = 0; i < n; ++i) ds.c(r, i) = covs[static_cast<std::size_t>(i)][q] == levels[0] ? 0.0 : 1.0;
      ds.binary_levels[q] = levels;
    } else {
      for (Eigen::Index i = 0; i < n; ++i) ds.c(r, i) = *detail::parse_number(covs[static_cast<std::size_t>(i)][q]);
    }
  }

  if (standardize) {
    std::tie(ds.feature_mean, ds.feature_scale) = detail::standardize_rows(ds.y);
    for (std::size_t q = 0; q < cov_cols.size(); ++q) {
      if (covariates[q].kind != decomp::CoordinateKind::Continuous) continue;
      const auto r = static_cast<Eigen::Index>(q);
      Eigen::MatrixXd row = ds.c.row(r);
      auto [m, s] = detail::standardize_rows(row);
      ds.c.row(r) = row;
      ds.covariate_mean[r] = m[0];
      ds.covariate_scale[r] = s[0];
    }
  } else {
    ds.feature_mean = Eigen::VectorXd::Zero(ds.y.rows());
    ds.feature_scale = Eigen::VectorXd::Ones(ds.y.rows());
  }
  return ds;
}

inline TabularDataset ingest_csv(const std::string& path, const std::vector<CovariateSpec>& covariates,
                                 bool standardize = true) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return ingest_csv(in, covariates, standardize);
}

/// Header then one row per column of the given blocks (each k_b x N), LF line endings.
inline void write_matrix_csv(std::ostream& os, const std::vector<std::string>& header,
                             const std::vector<const Eigen::MatrixXd*>& blocks) {
  Eigen::Index rows = 0, n = -1;
  for (const auto* b : blocks) {
    rows += b->rows();
    if (n >= 0 && b->cols() != n) throw ShapeError("write_matrix_csv: blocks differ in length");
    n = b->cols();
  }
  if (static_cast<Eigen::Index>(header.size()) != rows) throw ShapeError("write_matrix_csv: header width mismatch");
  for (std::size_t k = 0; k < header.size(); ++k) os << (k ? "," : "") << header[k];
  os << '\n';
  for (Eigen::Index i = 0; i < std::max<Eigen::Index>(n, 0); ++i) {
    bool first = true;
    for (const auto* b : blocks)
      for (Eigen::Index r = 0; r < b->rows(); ++r) {
        os << (first ? "" : ",") << fmt_num((*b)(r, i), 17);
        first = false;
      }
    os << '\n';
  }
}

}  // namespace nd::app
