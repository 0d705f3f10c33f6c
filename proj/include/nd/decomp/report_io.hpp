#pragma once

#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "nd/core/errors.hpp"
#include "nd/core/format.hpp"
#include "nd/decomp/variance.hpp"

namespace nd::decomp {

/// feature,<term fractions...>,noise,residual  (residual as a fraction of total variance)
inline void write_report_csv(std::ostream& os, const VarianceReport& r) {
  os << "feature";
  for (const auto& l : r.term_labels) os << ',' << l;
  os << ",noise,residual\n";
  for (std::size_t j = 0; j < r.features.size(); ++j) {
    const auto& f = r.features[j];
    os << r.feature_names[j];
    for (double v : f.fractions) os << ',' << fmt_num(v);
    os << ',' << fmt_num(f.noise_fraction) << ',' << fmt_num(f.residual_fraction) << '\n';
  }
}

inline nlohmann::json report_to_json(const VarianceReport& r) {
  nlohmann::json j;
  j["terms"] = r.term_labels;
  j["features"] = nlohmann::json::array();
  for (std::size_t k = 0; k < r.features.size(); ++k) {
    const auto& f = r.features[k];
    j["features"].push_back({{"name", r.feature_names[k]},
                             {"term_variance", f.term_variance},
                             {"fractions", f.fractions},
                             {"noise_variance", f.noise_variance},
                             {"noise_fraction", f.noise_fraction},
                             {"total_variance", f.total_variance},
                             {"residual", f.residual},
                             {"residual_fraction", f.residual_fraction}});
  }
  return j;
}

inline VarianceReport report_from_json(const nlohmann::json& j) {
  try {
    VarianceReport r;
    r.term_labels = j.at("terms").get<std::vector<std::string>>();
    for (const auto& f : j.at("features")) {
      FeatureVariance fv;
      r.feature_names.push_back(f.at("name").get<std::string>());
      fv.term_variance = f.at("term_variance").get<std::vector<double>>();
      fv.fractions = f.at("fractions").get<std::vector<double>>();
      fv.noise_variance = f.at("noise_variance").get<double>();
      fv.noise_fraction = f.at("noise_fraction").get<double>();
      fv.total_variance = f.at("total_variance").get<double>();
      fv.residual = f.at("residual").get<double>();
      fv.residual_fraction = f.at("residual_fraction").get<double>();
      if (fv.fractions.size() != r.term_labels.size())
        throw DataError("report feature '" + r.feature_names.back() + "' has wrong term count");
      r.features.push_back(std::move(fv));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed variance report: ") + e.what());
  }
}

}  // namespace nd::decomp
