#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "nd/constraints/constraint_set.hpp"
#include "nd/core/errors.hpp"
#include "nd/decomp/model.hpp"
#include "nd/vi/elbo.hpp"

namespace nd::app {

inline constexpr int kBundleFormatVersion = 1;

namespace detail {

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  std::vector<double> data(m.data(), m.data() + m.size());
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Eigen::MatrixXd matrix_from(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>(), cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw DataError("bundle matrix has inconsistent shape");
  return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

inline Eigen::VectorXd vector_from(const nlohmann::json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

inline nlohmann::json net_json(const nn::DenseNet& net) {
  auto layers = nlohmann::json::array();
  for (const auto& l : net.layers())
    layers.push_back({{"weight", matrix_json(l.weight)},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())},
                      {"activation", std::string(nn::to_string(l.activation))}});
  return layers;
}

inline nn::DenseNet net_from(const nlohmann::json& j) {
  std::vector<nn::DenseLayer> layers;
  for (const auto& l : j) {
    nn::DenseLayer d;
    d.weight = matrix_from(l.at("weight"));
    d.bias = vector_from(l.at("bias"));
    d.activation = nn::activation_from_string(l.at("activation").get<std::string>());
    layers.push_back(std::move(d));
  }
  return nn::DenseNet(std::move(layers));
}

}  // namespace detail

/// Model parameters plus constraint multipliers and penalty state.
inline nlohmann::json bundle_to_json(const vi::VaeModel& m, const constraints::ConstraintSet* cs = nullptr) {
  using detail::matrix_json;
  nlohmann::json j;
  j["format_version"] = kBundleFormatVersion;
  auto inputs = nlohmann::json::array();
  for (const auto& c : m.decoder.inputs)
    inputs.push_back({{"name", c.name}, {"kind", std::string(decomp::to_string(c.kind))}, {"lo", c.lo}, {"hi", c.hi}});
  j["decoder"]["inputs"] = inputs;
  j["decoder"]["intercept"] = std::vector<double>(m.decoder.intercept.data(),
                                                  m.decoder.intercept.data() + m.decoder.intercept.size());
  j["decoder"]["log_noise"] = std::vector<double>(m.decoder.log_noise.data(),
                                                  m.decoder.log_noise.data() + m.decoder.log_noise.size());
  auto terms = nlohmann::json::array();
  for (const auto& t : m.decoder.terms) terms.push_back({{"coords", t.index.coords()}, {"net", detail::net_json(t.net)}});
  j["decoder"]["terms"] = terms;
  j["encoder"] = {{"latent_dim", m.encoder.latent_dim},
                  {"features", m.encoder.features},
                  {"covariates", m.encoder.covariates},
                  {"uses_covariates", m.encoder.uses_covariates},
                  {"net", detail::net_json(m.encoder.net)}};
  j["masks"] = {{"enabled", m.use_masks},
                {"logits", matrix_json(m.masks.logits)},
                {"prior", m.masks.prior},
                {"temperature", m.masks.temperature}};
  if (cs) {
    auto mult = nlohmann::json::array();
    for (std::size_t k = 0; k < cs->size(); ++k)
      mult.push_back({{"label", cs->constraints[k].label}, {"lambda", matrix_json(cs->multipliers[k])}});
    j["constraints"] = {{"method", std::string(constraints::to_string(cs->method))},
                        {"penalty", cs->penalty},
                        {"eta", cs->eta},
                        {"epsilon", cs->epsilon},
                        {"updates", cs->updates},
                        {"multipliers", mult}};
  }
  return j;
}

inline vi::VaeModel bundle_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kBundleFormatVersion)
      throw DataError("unsupported bundle format_version " + std::to_string(version));
    vi::VaeModel m;
    const auto& d = j.at("decoder");
    for (const auto& c : d.at("inputs"))
      m.decoder.inputs.push_back({c.at("name").get<std::string>(),
                                  decomp::coordinate_kind_from_string(c.at("kind").get<std::string>()),
                                  c.at("lo").get<double>(), c.at("hi").get<double>()});
    m.decoder.intercept = detail::vector_from(d.at("intercept"));
    m.decoder.log_noise = detail::vector_from(d.at("log_noise"));
    for (const auto& t : d.at("terms"))
      m.decoder.terms.push_back({decomp::TermIndex(t.at("coords").get<std::vector<int>>(), m.decoder.input_dim()),
                                 detail::net_from(t.at("net"))});
    m.decoder.validate();
    const auto& e = j.at("encoder");
    m.encoder.latent_dim = e.at("latent_dim").get<int>();
    m.encoder.features = e.at("features").get<Eigen::Index>();
    m.encoder.covariates = e.at("covariates").get<Eigen::Index>();
    m.encoder.uses_covariates = e.at("uses_covariates").get<bool>();
    m.encoder.net = detail::net_from(e.at("net"));
    const auto& mk = j.at("masks");
    m.use_masks = mk.at("enabled").get<bool>();
    m.masks.logits = detail::matrix_from(mk.at("logits"));
    m.masks.prior = mk.at("prior").get<double>();
    m.masks.temperature = mk.at("temperature").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model bundle: ") + e.what());
  }
}

}  // namespace nd::app
