#pragma once

#include <charconv>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nd/app/tabular.hpp"
#include "nd/app/toml.hpp"
#include "nd/constraints/constraint_set.hpp"
#include "nd/core/errors.hpp"
#include "nd/core/format.hpp"
#include "nd/synth/generators.hpp"
#include "nd/vi/trainer.hpp"

namespace nd::app {

struct RunConfig {
  std::string subcommand;
  vi::TrainConfig train;
  // [data]
  std::string data_path;      // CSV input; empty selects the synthetic generator
  std::string covariates;     // "name:kind,..." for CSV input
  std::string generator = "fig4_panel";
  Eigen::Index n = 500;
  double noise = 0.05;
  bool standardize = true;
  std::string truth_path;     // ground truth for `score`
  std::string report_path;    // report for `score`
  // [output]
  std::string out = "out";
  int trace_every = 500;
  bool svg = true;
  // traces
  bool traces_adam = false;
  int traces_grid = 16;
};

/// One configurable field: TOML table + key, and the identically named CLI flag.
struct ConfigField {
  std::string table;
  std::string key;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

namespace detail {

template <typename T>
T parse_integral(const std::string& key, const std::string& s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ConfigError("field '" + key + "' expects an integer, got '" + s + "'");
  return v;
}

inline double parse_real(const std::string& key, const std::string& s) {
  const auto v = parse_number(s);
  if (!v) throw ConfigError("field '" + key + "' expects a number, got '" + s + "'");
  return *v;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("field '" + key + "' expects true or false, got '" + s + "'");
}

inline std::vector<Eigen::Index> parse_sizes(const std::string& key, const std::string& s) {
  std::vector<Eigen::Index> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto v = parse_integral<Eigen::Index>(key, trim(item));
    if (v < 1) throw ConfigError("field '" + key + "' expects positive layer widths");
    out.push_back(v);
  }
  return out;
}

template <typename T>
std::string int_text(T v) {
  return std::to_string(v);
}

}  // namespace detail

inline std::vector<ConfigField> config_fields() {
  using detail::parse_bool;
  using detail::parse_integral;
  using detail::parse_real;
  std::vector<ConfigField> f;
  auto add = [&](std::string table, std::string key, std::string help,
                 std::function<void(RunConfig&, const std::string&)> set,
                 std::function<std::string(const RunConfig&)> get) {
    f.push_back({std::move(table), std::move(key), std::move(help), std::move(set), std::move(get)});
  };
  add("train", "seed", "random seed",
      [](RunConfig& c, const std::string& s) { c.train.seed = parse_integral<std::uint64_t>("seed", s); },
      [](const RunConfig& c) { return detail::int_text(c.train.seed); });
  add("train", "iterations", "optimisation steps",
      [](RunConfig& c, const std::string& s) { c.train.iterations = parse_integral<int>("iterations", s); },
      [](const RunConfig& c) { return detail::int_text(c.train.iterations); });
  add("train", "batch_size", "minibatch size, 0 for automatic",
      [](RunConfig& c, const std::string& s) { c.train.batch_size = parse_integral<int>("batch_size", s); },
      [](const RunConfig& c) { return detail::int_text(c.train.batch_size); });
  add("train", "lr", "Adam learning rate",
      [](RunConfig& c, const std::string& s) { c.train.adam.learning_rate = parse_real("lr", s); },
      [](const RunConfig& c) { return fmt_num(c.train.adam.learning_rate); });
  add("train", "lr_final", "final learning rate of a linear decay, 0 disables",
      [](RunConfig& c, const std::string& s) { c.train.lr_final = parse_real("lr_final", s); },
      [](const RunConfig& c) { return fmt_num(c.train.lr_final); });
  add("train", "variant", "linear | nd_unconstrained | nd_constrained | cvae",
      [](RunConfig& c, const std::string& s) { c.train.variant = vi::variant_from_string(s); },
      [](const RunConfig& c) { return std::string(vi::to_string(c.train.variant)); });
  add("train", "latent_dim", "dimension of z",
      [](RunConfig& c, const std::string& s) { c.train.latent_dim = parse_integral<int>("latent_dim", s); },
      [](const RunConfig& c) { return detail::int_text(c.train.latent_dim); });
  add("train", "hidden", "hidden layer widths, comma separated",
      [](RunConfig& c, const std::string& s) { c.train.hidden = detail::parse_sizes("hidden", s); },
      [](const RunConfig& c) {
        std::string out;
        for (std::size_t k = 0; k < c.train.hidden.size(); ++k)
          out += (k ? "," : "") + std::to_string(c.train.hidden[k]);
        return out;
      });
  add("train", "activation", "identity | relu | softplus | tanh",
      [](RunConfig& c, const std::string& s) { c.train.activation = nn::activation_from_string(s); },
      [](const RunConfig& c) { return std::string(nn::to_string(c.train.activation)); });
  add("train", "max_order", "highest interaction order",
      [](RunConfig& c, const std::string& s) { c.train.max_order = parse_integral<int>("max_order", s); },
      [](const RunConfig& c) { return detail::int_text(c.train.max_order); });
  add("train", "encoder_uses_covariates", "feed c to the encoder",
      [](RunConfig& c, const std::string& s) { c.train.encoder_uses_covariates = parse_bool("encoder_uses_covariates", s); },
      [](const RunConfig& c) { return std::string(c.train.encoder_uses_covariates ? "true" : "false"); });
  add("train", "use_masks", "learn relaxed-Bernoulli sparsity masks",
      [](RunConfig& c, const std::string& s) { c.train.use_masks = parse_bool("use_masks", s); },
      [](const RunConfig& c) { return std::string(c.train.use_masks ? "true" : "false"); });
  add("train", "mask_prior", "prior inclusion probability of a mask",
      [](RunConfig& c, const std::string& s) { c.train.mask_prior = parse_real("mask_prior", s); },
      [](const RunConfig& c) { return fmt_num(c.train.mask_prior); });
  add("train", "temperature", "relaxation temperature",
      [](RunConfig& c, const std::string& s) {
        c.train.temperature = parse_real("temperature", s);
        c.train.temperature_final = c.train.temperature;
      },
      [](const RunConfig& c) { return fmt_num(c.train.temperature); });
  add("train", "temperature_final", "annealed final temperature",
      [](RunConfig& c, const std::string& s) { c.train.temperature_final = parse_real("temperature_final", s); },
      [](const RunConfig& c) { return fmt_num(c.train.temperature_final); });
  add("train", "latent_range", "latent integration domain [-r, r]",
      [](RunConfig& c, const std::string& s) { c.train.latent_range = parse_real("latent_range", s); },
      [](const RunConfig& c) { return fmt_num(c.train.latent_range); });
  add("train", "restarts", "independent initialisations ranked by ELBO",
      [](RunConfig& c, const std::string& s) { c.train.restarts = parse_integral<int>("restarts", s); },
      [](const RunConfig& c) { return detail::int_text(c.train.restarts); });
  add("train", "restart_iterations", "training steps per restart before ranking",
      [](RunConfig& c, const std::string& s) { c.train.restart_iterations = parse_integral<int>("restart_iterations", s); },
      [](const RunConfig& c) { return detail::int_text(c.train.restart_iterations); });
  add("train", "log_every", "log interval in iterations",
      [](RunConfig& c, const std::string& s) { c.train.log_every = parse_integral<int>("log_every", s); },
      [](const RunConfig& c) { return detail::int_text(c.train.log_every); });

  add("constraints", "method", "penalty | bdmm | mdmm",
      [](RunConfig& c, const std::string& s) { c.train.constraints.method = constraints::method_from_string(s); },
      [](const RunConfig& c) { return std::string(constraints::to_string(c.train.constraints.method)); });
  add("constraints", "grid_nodes", "trapezoid nodes per coordinate",
      [](RunConfig& c, const std::string& s) { c.train.constraints.grid_nodes = parse_integral<int>("grid_nodes", s); },
      [](const RunConfig& c) { return detail::int_text(c.train.constraints.grid_nodes); });
  add("constraints", "eta", "multiplier step size",
      [](RunConfig& c, const std::string& s) { c.train.constraints.eta = parse_real("eta", s); },
      [](const RunConfig& c) { return fmt_num(c.train.constraints.eta); });
  add("constraints", "c0", "initial penalty weight",
      [](RunConfig& c, const std::string& s) { c.train.constraints.schedule.c0 = parse_real("c0", s); },
      [](const RunConfig& c) { return fmt_num(c.train.constraints.schedule.c0); });
  add("constraints", "c_growth", "penalty growth factor per schedule step",
      [](RunConfig& c, const std::string& s) { c.train.constraints.schedule.growth = parse_real("c_growth", s); },
      [](const RunConfig& c) { return fmt_num(c.train.constraints.schedule.growth); });
  add("constraints", "c_every", "multiplier updates per schedule step",
      [](RunConfig& c, const std::string& s) { c.train.constraints.schedule.every = parse_integral<int>("c_every", s); },
      [](const RunConfig& c) { return detail::int_text(c.train.constraints.schedule.every); });
  add("constraints", "c_max", "penalty weight cap",
      [](RunConfig& c, const std::string& s) { c.train.constraints.schedule.c_max = parse_real("c_max", s); },
      [](const RunConfig& c) { return fmt_num(c.train.constraints.schedule.c_max); });
  add("constraints", "epsilon", "tolerance on max |g|",
      [](RunConfig& c, const std::string& s) { c.train.constraints.epsilon = parse_real("epsilon", s); },
      [](const RunConfig& c) { return fmt_num(c.train.constraints.epsilon); });
  add("constraints", "estimator", "quadrature | monte_carlo",
      [](RunConfig& c, const std::string& s) {
        if (s == "quadrature")
          c.train.estimator = constraints::EstimatorKind::Quadrature;
        else if (s == "monte_carlo")
          c.train.estimator = constraints::EstimatorKind::MonteCarlo;
        else
          throw ConfigError("unknown estimator '" + s + "'");
      },
      [](const RunConfig& c) {
        return std::string(c.train.estimator == constraints::EstimatorKind::Quadrature ? "quadrature" : "monte_carlo");
      });
  add("constraints", "mc_samples", "Monte Carlo draws per conditioning node",
      [](RunConfig& c, const std::string& s) { c.train.mc_samples = parse_integral<int>("mc_samples", s); },
      [](const RunConfig& c) { return detail::int_text(c.train.mc_samples); });
  add("constraints", "optimizer", "traces only: gd | adam",
      [](RunConfig& c, const std::string& s) {
        if (s != "gd" && s != "adam") throw ConfigError("optimizer must be gd or adam");
        c.traces_adam = s == "adam";
      },
      [](const RunConfig& c) { return std::string(c.traces_adam ? "adam" : "gd"); });
  add("constraints", "trace_grid_nodes", "traces only: grid nodes per axis",
      [](RunConfig& c, const std::string& s) { c.traces_grid = parse_integral<int>("trace_grid_nodes", s); },
      [](const RunConfig& c) { return detail::int_text(c.traces_grid); });

  add("data", "data", "input CSV path; empty uses the synthetic generator",
      [](RunConfig& c, const std::string& s) { c.data_path = s; }, [](const RunConfig& c) { return c.data_path; });
  add("data", "covariates", "covariate columns as name:continuous|binary, comma separated",
      [](RunConfig& c, const std::string& s) { c.covariates = s; }, [](const RunConfig& c) { return c.covariates; });
  add("data", "generator", "fig1_toy | fig4_panel | batch2d",
      [](RunConfig& c, const std::string& s) {
        synth::generator_from_string(s);
        c.generator = s;
      },
      [](const RunConfig& c) { return c.generator; });
  add("data", "n", "synthetic sample count",
      [](RunConfig& c, const std::string& s) { c.n = parse_integral<Eigen::Index>("n", s); },
      [](const RunConfig& c) { return detail::int_text(c.n); });
  add("data", "noise", "synthetic noise standard deviation",
      [](RunConfig& c, const std::string& s) { c.noise = parse_real("noise", s); },
      [](const RunConfig& c) { return fmt_num(c.noise); });
  add("data", "standardize", "z-score features and continuous covariates",
      [](RunConfig& c, const std::string& s) { c.standardize = parse_bool("standardize", s); },
      [](const RunConfig& c) { return std::string(c.standardize ? "true" : "false"); });
  add("data", "truth", "ground-truth JSON for score",
      [](RunConfig& c, const std::string& s) { c.truth_path = s; }, [](const RunConfig& c) { return c.truth_path; });
  add("data", "report", "variance report JSON for score",
      [](RunConfig& c, const std::string& s) { c.report_path = s; }, [](const RunConfig& c) { return c.report_path; });

  add("output", "out", "output directory", [](RunConfig& c, const std::string& s) { c.out = s; },
      [](const RunConfig& c) { return c.out; });
  add("output", "trace_every", "trace recording interval",
      [](RunConfig& c, const std::string& s) { c.trace_every = parse_integral<int>("trace_every", s); },
      [](const RunConfig& c) { return detail::int_text(c.trace_every); });
  add("output", "svg", "write SVG plots",
      [](RunConfig& c, const std::string& s) { c.svg = parse_bool("svg", s); },
      [](const RunConfig& c) { return std::string(c.svg ? "true" : "false"); });
  return f;
}

/// Applies a parsed TOML document; unknown tables or keys are errors.
inline void apply_toml(RunConfig& cfg, const TomlDocument& doc, const std::vector<ConfigField>& fields) {
  for (const auto& [table, entries] : doc) {
    if (table.empty() && !entries.empty())
      throw ConfigError("config keys must live in [train], [constraints], [data] or [output]");
    for (const auto& [key, value] : entries) {
      const ConfigField* match = nullptr;
      for (const auto& f : fields)
        if (f.table == table && f.key == key) match = &f;
      if (!match) throw ConfigError("unknown config key [" + table + "] " + key);
      match->set(cfg, value.as_flag());
    }
  }
}

inline std::vector<CovariateSpec> parse_covariates(const std::string& s) {
  std::vector<CovariateSpec> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    const auto colon = item.find(':');
    CovariateSpec c;
    c.name = item.substr(0, colon);
    c.kind = colon == std::string::npos ? decomp::CoordinateKind::Continuous
                                        : decomp::coordinate_kind_from_string(item.substr(colon + 1));
    if (c.name.empty()) throw ConfigError("empty covariate name in '" + s + "'");
    out.push_back(c);
  }
  return out;
}

/// Every field with its effective value, grouped by table.
inline nlohmann::json config_echo(const RunConfig& cfg, const std::vector<ConfigField>& fields) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : fields) j[f.table][f.key] = f.get(cfg);
  return j;
}

}  // namespace nd::app
