// nd: fit, inspect and score neural decompositions from the command line.

#include <cstdlib>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "nd/app/commands.hpp"

namespace {

using nd::app::RunConfig;

struct Subcommand {
  const char* name;
  const char* help;
  int (*run)(const RunConfig&, const std::vector<nd::app::ConfigField>&, std::ostream&);
};

const Subcommand kSubcommands[] = {
    {"fit", "fit a decomposition to CSV or synthetic data", nd::app::cmd_fit},
    {"traces", "record constraint residual traces for penalty, BDMM and MDMM", nd::app::cmd_traces},
    {"batch2d", "fit the two-dimensional batch-correction example and measure mixing", nd::app::cmd_batch2d},
    {"simulate", "write a synthetic dataset with its ground truth", nd::app::cmd_simulate},
    {"score", "compare a report with ground-truth variance fractions", nd::app::cmd_score},
};

// Precedence: preset < --config < ND_SEED < command-line flags.
RunConfig resolve(const std::string& sub, const std::string& config_path,
                  const std::map<std::string, std::string>& flags, const std::vector<nd::app::ConfigField>& fields) {
  RunConfig cfg = nd::app::preset(sub);
  if (!config_path.empty()) nd::app::apply_toml(cfg, nd::app::parse_toml_file(config_path), fields);
  auto set = [&](const std::string& key, const std::string& value) {
    for (const auto& f : fields)
      if (f.key == key) return f.set(cfg, value);
  };
  if (const char* env = std::getenv("ND_SEED"); env && *env) set("seed", env);
  for (const auto& [key, value] : flags) set(key, value);
  cfg.train.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  const auto fields = nd::app::config_fields();
  CLI::App app{"Neural decomposition: additive, identifiable latent variable models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "nd 1.0.0");

  std::string config_path;
  std::map<std::string, std::map<std::string, std::string>> flags;
  for (const auto& s : kSubcommands) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    cmd->add_option("--config", config_path, "TOML file with [train], [constraints], [data] and [output] tables")
        ->check(CLI::ExistingFile);
    for (const auto& f : fields)
      cmd->add_option("--" + f.key, flags[s.name][f.key], "[" + f.table + "] " + f.help);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : nd::app::kExitUsage;
  }

  for (const auto& s : kSubcommands) {
    auto* cmd = app.get_subcommand(s.name);
    if (!cmd->parsed()) continue;
    std::map<std::string, std::string> given;
    for (const auto& f : fields)
      if (cmd->count("--" + f.key) > 0) given[f.key] = flags[s.name][f.key];
    try {
      const auto cfg = resolve(s.name, config_path, given, fields);
      return s.run(cfg, fields, std::cout);
    } catch (const nd::ConfigError& e) {
      std::cerr << "nd " << s.name << ": " << e.what() << "\n";
      return nd::app::kExitUsage;
    } catch (const nd::NumericError& e) {
      std::cerr << "nd " << s.name << ": " << e.what() << "\n";
      return nd::app::kExitDivergence;
    } catch (const nd::Error& e) {
      std::cerr << "nd " << s.name << ": " << e.what() << "\n";
      return nd::app::kExitData;
    }
  }
  return nd::app::kExitUsage;
}
