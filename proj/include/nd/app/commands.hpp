#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "nd/app/bundle.hpp"
#include "nd/app/metrics.hpp"
#include "nd/app/run_config.hpp"
#include "nd/app/svg.hpp"
#include "nd/app/tabular.hpp"
#include "nd/app/traces.hpp"
#include "nd/core/errors.hpp"
#include "nd/core/format.hpp"
#include "nd/decomp/report_io.hpp"
#include "nd/decomp/variance.hpp"
#include "nd/synth/generators.hpp"
#include "nd/vi/trainer.hpp"

namespace nd::app {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitTolerance = 2, kExitData = 3, kExitDivergence = 4 };

/// Settings shared by the synthetic experiments; the library defaults stay as documented in TrainConfig.
inline RunConfig preset(const std::string& subcommand) {
  RunConfig c;
  c.subcommand = subcommand;
  auto& t = c.train;
  t.iterations = 10000;
  t.adam.learning_rate = 3e-3;
  t.lr_final = 1e-4;
  t.restarts = 10;
  t.restart_iterations = 1000;
  t.log_every = 100;
  t.constraints.eta = 0.01;
  t.constraints.schedule.c0 = 0.1;
  t.constraints.schedule.every = 10;
  t.constraints.schedule.growth = 1.009;
  if (subcommand == "batch2d") {
    c.generator = "batch2d";
    t.latent_dim = 2;
    // at 3e-3 the two-latent decoder under-fits and the latent absorbs the batch shift
    t.adam.learning_rate = 0.01;
  }
  if (subcommand == "traces") {
    t.iterations = 100000;
    t.adam.learning_rate = 1e-3;
    t.constraints.eta = 0.01;
    t.constraints.schedule.c0 = 0.01;
  }
  return c;
}

/// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Collects output files, writes them under the output directory and lists them in the manifest.
class OutputDir {
 public:
  explicit OutputDir(const std::string& dir) : dir_(dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec || !std::filesystem::is_directory(dir_)) throw ConfigError("cannot create output directory '" + dir + "'");
  }

  void write(const std::string& name, const std::string& content) {
    const auto path = dir_ / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw ConfigError("write failed for '" + path.string() + "'");
    outputs_[name] = content_hash(content);
  }

  void add_input(const std::string& path) { inputs_[path] = content_hash(read_file(path)); }

  void finish(const RunConfig& cfg, const std::vector<ConfigField>& fields, const nlohmann::json& summary,
              const std::chrono::system_clock::time_point& started) {
    nlohmann::json m;
    m["subcommand"] = cfg.subcommand;
    m["config"] = config_echo(cfg, fields);
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    m["summary"] = summary;
    write("manifest.json", m.dump(2) + "\n");
    nlohmann::json meta;
    meta["started"] = iso_time(started);
    meta["finished"] = iso_time(std::chrono::system_clock::now());
    const auto path = dir_ / "meta.json";
    std::ofstream(path, std::ios::binary | std::ios::trunc) << meta.dump(2) << "\n";
  }

  const std::filesystem::path& path() const { return dir_; }

 private:
  static std::string iso_time(const std::chrono::system_clock::time_point& t) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  std::filesystem::path dir_;
  std::map<std::string, std::string> inputs_, outputs_;
};

/// Training data plus, for synthetic sources, the generating latents and ground truth.
struct LoadedData {
  vi::TrainingData train;
  TabularDataset table;
  std::optional<synth::SyntheticDataset> synthetic;
};

inline TabularDataset table_from_synthetic(const synth::SyntheticDataset& d, bool standardize) {
  std::ostringstream csv;
  std::vector<std::string> header{d.covariate_name};
  for (const auto& n : d.feature_names) header.push_back(n);
  write_matrix_csv(csv, header, {&d.c, &d.y});
  std::istringstream in(csv.str());
  return ingest_csv(in,
                    {{d.covariate_name, d.binary_covariate ? decomp::CoordinateKind::Binary
                                                          : decomp::CoordinateKind::Continuous}},
                    standardize);
}

inline LoadedData load_data(const RunConfig& cfg, OutputDir* out) {
  LoadedData ld;
  if (!cfg.data_path.empty()) {
    ld.table = ingest_csv(cfg.data_path, parse_covariates(cfg.covariates), cfg.standardize);
    if (out) out->add_input(cfg.data_path);
  } else {
    synth::SyntheticSpec spec;
    spec.id = synth::generator_from_string(cfg.generator);
    spec.n = cfg.n;
    spec.noise = cfg.noise;
    spec.seed = cfg.train.seed;
    ld.synthetic = synth::generate(spec);
    ld.table = table_from_synthetic(*ld.synthetic, cfg.standardize);
  }
  ld.train.y = ld.table.y;
  ld.train.c = ld.table.c;
  for (const auto& cv : ld.table.covariates) ld.train.covariates.push_back({cv.name, cv.kind, 0.0, 1.0});
  ld.train.feature_names = ld.table.feature_names;
  return ld;
}

inline std::string log_csv(const std::vector<vi::LogRow>& log) {
  std::ostringstream os;
  os << "iteration,elbo,recon,kl_z,kl_s,max_residual,c_t\n";
  for (const auto& r : log)
    os << r.iteration << ',' << fmt_num(r.elbo) << ',' << fmt_num(r.recon) << ',' << fmt_num(r.kl_z) << ','
       << fmt_num(r.kl_s) << ',' << fmt_num(r.max_residual) << ',' << fmt_num(r.penalty) << '\n';
  return os.str();
}

inline void write_trace_rows(std::ostream& os, const std::vector<constraints::TraceRow>& rows,
                             const std::string& method = "") {
  for (const auto& r : rows) {
    if (!method.empty()) os << method << ',';
    os << r.iteration << ',' << r.constraint << ',' << r.grid_index << ',' << r.feature << ',' << fmt_num(r.g) << ','
       << fmt_num(r.lambda) << ',' << fmt_num(r.c) << '\n';
  }
}

inline nlohmann::json tolerance_json(const vi::FitResult& res) {
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t k = 0; k < res.tolerance.per_constraint.size(); ++k)
    per.push_back({{"constraint", res.constraints.constraints[k].label}, {"max_abs", res.tolerance.per_constraint[k]}});
  return {{"epsilon", res.tolerance.epsilon},
          {"max_abs", res.tolerance.max_abs},
          {"passed", res.tolerance.passed},
          {"enforced", res.constrained},
          {"per_constraint", per}};
}

struct FitOutcome {
  vi::FitResult result;
  decomp::VarianceReport report;
  Eigen::MatrixXd posterior;  // dz x N
  LoadedData data;
  std::optional<ScoreResult> score;
  std::optional<double> mixing;
  int exit_code = kExitOk;
  nlohmann::json summary;
};

/// Shared pipeline of `fit` and `batch2d`: train, decompose, score, and write every artefact.
inline FitOutcome run_fit_pipeline(const RunConfig& cfg, const std::vector<ConfigField>& fields, bool mixing,
                                   std::ostream& log) {
  const auto started = std::chrono::system_clock::now();
  OutputDir out(cfg.out);
  FitOutcome o;
  o.data = load_data(cfg, &out);
  auto tc = cfg.train;
  tc.trace_every = cfg.trace_every;
  o.result = vi::fit(o.data.train, tc);
  const auto& res = o.result;

  o.posterior = vi::posterior_mean(res.model, o.data.train.y, o.data.train.c);
  const Eigen::MatrixXd reference = vi::decoder_inputs(o.posterior, o.data.train.c);
  o.report = decomp::term_variances(res.model.decoder, reference, nullptr, o.data.train.feature_names);
  if (res.model.use_masks) {
    const Eigen::MatrixXd probs = res.model.masks.logits.unaryExpr([](double u) { return sigmoid(u); });
    o.report = decomp::term_variances(res.model.decoder, reference, &probs, o.data.train.feature_names);
  }

  std::ostringstream report_csv;
  decomp::write_report_csv(report_csv, o.report);
  out.write("report.csv", report_csv.str());
  auto rj = decomp::report_to_json(o.report);
  rj["constraints"] = tolerance_json(res);
  rj["variant"] = std::string(vi::to_string(cfg.train.variant));
  rj["latent"] = nlohmann::json::array();
  for (const auto& in : res.model.decoder.inputs)
    if (in.kind == decomp::CoordinateKind::Latent) rj["latent"].push_back(in.name);

  o.summary["variant"] = std::string(vi::to_string(cfg.train.variant));
  o.summary["max_abs_residual"] = res.tolerance.max_abs;
  o.summary["tolerance_passed"] = res.tolerance.passed;
  o.summary["iterations_run"] = res.iterations_run;
  o.summary["final_elbo"] = res.log.empty() ? 0.0 : res.log.back().elbo;

  if (o.data.synthetic) {
    const auto& syn = *o.data.synthetic;
    const auto truth = synth::truth_fractions(syn.truth, 1000000, cfg.train.seed);
    try {
      o.score = score_against_truth(o.report, truth, syn.latent_names);
      for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(o.score->latent_match.size()); ++r) {
        const auto& names = syn.latent_names;
        const auto match = std::find(names.begin(), names.end(), o.score->latent_match[static_cast<std::size_t>(r)]);
        o.score->spearman.push_back(
            spearman(o.posterior.row(r).transpose(), syn.z.row(match - names.begin()).transpose()));
      }
      rj["score"] = {{"mean_l1", o.score->mean_error},
                     {"max_l1", o.score->max_error},
                     {"per_feature", o.score->feature_error},
                     {"latent_match", o.score->latent_match},
                     {"spearman_z", o.score->spearman}};
      o.summary["mean_l1"] = o.score->mean_error;
    } catch (const KeyError& e) {
      rj["score"] = {{"error", e.what()}};
    }
  }
  if (mixing) {
    std::vector<int> labels;
    Eigen::Index binary_row = -1;
    for (std::size_t k = 0; k < o.data.table.covariates.size(); ++k)
      if (o.data.table.covariates[k].kind == decomp::CoordinateKind::Binary) binary_row = static_cast<Eigen::Index>(k);
    if (binary_row < 0) throw DataError("batch2d needs a binary covariate");
    for (Eigen::Index i = 0; i < o.data.train.c.cols(); ++i)
      labels.push_back(static_cast<int>(o.data.train.c(binary_row, i)));
    o.mixing = knn_accuracy(o.posterior, labels, 5, 5, cfg.train.seed);
    rj["mixing_accuracy"] = *o.mixing;
    o.summary["mixing_accuracy"] = *o.mixing;
  }
  out.write("report.json", rj.dump(2) + "\n");
  out.write("log.csv", log_csv(res.log));
  {
    std::ostringstream tr;
    tr << "iteration,constraint_id,grid_index,feature,g,lambda,c_t\n";
    write_trace_rows(tr, res.trace);
    out.write("trace.csv", tr.str());
  }
  out.write("model.json", bundle_to_json(res.model, &res.constraints).dump() + "\n");
  {
    std::ostringstream lat;
    std::vector<std::string> header;
    for (Eigen::Index r = 0; r < o.posterior.rows(); ++r)
      header.push_back(o.posterior.rows() == 1 ? "z" : "z" + std::to_string(r + 1));
    for (const auto& cv : o.data.table.covariates) header.push_back(cv.name);
    write_matrix_csv(lat, header, {&o.posterior, &o.data.train.c});
    out.write("posterior.csv", lat.str());
  }
  if (cfg.svg) {
    std::ostringstream f;
    write_fractions_svg(f, o.report);
    out.write("fractions.svg", f.str());
    std::ostringstream l;
    std::vector<int> group;
    const bool binary = !o.data.table.covariates.empty() &&
                        o.data.table.covariates[0].kind == decomp::CoordinateKind::Binary;
    if (binary)
      for (Eigen::Index i = 0; i < o.data.train.c.cols(); ++i) group.push_back(static_cast<int>(o.data.train.c(0, i)));
    if (o.posterior.rows() >= 2)
      write_scatter_svg(l, o.posterior.row(0), o.posterior.row(1), group, "z1", "z2", "posterior mean of z");
    else if (o.data.train.c.rows() >= 1)
      write_scatter_svg(l, o.posterior.row(0), o.data.train.c.row(0), group, "z", o.data.table.covariates[0].name,
                        "posterior mean of z");
    else {
      Eigen::RowVectorXd idx = Eigen::RowVectorXd::LinSpaced(o.posterior.cols(), 0, o.posterior.cols() - 1);
      write_scatter_svg(l, idx, o.posterior.row(0), group, "row", "z", "posterior mean of z");
    }
    out.write("latent.svg", l.str());
  }

  if (res.diverged) {
    o.exit_code = kExitDivergence;
  } else if (res.constrained && !res.tolerance.passed) {
    o.exit_code = kExitTolerance;
  }
  o.summary["exit_code"] = o.exit_code;
  out.finish(cfg, fields, o.summary, started);

  log << "variant " << vi::to_string(cfg.train.variant) << ": " << res.iterations_run << " iterations, max |g| "
      << fmt_num(res.tolerance.max_abs, 4) << (res.tolerance.passed ? " (within" : " (above") << " epsilon "
      << fmt_num(res.tolerance.epsilon, 4) << ")\n";
  if (o.score)
    log << "mean L1 fraction error " << fmt_num(o.score->mean_error, 4) << ", max " << fmt_num(o.score->max_error, 4)
        << "\n";
  if (o.mixing) log << "5-NN batch accuracy " << fmt_num(*o.mixing, 4) << "\n";
  if (!res.message.empty()) log << res.message << "\n";
  return o;
}

inline int cmd_fit(const RunConfig& cfg, const std::vector<ConfigField>& fields, std::ostream& log) {
  return run_fit_pipeline(cfg, fields, false, log).exit_code;
}

inline int cmd_batch2d(const RunConfig& cfg, const std::vector<ConfigField>& fields, std::ostream& log) {
  if (cfg.train.latent_dim != 2) throw ConfigError("batch2d requires latent_dim = 2");
  return run_fit_pipeline(cfg, fields, true, log).exit_code;
}

struct TracesOutcome {
  std::vector<TraceRun> runs;
  int exit_code = kExitOk;
};

inline TraceConfig trace_config(const RunConfig& cfg) {
  TraceConfig tc;
  tc.iterations = cfg.train.iterations;
  tc.record_every = cfg.trace_every;
  tc.penalty = cfg.train.constraints.schedule.c0;
  tc.eta = cfg.train.constraints.eta;
  tc.learning_rate = cfg.train.adam.learning_rate;
  tc.adam = cfg.traces_adam;
  tc.epsilon = cfg.train.constraints.epsilon;
  tc.grid_nodes = cfg.traces_grid;
  tc.samples = cfg.n;
  tc.noise = cfg.noise;
  tc.hidden = cfg.train.hidden;
  tc.seed = cfg.train.seed;
  return tc;
}

inline TracesOutcome run_traces(const RunConfig& cfg, const std::vector<ConfigField>& fields, std::ostream& log) {
  const auto started = std::chrono::system_clock::now();
  OutputDir out(cfg.out);
  const auto tc = trace_config(cfg);
  TracesOutcome o;
  std::ostringstream csv;
  csv << "method,iteration,constraint_id,grid_index,feature,g,lambda,c_t\n";
  nlohmann::json summary;
  std::vector<LinePanel> panels;
  for (auto m : {constraints::Method::Penalty, constraints::Method::BDMM, constraints::Method::MDMM}) {
    auto run = run_trace(tc, m);
    const std::string name(constraints::to_string(m));
    write_trace_rows(csv, run.records, name);
    summary[name] = {{"final_max_abs", run.final_max_abs},
                     {"settled_at", run.settled_at},
                     {"sign_changes", max_sign_changes(run)},
                     {"envelope_ratio", envelope_ratio(run)},
                     {"fit_mse", run.fit_mse}};
    log << name << ": final max |g| " << fmt_num(run.final_max_abs, 4) << ", below epsilon from iteration "
        << run.settled_at << ", " << max_sign_changes(run) << " sign changes\n";
    LinePanel panel;
    panel.title = name;
    std::map<std::pair<std::size_t, Eigen::Index>, std::size_t> series;
    for (const auto& r : run.records) {
      if (r.constraint != 0) continue;  // integral over x1 at each x2 node
      auto [it, fresh] = series.try_emplace({r.constraint, r.grid_index}, panel.series.size());
      if (fresh) panel.series.emplace_back();
      panel.series[it->second].emplace_back(r.iteration, r.g);
    }
    panels.push_back(std::move(panel));
    o.runs.push_back(std::move(run));
  }
  out.write("trace.csv", csv.str());
  if (cfg.svg) {
    std::ostringstream svg;
    write_lines_svg(svg, panels, "iteration", "integral residual");
    out.write("trace.svg", svg.str());
  }
  out.write("report.json", summary.dump(2) + "\n");
  out.finish(cfg, fields, summary, started);
  return o;
}

inline int cmd_traces(const RunConfig& cfg, const std::vector<ConfigField>& fields, std::ostream& log) {
  return run_traces(cfg, fields, log).exit_code;
}

/// Writes a synthetic dataset as data.csv (covariate then features), latent.csv and truth.json.
inline int cmd_simulate(const RunConfig& cfg, const std::vector<ConfigField>& fields, std::ostream& log) {
  const auto started = std::chrono::system_clock::now();
  OutputDir out(cfg.out);
  synth::SyntheticSpec spec;
  spec.id = synth::generator_from_string(cfg.generator);
  spec.n = cfg.n;
  spec.noise = cfg.noise;
  spec.seed = cfg.train.seed;
  const auto d = synth::generate(spec);
  std::ostringstream data, latent;
  std::vector<std::string> header{d.covariate_name};
  header.insert(header.end(), d.feature_names.begin(), d.feature_names.end());
  write_matrix_csv(data, header, {&d.c, &d.y});
  write_matrix_csv(latent, d.latent_names, {&d.z});
  out.write("data.csv", data.str());
  out.write("latent.csv", latent.str());
  const auto truth = synth::truth_fractions(d.truth, 1000000, spec.seed);
  out.write("truth.json", truth_to_json(truth, d.feature_names).dump(2) + "\n");
  nlohmann::json summary{{"generator", cfg.generator}, {"n", cfg.n}, {"features", d.y.rows()}};
  out.finish(cfg, fields, summary, started);
  log << "wrote " << d.y.cols() << " rows of " << synth::to_string(spec.id) << " to " << out.path().string() << "\n";
  return kExitOk;
}

inline int cmd_score(const RunConfig& cfg, const std::vector<ConfigField>& fields, std::ostream& log) {
  const auto started = std::chrono::system_clock::now();
  if (cfg.report_path.empty() || cfg.truth_path.empty()) throw ConfigError("score needs --report and --truth");
  OutputDir out(cfg.out);
  out.add_input(cfg.report_path);
  out.add_input(cfg.truth_path);
  nlohmann::json rj, tj;
  try {
    rj = nlohmann::json::parse(read_file(cfg.report_path));
    tj = nlohmann::json::parse(read_file(cfg.truth_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("invalid JSON input: ") + e.what());
  }
  const auto report = decomp::report_from_json(rj);
  const auto truth = truth_from_json(tj);
  const auto s = score_against_truth(report, truth, rj.value("latent", std::vector<std::string>{}));
  std::ostringstream csv;
  csv << "feature,l1_error\n";
  for (std::size_t j = 0; j < s.feature_error.size(); ++j)
    csv << s.feature_names[j] << ',' << fmt_num(s.feature_error[j]) << '\n';
  out.write("score.csv", csv.str());
  nlohmann::json summary{{"mean_l1", s.mean_error}, {"max_l1", s.max_error}};
  out.write("score.json", summary.dump(2) + "\n");
  out.finish(cfg, fields, summary, started);
  log << "mean L1 fraction error " << fmt_num(s.mean_error, 4) << ", max " << fmt_num(s.max_error, 4) << "\n";
  return kExitOk;
}

}  // namespace nd::app
