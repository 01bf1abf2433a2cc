// mvlme: fit, stratify, simulate and summarize multivariate longitudinal mixed models.

#include "mvlme/diagnostics.hpp"
#include "mvlme/error.hpp"
#include "mvlme/io.hpp"
#include "mvlme/parallel.hpp"
#include "mvlme/simulation.hpp"
#include "mvlme/stratified.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace mvlme;

enum Exit { kOk = 0, kUsage = 1, kValidation = 2, kNumerical = 3 };

struct Flags {
  std::string config;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> chains;
  std::optional<std::string> window_d;
  std::optional<std::string> group_col;
  std::optional<int> min_n;
  std::optional<double> scale_report;
  bool full_schedule = false;
  std::optional<int> replicates;
};

void apply_schedule(McmcConfig& m, const Flags& f) {
  if (f.full_schedule) {
    const McmcConfig full;
    m.n_iter = full.n_iter;
    m.burn_in = full.burn_in;
    m.thin = full.thin;
    m.adapt = full.adapt;
  }
  if (f.seed) m.seed = *f.seed;
  if (f.chains) m.n_chains = *f.chains;
}

std::optional<double> parse_window(const std::string& s) {
  if (s == "full") return std::nullopt;
  try {
    std::size_t used = 0;
    const double d = std::stod(s, &used);
    if (used == s.size() && d > 0.0) return d;
  } catch (const std::exception&) {
  }
  throw ValidationError("--window-d must be a positive number or 'full'");
}

RunConfig load_run_config(const Flags& f) {
  RunConfig rc = parse_config(f.config);
  apply_schedule(rc.spec.mcmc, f);
  if (f.window_d) {
    if (rc.spec.association.kind != AssociationKind::auc)
      throw ValidationError("--window-d needs an auc association in the config");
    rc.spec.association.window_d = parse_window(*f.window_d);
  }
  if (f.group_col) rc.schema.group_column = *f.group_col;
  if (f.min_n) rc.min_n = *f.min_n;
  if (f.scale_report) rc.report_scale = *f.scale_report;
  if (rc.min_n < 1) throw ValidationError("--min-n must be >= 1");
  if (rc.report_scale == 0.0) throw ValidationError("--scale-report must be non-zero");
  rc.spec.validate();
  return rc;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

int cmd_fit(const Flags& f) {
  const RunConfig rc = load_run_config(f);
  CsvSchema schema = rc.schema;
  schema.group_column.clear();
  const LongitudinalDataset data = load_long_csv(f.data, schema);
  const std::string hash = config_hash(rc);
  const fs::path out(f.out);

  RunManifest manifest;
  manifest.command = "fit";
  manifest.config_hash = hash;
  manifest.seed = rc.spec.mcmc.seed;
  manifest.n_chains = rc.spec.mcmc.n_chains;
  manifest.started = utc_timestamp();
  GroupOutcome g;
  g.group = "all";
  g.directory = "all";
  g.n_subjects = static_cast<int>(data.subjects.size());

  int code = kOk;
  std::vector<GroupReport> reports;
  try {
    const FitResult fit = fit_dataset(data, rc.spec, rc.report_scale, hash, worker_count());
    write_chains(fit.chains, out / "chains" / g.directory);
    write_text(out / "summary.csv", format_summary_csv(fit.summary));
    reports.push_back(make_group_report(g.group, g.n_subjects, fit.summary, rc.spec, rc.report_scale));
    g.status = GroupStatus::fitted;
  } catch (const NumericalError& e) {
    g.status = GroupStatus::failed;
    g.message = e.what();
    std::cerr << "error: " << e.what() << "\n";
    code = kNumerical;
  }
  manifest.groups.push_back(g);
  manifest.finished = utc_timestamp();
  write_text(out / "config.json", serialize_config(rc));
  write_text(out / "group_report.csv", format_group_report_csv(reports));
  write_text(out / "manifest.json", format_manifest_json(manifest));
  return code;
}

int cmd_fit_strata(const Flags& f) {
  const RunConfig rc = load_run_config(f);
  if (rc.schema.group_column.empty()) throw ValidationError("fit-strata needs --group-col or data.group_column");
  const LongitudinalDataset data = load_long_csv(f.data, rc.schema);
  const fs::path out(f.out);

  StratifiedOptions opts;
  opts.group_column = rc.schema.group_column;
  opts.min_n = rc.min_n;
  opts.report_scale = rc.report_scale;
  opts.config_hash = config_hash(rc);
  opts.out_dir = out;
  opts.threads = worker_count();
  write_text(out / "config.json", serialize_config(rc));
  const StratifiedResult result = stratified_fit(data, rc.spec, opts);
  print_warnings(result.warnings);
  const RunManifest& m = result.manifest;
  std::cout << m.count(GroupStatus::fitted) << " fitted, " << m.count(GroupStatus::skipped_small_n)
            << " skipped_small_n, " << m.count(GroupStatus::failed) << " failed\n";
  return m.count(GroupStatus::failed) > 0 ? kNumerical : kOk;
}

int cmd_simulate(const Flags& f) {
  SimulationConfig cfg = f.config.empty() ? default_simulation_config() : parse_simulation_config(f.config);
  apply_schedule(cfg.mcmc, f);
  if (f.replicates) cfg.replicates = *f.replicates;
  for (auto& sc : cfg.scenarios) {
    if (f.seed) sc.seed = *f.seed;
    if (f.window_d) sc.window_d = parse_window(*f.window_d);
    sc.validate();
  }
  cfg.mcmc.validate();
  if (cfg.replicates < 1) throw ValidationError("--replicates must be >= 1");

  SensitivityOptions opts;
  opts.structures = cfg.structures;
  opts.mcmc = cfg.mcmc;
  opts.threads = worker_count();
  const fs::path out(f.out);
  const std::string started = utc_timestamp();
  const SensitivityResult result = run_sensitivity(cfg.scenarios, cfg.replicates, opts);
  write_text(out / "bias_table.csv", format_bias_table_csv(result.table));
  write_text(out / "replicate_summaries.csv", format_replicate_csv(result.replicates));

  int failed = 0;
  for (const auto& r : result.replicates) failed += r.fit.ok ? 0 : 1;
  RunManifest manifest;
  manifest.command = "simulate";
  manifest.seed = cfg.scenarios.front().seed;
  manifest.n_chains = cfg.mcmc.n_chains;
  manifest.started = started;
  manifest.finished = utc_timestamp();
  for (const auto& sc : cfg.scenarios) {
    GroupOutcome g;
    g.group = sc.name;
    g.directory = "";
    g.n_subjects = sc.n_subjects;
    g.status = GroupStatus::fitted;
    int scenario_failed = 0;
    for (const auto& r : result.replicates) scenario_failed += (r.scenario == sc.name && !r.fit.ok) ? 1 : 0;
    if (scenario_failed > 0) g.message = std::to_string(scenario_failed) + " replicate fits failed";
    manifest.groups.push_back(g);
  }
  write_text(out / "manifest.json", format_manifest_json(manifest));
  std::cout << result.replicates.size() << " replicate fits, " << failed << " failed\n";
  return kOk;
}

int cmd_summarize(const Flags& f) {
  const LoadedChains loaded = read_chains(f.data);
  print_warnings(loaded.warnings);
  SummaryOptions opts;
  opts.alpha_report_scale = f.scale_report.value_or(0.1);
  const std::string csv = format_summary_csv(summarize(loaded.chains, opts));
  if (f.out.empty()) {
    std::cout << csv;
  } else {
    write_text(fs::path(f.out) / "summary.csv", csv);
  }
  return kOk;
}

int cmd_validate(const Flags& f) {
  const RunConfig rc = load_run_config(f);
  std::cout << "config ok (hash " << config_hash(rc) << ")\n";
  if (f.data.empty()) return kOk;
  const LongitudinalDataset data = load_long_csv(f.data, rc.schema);
  const DesignSet design = build_design(data, rc.spec);
  std::cout << "data ok: " << design.n_subjects() << " subjects, " << data.n_encounters() << " encounters, "
            << design.n_re << " random effects per subject\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian multivariate mixed-effects models for longitudinal outcomes"};
  app.set_version_flag("--version", MVLME_VERSION);
  app.require_subcommand(1);
  Flags f;

  auto add_common = [&](CLI::App* sub, bool config_required, bool data_required, bool out_required) {
    auto* c = sub->add_option("--config", f.config, "JSON configuration file");
    if (config_required) c->required();
    auto* d = sub->add_option("--data", f.data, "input data (CSV) or chain directory");
    if (data_required) d->required();
    auto* o = sub->add_option("--out", f.out, "output directory");
    if (out_required) o->required();
    sub->add_option("--seed", f.seed, "sampler seed");
    sub->add_option("--chains", f.chains, "number of chains")->check(CLI::PositiveNumber);
    sub->add_option("--window-d", f.window_d, "AUC window in years, or 'full'");
    sub->add_option("--group-col", f.group_col, "stratum column");
    sub->add_option("--min-n", f.min_n, "smallest group that is fitted")->check(CLI::PositiveNumber);
    sub->add_option("--scale-report", f.scale_report, "factor applied to alpha in reports (default 0.1)");
    sub->add_flag("--full-schedule", f.full_schedule, "28000 iterations, burn-in 3000, thin 50, adapt 3000");
  };

  auto* fit = app.add_subcommand("fit", "fit one dataset");
  add_common(fit, true, true, true);
  auto* strata = app.add_subcommand("fit-strata", "fit every group of a stratified dataset");
  add_common(strata, true, true, true);
  auto* sim = app.add_subcommand("simulate", "run the sensitivity simulation harness");
  add_common(sim, false, false, true);
  sim->add_option("--replicates", f.replicates, "replicates per scenario")->check(CLI::PositiveNumber);
  auto* summ = app.add_subcommand("summarize", "summarize a chain directory");
  add_common(summ, false, true, false);
  auto* val = app.add_subcommand("validate", "check a configuration and optionally a dataset");
  add_common(val, true, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*fit) return cmd_fit(f);
    if (*strata) return cmd_fit_strata(f);
    if (*sim) return cmd_simulate(f);
    if (*summ) return cmd_summarize(f);
    if (*val) return cmd_validate(f);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kUsage;
}
