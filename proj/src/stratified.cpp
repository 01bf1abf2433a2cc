#include "mvlme/stratified.hpp"

#include "mvlme/error.hpp"
#include "mvlme/parallel.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <map>
#include <set>

namespace mvlme {

FitResult fit_dataset(const LongitudinalDataset& data, const ModelSpec& spec, double report_scale,
                      const std::string& config_hash, int threads) {
  const DesignSet design = build_design(data, spec);
  FitResult out;
  out.chains = run_chains(design, spec, threads);
  for (ChainDraws& c : out.chains) c.config_hash = config_hash;
  SummaryOptions opts;
  if (design.has_association()) opts.alpha_report_scale = report_scale;
  else opts.alpha_report_scale = std::nullopt;
  out.summary = summarize(out.chains, opts);
  return out;
}

std::string to_string(GroupStatus status) {
  switch (status) {
    case GroupStatus::fitted: return "fitted";
    case GroupStatus::skipped_small_n: return "skipped_small_n";
    case GroupStatus::failed: return "failed";
  }
  return "failed";
}

int RunManifest::count(GroupStatus status) const {
  return static_cast<int>(std::count_if(groups.begin(), groups.end(), [&](const auto& g) { return g.status == status; }));
}

GroupReport make_group_report(const std::string& group, int n_subjects, const PosteriorSummary& summary,
                              const ModelSpec& spec, double report_scale) {
  GroupReport r;
  r.group = group;
  r.n_subjects = n_subjects;
  r.window_d = spec.association.window_d;
  r.report_scale = report_scale;
  r.alpha.name = "alpha";
  if (const ParameterSummary* a = summary.find("alpha")) {
    r.alpha = *a;
  } else {
    const double nan = std::nan("");
    r.alpha.mean = r.alpha.sd = r.alpha.q025 = r.alpha.q975 = r.alpha.rhat = r.alpha.ess = r.alpha.bayes_p = nan;
  }
  return r;
}

std::string format_group_report_csv(const std::vector<GroupReport>& reports) {
  std::string out(kGroupReportHeader);
  out += "\n";
  for (const GroupReport& r : reports) {
    const ParameterSummary& a = r.alpha;
    double lo = a.q025 * r.report_scale;
    double hi = a.q975 * r.report_scale;
    if (lo > hi) std::swap(lo, hi);
    out += csv_field(r.group) + "," + std::to_string(r.n_subjects);
    for (double v : {a.mean, a.sd, a.q025, a.q975, a.bayes_p, a.rhat, a.ess}) out += "," + format_number(v);
    out += "," + (r.window_d ? format_number(*r.window_d) : std::string("full"));
    out += "," + format_number(r.report_scale);
    for (double v : {a.mean * r.report_scale, lo, hi}) out += "," + format_number(v);
    out += "\n";
  }
  return out;
}

std::string format_manifest_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["software_version"] = m.software_version;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["n_chains"] = m.n_chains;
  j["started"] = m.started;
  j["finished"] = m.finished;
  j["counts"] = {{"fitted", m.count(GroupStatus::fitted)},
                 {"skipped_small_n", m.count(GroupStatus::skipped_small_n)},
                 {"failed", m.count(GroupStatus::failed)}};
  auto groups = nlohmann::ordered_json::array();
  for (const GroupOutcome& g : m.groups) {
    nlohmann::ordered_json e{{"group", g.group},
                             {"n_subjects", g.n_subjects},
                             {"status", to_string(g.status)},
                             {"directory", g.directory}};
    if (!g.message.empty()) e["message"] = g.message;
    groups.push_back(e);
  }
  j["groups"] = groups;
  return j.dump(2) + "\n";
}

std::string utc_timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

StratifiedResult stratified_fit(const LongitudinalDataset& data, const ModelSpec& spec,
                                const StratifiedOptions& options) {
  if (options.min_n < 1) throw ValidationError("min_n must be >= 1");
  if (options.group_column.empty()) throw ValidationError("no group column given");
  if (data.group_column != options.group_column)
    throw ValidationError("unknown group column '" + options.group_column + "'");
  spec.validate();

  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < data.subjects.size(); ++i) members[data.subjects[i].group].push_back(i);

  StratifiedResult result;
  RunManifest& manifest = result.manifest;
  manifest.command = "fit-strata";
  manifest.config_hash = options.config_hash;
  manifest.seed = spec.mcmc.seed;
  manifest.n_chains = spec.mcmc.n_chains;
  manifest.started = utc_timestamp();

  std::set<std::string> used_dirs;
  std::vector<LongitudinalDataset> subsets;
  std::vector<std::size_t> to_fit;
  for (const auto& [label, idx] : members) {
    GroupOutcome g;
    g.group = label;
    g.n_subjects = static_cast<int>(idx.size());
    std::string dir = sanitize_component(label);
    for (int k = 2; used_dirs.count(dir); ++k) dir = sanitize_component(label) + "_" + std::to_string(k);
    used_dirs.insert(dir);
    g.directory = dir;
    if (g.n_subjects < options.min_n) {
      g.status = GroupStatus::skipped_small_n;
      g.message = "n = " + std::to_string(g.n_subjects) + " < " + std::to_string(options.min_n);
    } else {
      LongitudinalDataset sub = data;
      sub.subjects.clear();
      for (std::size_t i : idx) sub.subjects.push_back(data.subjects[i]);
      to_fit.push_back(manifest.groups.size());
      subsets.push_back(std::move(sub));
    }
    manifest.groups.push_back(std::move(g));
  }

  const int group_workers = std::max(1, std::min<int>(options.threads, static_cast<int>(to_fit.size())));
  const int chain_workers = std::max(1, options.threads / group_workers);
  std::vector<std::optional<GroupReport>> reports(to_fit.size());
  parallel_for(to_fit.size(), group_workers, [&](std::size_t j) {
    GroupOutcome& g = manifest.groups[to_fit[j]];
    try {
      FitResult fit = fit_dataset(subsets[j], spec, options.report_scale, options.config_hash, chain_workers);
      if (options.out_dir) write_chains(fit.chains, *options.out_dir / "chains" / g.directory);
      reports[j] = make_group_report(g.group, g.n_subjects, fit.summary, spec, options.report_scale);
      g.status = GroupStatus::fitted;
    } catch (const Error& e) {
      g.status = GroupStatus::failed;
      g.message = e.what();
    }
  });
  for (auto& r : reports)
    if (r) result.reports.push_back(std::move(*r));

  if (manifest.count(GroupStatus::skipped_small_n) == static_cast<int>(manifest.groups.size()))
    result.warnings.push_back("every group has fewer than " + std::to_string(options.min_n) +
                              " subjects; the report is empty");
  for (const GroupOutcome& g : manifest.groups)
    if (g.status == GroupStatus::failed) result.warnings.push_back("group " + g.group + " failed: " + g.message);

  manifest.finished = utc_timestamp();
  if (options.out_dir) {
    write_text(*options.out_dir / "group_report.csv", format_group_report_csv(result.reports));
    write_text(*options.out_dir / "manifest.json", format_manifest_json(manifest));
  }
  return result;
}

}  // namespace mvlme
