#pragma once

#include "mvlme/diagnostics.hpp"
#include "mvlme/io.hpp"
#include "mvlme/mcmc.hpp"
#include "mvlme/model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mvlme {

struct FitResult {
  std::vector<ChainDraws> chains;
  PosteriorSummary summary;
};

/// Design, every chain, and the pooled summary of one dataset.
FitResult fit_dataset(const LongitudinalDataset& data, const ModelSpec& spec, double report_scale,
                      const std::string& config_hash = {}, int threads = 1);

enum class GroupStatus { fitted, skipped_small_n, failed };
std::string to_string(GroupStatus status);

struct GroupOutcome {
  std::string group;
  std::string directory;  // chains/<directory>
  int n_subjects = 0;
  GroupStatus status = GroupStatus::failed;
  std::string message;
};

struct RunManifest {
  std::string software_version = MVLME_VERSION;
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  int n_chains = 0;
  std::string started;
  std::string finished;
  std::vector<GroupOutcome> groups;

  int count(GroupStatus status) const;
};

struct GroupReport {
  std::string group;
  int n_subjects = 0;
  ParameterSummary alpha;  // raw scale; NaN fields when the model has no association
  std::optional<double> window_d;
  double report_scale = 0.1;
};

inline constexpr std::string_view kGroupReportHeader =
    "group,n_subjects,alpha_mean,alpha_sd,alpha_q2.5,alpha_q97.5,alpha_bayes_p,alpha_rhat,alpha_ess,window_d,"
    "report_scale,alpha_scaled_mean,alpha_scaled_q2.5,alpha_scaled_q97.5";

GroupReport make_group_report(const std::string& group, int n_subjects, const PosteriorSummary& summary,
                              const ModelSpec& spec, double report_scale);
std::string format_group_report_csv(const std::vector<GroupReport>& reports);
std::string format_manifest_json(const RunManifest& manifest);

/// UTC timestamp; SOURCE_DATE_EPOCH pins it for reproducible manifests.
std::string utc_timestamp();

struct StratifiedOptions {
  std::string group_column;
  int min_n = 120;
  double report_scale = 0.1;
  std::string config_hash;
  /// When set, chains go to <out_dir>/chains/<group>/ and the reports to <out_dir>.
  std::optional<std::filesystem::path> out_dir;
  int threads = 1;
};

struct StratifiedResult {
  RunManifest manifest;
  std::vector<GroupReport> reports;  // fitted groups only, in group order
  std::vector<std::string> warnings;
};

/// Fits each group whose subject count reaches min_n with the same spec and
/// seed. Groups below min_n are marked skipped_small_n; sampler or data
/// errors mark the group failed without stopping the run.
StratifiedResult stratified_fit(const LongitudinalDataset& data, const ModelSpec& spec,
                                const StratifiedOptions& options);

}  // namespace mvlme
