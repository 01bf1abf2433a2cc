#pragma once

#include "mvlme/diagnostics.hpp"
#include "mvlme/mcmc.hpp"
#include "mvlme/model.hpp"
#include "mvlme/simulation.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mvlme {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Data CSV

/// Column layout of a long CSV: `id`, `time`, one column per outcome (empty
/// cell = missing), numeric covariates, categorical covariates and an
/// optional stratum column. A categorical covariate with levels (l0, l1, ...)
/// becomes indicator columns "name:l1", "name:l2", ...; l0 is the reference.
struct CsvSchema {
  std::vector<std::string> outcomes;
  std::vector<std::string> covariates;
  std::vector<std::pair<std::string, std::vector<std::string>>> categorical;
  std::string group_column;

  /// Covariate names of the loaded dataset, indicators included.
  std::vector<std::string> covariate_columns() const;
  bool operator==(const CsvSchema&) const = default;
};

/// Reads a long CSV. Rows are sorted by (id, time); duplicate (id, time)
/// pairs and rows with every outcome empty are errors naming the line.
LongitudinalDataset load_long_csv(const fs::path& path, const CsvSchema& schema);
LongitudinalDataset parse_long_csv(std::string_view text, const CsvSchema& schema);

/// Writes id, time, outcomes, covariates and the group column (when set).
void write_long_csv(const LongitudinalDataset& data, const fs::path& path);
std::string format_long_csv(const LongitudinalDataset& data);

// ---------------------------------------------------------------------------
// Configuration

struct RunConfig {
  ModelSpec spec;
  CsvSchema schema;
  double report_scale = 0.1;
  int min_n = 120;

  bool operator==(const RunConfig&) const = default;
};

/// JSON configuration. Unknown keys are rejected at every level.
RunConfig parse_config(const fs::path& path);
RunConfig parse_config_text(std::string_view text);
std::string serialize_config(const RunConfig& config);

/// 16 hex digits of FNV-1a over the serialized configuration.
std::string config_hash(const RunConfig& config);
std::string fnv1a_hex(std::string_view bytes);

/// Simulation harness settings.
struct SimulationConfig {
  std::vector<SimulationScenario> scenarios;
  std::vector<FittedStructure> structures;
  int replicates = 100;
  McmcConfig mcmc = McmcConfig::desk();
};

/// Default harness: one scenario per true functional form crossed with every
/// fitted structure (each form alone, RE only, each form with correlated REs).
SimulationConfig default_simulation_config();
SimulationConfig parse_simulation_config(const fs::path& path);
SimulationConfig parse_simulation_config_text(std::string_view text);
FittedStructure fitted_structure_from_label(const std::string& label);

// ---------------------------------------------------------------------------
// Chains

/// chain_<k>.csv (header of parameter names, 17 significant digits) plus a
/// chain_<k>.json sidecar with the seed, schedule, config hash and a hash of
/// the CSV bytes.
void write_chains(const std::vector<ChainDraws>& chains, const fs::path& dir);

struct LoadedChains {
  std::vector<ChainDraws> chains;
  std::vector<std::string> warnings;
};

/// Inverse of write_chains. Hash mismatches are reported as warnings; a
/// ragged or non-numeric row is an error naming the file and line.
LoadedChains read_chains(const fs::path& dir, const std::optional<std::string>& expected_config_hash = std::nullopt);

// ---------------------------------------------------------------------------
// Reports

/// %.17g, with NA for NaN.
std::string format_number(double v);
/// Quotes a CSV field when it holds a comma, quote or line break.
std::string csv_field(const std::string& s);

inline constexpr std::string_view kSummaryHeader = "parameter,mean,sd,q2.5,q97.5,rhat,ess,bayes_p";
inline constexpr std::string_view kBiasTableHeader =
    "scenario,true_kind,structure,parameter,truth,replicates_ok,replicates_failed,mean_estimate,bias,"
    "mean_abs_error,coverage";
inline constexpr std::string_view kReplicateHeader =
    "scenario,replicate,structure,status,parameter,mean,sd,q2.5,q97.5,rhat,ess,bayes_p,error";

std::string format_summary_csv(const PosteriorSummary& summary);
std::string format_bias_table_csv(const BiasTable& table);
std::string format_replicate_csv(const std::vector<ReplicateRecord>& replicates);

void write_text(const fs::path& path, std::string_view text);
std::string read_text(const fs::path& path);

/// Label rewritten to [A-Za-z0-9._-] so it is safe as one path component.
std::string sanitize_component(const std::string& label);

}  // namespace mvlme
