#pragma once

#include "mvlme/diagnostics.hpp"
#include "mvlme/model.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mvlme {

/// Two-outcome synthetic cohort. Outcome "y1" (target) has fixed effects
/// (intercept, time, x) and outcome "y2" (source) has (intercept, time); both
/// carry a random intercept and a random time slope, stacked as
/// [y1:intercept, y1:time, y2:intercept, y2:time]. Time enters the design as
/// t / time_scale; x is a Bernoulli covariate.
struct SimulationScenario {
  std::string name = "default";
  int n_subjects = 200;
  int min_encounters = 4;
  int max_encounters = 12;
  double time_lo = 6.0;
  double time_hi = 20.0;
  double time_scale = 10.0;
  double covariate_probability = 0.5;
  AssociationKind true_kind = AssociationKind::value;
  std::optional<double> window_d;
  Normalization normalize_by = Normalization::one_over_t;
  Eigen::Vector3d beta1{80.0, -5.0, 2.0};
  Eigen::Vector2d beta2{0.5, 0.1};
  double sigma1 = 5.0;
  double sigma2 = 0.05;
  double alpha = -10.0;
  Eigen::Matrix4d D = Eigen::Vector4d(25.0, 1.0, 0.01, 0.0025).asDiagonal();
  std::uint64_t seed = 20240601;

  /// sigma >= 0, D symmetric positive semi-definite, n_subjects >= 2.
  void validate() const;
};

/// True parameter values keyed by the sampler's parameter names.
using TruthRecord = std::map<std::string, double>;

struct SimulatedData {
  LongitudinalDataset data;
  TruthRecord truth;
};

TruthRecord scenario_truth(const SimulationScenario& scenario);

SimulatedData generate_dataset(const SimulationScenario& scenario, int replicate_index);

enum class Connection { assoc_only, re_only, assoc_and_re };

struct FittedStructure {
  Connection connection = Connection::assoc_only;
  AssociationKind kind = AssociationKind::value;  // ignored for re_only

  /// "value", "RE", "value&RE", ...
  std::string label() const;
  bool operator==(const FittedStructure&) const = default;
};

/// Model specification fitting `structure` to data from `scenario`.
ModelSpec simulation_model_spec(const SimulationScenario& scenario, const FittedStructure& structure,
                                const McmcConfig& mcmc, const PriorConfig& priors = {});

struct StructureFit {
  FittedStructure structure;
  bool ok = false;
  std::string error;
  PosteriorSummary summary;
};

/// Fits every structure to the same dataset. Sampler errors are captured per
/// structure with its label.
std::vector<StructureFit> fit_structures(const SimulatedData& sim, const SimulationScenario& scenario,
                                         const std::vector<FittedStructure>& structures,
                                         const McmcConfig& mcmc);

struct BiasCell {
  std::string scenario;
  AssociationKind true_kind = AssociationKind::value;
  std::string structure;
  std::string parameter;
  double truth = 0.0;
  int replicates_ok = 0;
  int replicates_failed = 0;
  double mean_estimate = 0.0;   // average posterior mean
  double bias = 0.0;            // mean_estimate - truth
  double mean_abs_error = 0.0;  // average |posterior mean - truth|
  double coverage = 0.0;        // share of 95% intervals containing truth
};

struct BiasTable {
  std::vector<BiasCell> cells;

  const BiasCell* find(const std::string& scenario, const std::string& structure,
                       const std::string& parameter) const;
};

struct ReplicateRecord {
  std::string scenario;
  int replicate = 0;
  StructureFit fit;
};

struct SensitivityOptions {
  std::vector<FittedStructure> structures;
  McmcConfig mcmc = McmcConfig::desk();
  int threads = 1;
};

struct SensitivityResult {
  BiasTable table;
  std::vector<ReplicateRecord> replicates;  // ordered by (scenario, replicate, structure)
};

/// Seed of the sampler for one replicate; shared by every fitted structure.
std::uint64_t replicate_mcmc_seed(const SimulationScenario& scenario, int replicate_index);

SensitivityResult run_sensitivity(const std::vector<SimulationScenario>& scenarios, int replicates,
                                  const SensitivityOptions& options);

/// Parameters the bias table tracks: fixed effects, error sds, alpha, D diagonal.
std::vector<std::string> tracked_parameters(const TruthRecord& truth);

std::string to_string(AssociationKind kind);
AssociationKind association_kind_from_string(const std::string& s);

}  // namespace mvlme
