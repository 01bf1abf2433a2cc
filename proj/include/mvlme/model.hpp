#pragma once

#include "mvlme/functional_forms.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mvlme {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

// ---------------------------------------------------------------------------
// Data

struct SubjectRecord {
  std::string id;
  std::vector<double> times;
  Eigen::MatrixXd outcomes;    // n_i x K, NaN marks a missing slot
  Eigen::MatrixXd covariates;  // n_i x P, time-fixed covariates repeat on every row
  std::string group;           // optional stratum label

  Eigen::Index n_encounters() const { return static_cast<Eigen::Index>(times.size()); }
};

struct LongitudinalDataset {
  std::vector<std::string> outcome_names;
  std::vector<std::string> covariate_names;
  std::vector<SubjectRecord> subjects;
  std::string group_column;  // empty when the data carry no strata
  /// Multiplier applied to the source outcome by rescale_source_outcome.
  double source_scale = 1.0;

  /// Throws ValidationError describing the first violated invariant.
  void validate(std::pair<double, double> admissible_time = {0.0, 120.0}) const;

  std::size_t n_encounters() const;
  int outcome_index(const std::string& name) const;    // -1 if absent
  int covariate_index(const std::string& name) const;  // -1 if absent
};

/// Multiplies the values of `outcome` by `factor` and records the factor.
LongitudinalDataset rescale_source_outcome(const LongitudinalDataset& data, int outcome, double factor);

// ---------------------------------------------------------------------------
// Model specification

enum class AssociationKind { none_shared_re_only, value, slope, auc };

struct AssociationStructure {
  AssociationKind kind = AssociationKind::none_shared_re_only;
  std::optional<double> window_d;
  Normalization normalize_by = Normalization::one_over_t;
  int source_outcome = -1;
  int target_outcome = -1;

  bool active() const { return kind != AssociationKind::none_shared_re_only; }
  bool operator==(const AssociationStructure&) const = default;
};

struct PriorConfig {
  double beta_prior_variance = 100.0;
  double alpha_prior_variance = 100.0;
  double error_precision_shape = 0.01;
  double error_precision_rate = 0.01;
  int wishart_df_offset = 1;
  double scale_hyper_shape = 0.5;
  double scale_hyper_rate = 0.01;
  double scale_hyper_multiplier = 4.0;

  void validate() const;
  bool operator==(const PriorConfig&) const = default;
};

struct McmcConfig {
  int n_chains = 2;
  int n_iter = 28000;
  int burn_in = 3000;
  int thin = 50;
  int adapt = 3000;
  std::uint64_t seed = 1;

  void validate() const;
  /// floor((n_iter - burn_in) / thin)
  int retained() const { return (n_iter - burn_in) / thin; }
  bool operator==(const McmcConfig&) const = default;

  /// Shortened schedule used by the simulation harness and quick fits.
  static McmcConfig desk();
};

/// Per-outcome regression. Terms: "intercept", "time", "ns" (expands to the
/// spline_df natural-spline columns) or a covariate name.
struct OutcomeModel {
  std::string name;
  std::vector<std::string> fixed;
  std::vector<std::string> random;
  int spline_df = 2;

  bool operator==(const OutcomeModel&) const = default;
};

struct ModelSpec {
  std::vector<OutcomeModel> outcomes;
  AssociationStructure association;
  bool re_cross_outcome_correlation = true;
  double time_scale = 1.0;
  std::pair<double, double> admissible_time{0.0, 120.0};
  PriorConfig priors;
  McmcConfig mcmc;

  void validate() const;
  int outcome_index(const std::string& name) const;
  bool operator==(const ModelSpec&) const = default;
};

// ---------------------------------------------------------------------------
// Design

struct OutcomeDesign {
  std::string name;
  DesignLayout fixed_layout;
  DesignLayout random_layout;
  Eigen::MatrixXd X;            // observed rows x p_k
  Eigen::MatrixXd Z;            // observed rows x r_k
  Eigen::VectorXd y;
  std::vector<int> subject;     // row -> subject index
  std::vector<int> encounter;   // row -> encounter index within the subject
  std::vector<Eigen::Index> row_begin;  // n_subjects + 1 offsets; rows are grouped by subject

  Eigen::Index n_rows() const { return y.size(); }
  Eigen::Index n_fixed() const { return X.cols(); }
  Eigen::Index n_random() const { return Z.cols(); }
  std::vector<std::string> fixed_names() const;
  std::vector<std::string> random_names() const;
};

/// All design matrices of a model. The association covariate of a target row
/// equals Fx.row(r) * beta_source + Fz.row(r) * b_source.
struct DesignSet {
  std::vector<OutcomeDesign> outcomes;
  AssociationStructure association;
  Eigen::MatrixXd Fx;  // target rows x p_source; zero-size when no association
  Eigen::MatrixXd Fz;  // target rows x r_source
  std::vector<Eigen::Index> re_offset;  // start of each outcome's block in b_i
  Eigen::Index n_re = 0;
  std::vector<std::vector<Eigen::Index>> re_blocks;  // index sets sharing a Wishart prior
  std::vector<std::string> subject_ids;

  int n_outcomes() const { return static_cast<int>(outcomes.size()); }
  int n_subjects() const { return static_cast<int>(subject_ids.size()); }
  bool has_association() const { return association.active(); }
  std::vector<std::string> random_effect_names() const;
};

DesignSet build_design(const LongitudinalDataset& data, const ModelSpec& spec);

/// Sampler state of one chain.
struct ChainState {
  std::vector<Eigen::VectorXd> beta;  // per outcome
  double alpha = 0.0;
  Eigen::MatrixXd b;                  // n_subjects x n_re
  Eigen::VectorXd tau;                // error precision per outcome
  Eigen::MatrixXd D_inverse;          // n_re x n_re
  Eigen::VectorXd scale_hyper;        // one per random effect
};

/// Association covariate per target row: Fx beta_q + Fz b_iq.
Eigen::VectorXd association_covariate(const DesignSet& design, const ChainState& state);

/// Latent mean per observed row of `outcome`, including alpha times the
/// association covariate for the target outcome.
Eigen::VectorXd linear_predictor(const DesignSet& design, const ChainState& state, int outcome);

}  // namespace mvlme
