#pragma once

#include "mvlme/mcmc.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mvlme {

/// Split-R-hat over chains of equal length (>= 10). Each chain is halved.
double split_rhat(const std::vector<Eigen::VectorXd>& chains);
double gelman_rubin(const std::vector<ChainDraws>& chains, const std::string& param);

/// Multi-chain autocorrelation ESS with Geyer's initial positive sequence,
/// capped at the total draw count.
double effective_sample_size(const std::vector<Eigen::VectorXd>& chains);
double effective_sample_size(const std::vector<ChainDraws>& chains, const std::string& param);

/// Two-sided posterior tail probability 2 min(P(x <= 0), P(x >= 0)), capped at 1.
double bayes_p(std::span<const double> draws);

/// Type-7 quantile.
double quantile(std::vector<double> values, double p);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  double rhat = 0.0;  // NaN when undefined (one chain or zero within-chain variance)
  double ess = 0.0;   // NaN when undefined
  double bayes_p = 1.0;
};

struct PosteriorSummary {
  std::vector<ParameterSummary> parameters;
  std::size_t total_draws = 0;
  int n_chains = 0;

  const ParameterSummary* find(const std::string& name) const;
};

struct SummaryOptions {
  /// Extra row "alpha.scaled" holding alpha draws times this factor.
  std::optional<double> alpha_report_scale = 0.1;
};

PosteriorSummary summarize(const std::vector<ChainDraws>& chains, const SummaryOptions& options = {});

}  // namespace mvlme
