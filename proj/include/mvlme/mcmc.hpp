#pragma once

#include "mvlme/model.hpp"
#include "mvlme/random.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mvlme {

/// Full conditional N(mean, precision^{-1}).
struct GaussianConditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision;
};

/// Same distribution in canonical form: precision and shift = precision * mean.
struct GaussianCanonical {
  Eigen::MatrixXd precision;
  Eigen::VectorXd shift;
};

/// Gamma(shape, rate).
struct GammaConditional {
  double shape = 1.0;
  double rate = 1.0;
};

/// Wishart(df, scale) with mean df * scale.
struct WishartConditional {
  double df = 1.0;
  Eigen::MatrixXd scale;
};

/// Retained draws of one chain. Columns are named parameters:
///   beta.<outcome>.<column>, alpha, sigma.<outcome> (error sd),
///   D.<r>.<c> (random-effect covariance, r >= c, within a prior block),
///   a.<l> (Wishart scale hyperparameters).
struct ChainDraws {
  std::vector<std::string> names;
  Eigen::MatrixXd draws;  // retained iterations x parameters
  std::uint64_t seed = 0;
  int chain_index = 0;
  McmcConfig config;
  std::size_t jitter_events = 0;
  std::string config_hash;

  Eigen::Index column(std::string_view name) const;  // -1 when absent
  Eigen::VectorXd values(std::string_view name) const;
};

/// Draws a Gaussian given its precision via the Cholesky factor; retries
/// once with a 1e-10 diagonal jitter. Increments `jitter_events` on retry.
Eigen::VectorXd sample_gaussian(const GaussianConditional& cond, Rng& rng, std::size_t& jitter_events);
Eigen::VectorXd sample_gaussian(const GaussianCanonical& cond, Rng& rng, std::size_t& jitter_events);

/// Bartlett-decomposition Wishart draw.
Eigen::MatrixXd sample_wishart(const WishartConditional& cond, Rng& rng);

/// Blocked Gibbs sampler over a fixed design. Conditionals are exposed so
/// they can be checked against independent computations.
class GibbsSampler {
 public:
  GibbsSampler(const DesignSet& design, const PriorConfig& priors);

  const DesignSet& design() const { return design_; }
  const PriorConfig& priors() const { return priors_; }

  /// OLS coefficients and residual precisions, alpha = 0, b = 0, D^{-1} = I, a = 1.
  ChainState initial_state() const;

  GaussianConditional fixed_effects_conditional(const ChainState& s, int outcome) const;
  GaussianConditional association_conditional(const ChainState& s) const;
  GaussianConditional random_effects_conditional(const ChainState& s, int subject) const;
  GammaConditional error_precision_conditional(const ChainState& s, int outcome) const;
  WishartConditional re_precision_conditional(const ChainState& s, int block) const;
  GammaConditional scale_hyper_conditional(const ChainState& s, Eigen::Index effect) const;

  Eigen::VectorXd update_fixed_effects(const ChainState& s, int outcome, Rng& rng);
  double update_association(const ChainState& s, Rng& rng);
  Eigen::VectorXd update_random_effects(const ChainState& s, int subject, Rng& rng);
  Eigen::VectorXd update_error_precisions(const ChainState& s, Rng& rng);
  void update_re_precision(ChainState& s, Rng& rng);

  /// One full cycle: beta_1..beta_K, alpha, {b_i}, tau_k, D^{-1} blocks, scale hypers.
  void sweep(ChainState& s, Rng& rng);

  /// Gaussian log-likelihood given the random effects, over observed slots.
  double log_likelihood(const ChainState& s) const;

  std::vector<std::string> parameter_names() const;
  Eigen::RowVectorXd record(const ChainState& s) const;

  std::size_t jitter_events() const { return jitter_events_; }

 private:
  // y_k - X_k beta_k, minus alpha Fx beta_q on target rows.
  std::vector<Eigen::VectorXd> fixed_residuals(const ChainState& s) const;
  // Z_k b_i per row.
  Eigen::VectorXd random_part(const ChainState& s, int outcome) const;
  // Fz b_iq per target row.
  Eigen::VectorXd fz_part(const ChainState& s) const;
  GaussianCanonical fixed_effects_canonical(const ChainState& s, int outcome) const;
  GaussianCanonical random_effects_canonical(const ChainState& s, int subject,
                                             const std::vector<Eigen::VectorXd>& fixed_resid) const;
  int block_of(Eigen::Index effect) const;

  const DesignSet& design_;
  PriorConfig priors_;
  int source_ = -1;
  int target_ = -1;
  std::vector<Eigen::MatrixXd> xtx_;
  Eigen::MatrixXd fxtfx_;
  std::vector<std::vector<Eigen::MatrixXd>> ztz_;  // [subject][outcome]
  std::vector<Eigen::MatrixXd> ztfz_;              // [subject], r_target x r_source
  std::vector<Eigen::MatrixXd> fztfz_;             // [subject]
  std::size_t jitter_events_ = 0;
};

/// Runs one chain with seed stream (spec.mcmc.seed, chain_index).
ChainDraws run_chain(const DesignSet& design, const ModelSpec& spec, int chain_index);

/// Runs spec.mcmc.n_chains chains, in parallel up to `threads` workers.
std::vector<ChainDraws> run_chains(const DesignSet& design, const ModelSpec& spec, int threads = 1);

}  // namespace mvlme
