#include "mvlme/mcmc.hpp"

#include "mvlme/error.hpp"
#include "mvlme/parallel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <cmath>
#include <iostream>
#include <numbers>

namespace mvlme {

namespace {

constexpr double kJitter = 1e-10;

Eigen::LLT<Eigen::MatrixXd> factor_spd(const Eigen::MatrixXd& m, std::size_t& jitter_events,
                                       const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt;
  ++jitter_events;
  std::cerr << "mvlme: " << what << " not positive definite; retrying with diagonal jitter\n";
  Eigen::MatrixXd jittered = m;
  jittered.diagonal().array() += kJitter;
  llt.compute(jittered);
  if (llt.info() != Eigen::Success) throw NumericalError(std::string(what) + " is not positive definite");
  return llt;
}

Eigen::VectorXd solve_mean(const Eigen::MatrixXd& precision, const Eigen::VectorXd& rhs) {
  std::size_t ignored = 0;
  return factor_spd(precision, ignored, "conditional precision").solve(rhs);
}

GaussianConditional to_moments(const GaussianCanonical& c) { return {solve_mean(c.precision, c.shift), c.precision}; }

}  // namespace

Eigen::Index ChainDraws::column(std::string_view name) const {
  for (std::size_t j = 0; j < names.size(); ++j)
    if (names[j] == name) return static_cast<Eigen::Index>(j);
  return -1;
}

Eigen::VectorXd ChainDraws::values(std::string_view name) const {
  const Eigen::Index j = column(name);
  if (j < 0) throw ValidationError("unknown parameter " + std::string(name));
  return draws.col(j);
}

Eigen::VectorXd sample_gaussian(const GaussianConditional& cond, Rng& rng, std::size_t& jitter_events) {
  const auto llt = factor_spd(cond.precision, jitter_events, "conditional precision");
  Eigen::VectorXd z(cond.mean.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.normal();
  // L L' = P  =>  x = mean + L'^{-1} z has covariance P^{-1}.
  return cond.mean + llt.matrixU().solve(z);
}

Eigen::VectorXd sample_gaussian(const GaussianCanonical& cond, Rng& rng, std::size_t& jitter_events) {
  const auto llt = factor_spd(cond.precision, jitter_events, "conditional precision");
  Eigen::VectorXd z(cond.shift.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.normal();
  return llt.solve(cond.shift) + llt.matrixU().solve(z);
}

Eigen::MatrixXd sample_wishart(const WishartConditional& cond, Rng& rng) {
  const Eigen::Index p = cond.scale.rows();
  if (!(cond.df > static_cast<double>(p) - 1.0)) throw NumericalError("Wishart df too small");
  Eigen::LLT<Eigen::MatrixXd> llt(cond.scale);
  if (llt.info() != Eigen::Success) throw NumericalError("Wishart scale is not positive definite");
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    A(i, i) = std::sqrt(rng.chi_squared(cond.df - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) A(i, j) = rng.normal();
  }
  const Eigen::MatrixXd LA = llt.matrixL() * A;
  Eigen::MatrixXd W = LA * LA.transpose();
  return 0.5 * (W + W.transpose());
}

// ---------------------------------------------------------------------------

GibbsSampler::GibbsSampler(const DesignSet& design, const PriorConfig& priors)
    : design_(design), priors_(priors) {
  priors_.validate();
  if (design_.has_association()) {
    source_ = design_.association.source_outcome;
    target_ = design_.association.target_outcome;
  }
  for (const OutcomeDesign& od : design_.outcomes) xtx_.push_back(od.X.transpose() * od.X);
  if (source_ >= 0) fxtfx_ = design_.Fx.transpose() * design_.Fx;

  const int n = design_.n_subjects();
  ztz_.resize(static_cast<std::size_t>(n));
  ztfz_.resize(static_cast<std::size_t>(n));
  fztfz_.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    for (const OutcomeDesign& od : design_.outcomes) {
      const Eigen::Index lo = od.row_begin[ui];
      const Eigen::Index len = od.row_begin[ui + 1] - lo;
      const auto Zi = od.Z.middleRows(lo, len);
      ztz_[ui].push_back(Zi.transpose() * Zi);
    }
    if (source_ >= 0) {
      const OutcomeDesign& tgt = design_.outcomes[static_cast<std::size_t>(target_)];
      const Eigen::Index lo = tgt.row_begin[ui];
      const Eigen::Index len = tgt.row_begin[ui + 1] - lo;
      const auto Zi = tgt.Z.middleRows(lo, len);
      const auto Fi = design_.Fz.middleRows(lo, len);
      ztfz_[ui] = Zi.transpose() * Fi;
      fztfz_[ui] = Fi.transpose() * Fi;
    }
  }
}

ChainState GibbsSampler::initial_state() const {
  ChainState s;
  const int K = design_.n_outcomes();
  s.tau.resize(K);
  for (int k = 0; k < K; ++k) {
    const OutcomeDesign& od = design_.outcomes[static_cast<std::size_t>(k)];
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(od.n_fixed());
    double tau = 1.0;
    if (od.n_rows() > 0) {
      beta = od.X.colPivHouseholderQr().solve(od.y);
      const Eigen::Index dof = od.n_rows() - od.n_fixed();
      if (dof > 0) {
        const double var = (od.y - od.X * beta).squaredNorm() / static_cast<double>(dof);
        if (var > 0.0 && std::isfinite(var)) tau = 1.0 / var;
      }
    }
    if (!beta.allFinite()) beta.setZero();
    s.beta.push_back(beta);
    s.tau[k] = tau;
  }
  s.alpha = 0.0;
  s.b = Eigen::MatrixXd::Zero(design_.n_subjects(), design_.n_re);
  s.D_inverse = Eigen::MatrixXd::Identity(design_.n_re, design_.n_re);
  s.scale_hyper = Eigen::VectorXd::Ones(design_.n_re);
  return s;
}

Eigen::VectorXd GibbsSampler::random_part(const ChainState& s, int outcome) const {
  const auto k = static_cast<std::size_t>(outcome);
  const OutcomeDesign& od = design_.outcomes[k];
  Eigen::VectorXd out = Eigen::VectorXd::Zero(od.n_rows());
  const Eigen::Index r_k = od.n_random();
  if (r_k == 0) return out;
  const Eigen::Index off = design_.re_offset[k];
  for (Eigen::Index r = 0; r < od.n_rows(); ++r)
    out[r] = od.Z.row(r).dot(s.b.row(od.subject[static_cast<std::size_t>(r)]).segment(off, r_k));
  return out;
}

Eigen::VectorXd GibbsSampler::fz_part(const ChainState& s) const {
  const OutcomeDesign& tgt = design_.outcomes[static_cast<std::size_t>(target_)];
  const auto uq = static_cast<std::size_t>(source_);
  const Eigen::Index r_q = design_.outcomes[uq].n_random();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(tgt.n_rows());
  if (r_q == 0) return out;
  const Eigen::Index off = design_.re_offset[uq];
  for (Eigen::Index r = 0; r < tgt.n_rows(); ++r)
    out[r] = design_.Fz.row(r).dot(s.b.row(tgt.subject[static_cast<std::size_t>(r)]).segment(off, r_q));
  return out;
}

std::vector<Eigen::VectorXd> GibbsSampler::fixed_residuals(const ChainState& s) const {
  std::vector<Eigen::VectorXd> out;
  for (int k = 0; k < design_.n_outcomes(); ++k) {
    const OutcomeDesign& od = design_.outcomes[static_cast<std::size_t>(k)];
    Eigen::VectorXd e = od.y - od.X * s.beta[static_cast<std::size_t>(k)];
    if (k == target_) e -= s.alpha * (design_.Fx * s.beta[static_cast<std::size_t>(source_)]);
    out.push_back(std::move(e));
  }
  return out;
}

GaussianConditional GibbsSampler::fixed_effects_conditional(const ChainState& s, int outcome) const {
  return to_moments(fixed_effects_canonical(s, outcome));
}

GaussianCanonical GibbsSampler::fixed_effects_canonical(const ChainState& s, int outcome) const {
  const auto k = static_cast<std::size_t>(outcome);
  const OutcomeDesign& od = design_.outcomes[k];
  const Eigen::Index p = od.n_fixed();
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(p, p) / priors_.beta_prior_variance;
  P += s.tau[outcome] * xtx_[k];
  Eigen::VectorXd resid = od.y - random_part(s, outcome);
  if (outcome == target_) {
    resid -= s.alpha * (design_.Fx * s.beta[static_cast<std::size_t>(source_)] + fz_part(s));
  }
  Eigen::VectorXd h = s.tau[outcome] * (od.X.transpose() * resid);
  if (outcome == source_) {
    const auto ut = static_cast<std::size_t>(target_);
    const OutcomeDesign& tgt = design_.outcomes[ut];
    const Eigen::VectorXd rt =
        tgt.y - tgt.X * s.beta[ut] - random_part(s, target_) - s.alpha * fz_part(s);
    const double tau_t = s.tau[target_];
    P += tau_t * s.alpha * s.alpha * fxtfx_;
    h += tau_t * s.alpha * (design_.Fx.transpose() * rt);
  }
  return {P, h};
}

GaussianConditional GibbsSampler::association_conditional(const ChainState& s) const {
  if (!design_.has_association()) throw ValidationError("model has no association term");
  const auto ut = static_cast<std::size_t>(target_);
  const OutcomeDesign& tgt = design_.outcomes[ut];
  const Eigen::VectorXd f = design_.Fx * s.beta[static_cast<std::size_t>(source_)] + fz_part(s);
  const Eigen::VectorXd r = tgt.y - tgt.X * s.beta[ut] - random_part(s, target_);
  const double tau = s.tau[target_];
  const double precision = 1.0 / priors_.alpha_prior_variance + tau * f.squaredNorm();
  GaussianConditional c;
  c.precision = Eigen::MatrixXd::Constant(1, 1, precision);
  c.mean = Eigen::VectorXd::Constant(1, tau * f.dot(r) / precision);
  return c;
}

GaussianConditional GibbsSampler::random_effects_conditional(const ChainState& s, int subject) const {
  return to_moments(random_effects_canonical(s, subject, fixed_residuals(s)));
}

GaussianCanonical GibbsSampler::random_effects_canonical(
    const ChainState& s, int subject, const std::vector<Eigen::VectorXd>& fixed_resid) const {
  const auto ui = static_cast<std::size_t>(subject);
  Eigen::MatrixXd P = s.D_inverse;
  Eigen::VectorXd h = Eigen::VectorXd::Zero(design_.n_re);
  for (int k = 0; k < design_.n_outcomes(); ++k) {
    const auto uk = static_cast<std::size_t>(k);
    const OutcomeDesign& od = design_.outcomes[uk];
    const Eigen::Index r_k = od.n_random();
    if (r_k == 0) continue;
    const Eigen::Index off = design_.re_offset[uk];
    const Eigen::Index lo = od.row_begin[ui];
    const Eigen::Index len = od.row_begin[ui + 1] - lo;
    if (len == 0) continue;
    const double tau = s.tau[k];
    P.block(off, off, r_k, r_k) += tau * ztz_[ui][uk];
    h.segment(off, r_k) += tau * (od.Z.middleRows(lo, len).transpose() * fixed_resid[uk].segment(lo, len));
  }
  if (source_ >= 0) {
    const auto ut = static_cast<std::size_t>(target_);
    const auto uq = static_cast<std::size_t>(source_);
    const OutcomeDesign& tgt = design_.outcomes[ut];
    const Eigen::Index r_q = design_.outcomes[uq].n_random();
    const Eigen::Index r_t = tgt.n_random();
    const Eigen::Index lo = tgt.row_begin[ui];
    const Eigen::Index len = tgt.row_begin[ui + 1] - lo;
    if (r_q > 0 && len > 0) {
      const double tau = s.tau[target_];
      const double a = s.alpha;
      const Eigen::Index off_q = design_.re_offset[uq];
      const Eigen::Index off_t = design_.re_offset[ut];
      P.block(off_q, off_q, r_q, r_q) += tau * a * a * fztfz_[ui];
      if (r_t > 0) {
        P.block(off_t, off_q, r_t, r_q) += tau * a * ztfz_[ui];
        P.block(off_q, off_t, r_q, r_t) += tau * a * ztfz_[ui].transpose();
      }
      h.segment(off_q, r_q) +=
          tau * a * (design_.Fz.middleRows(lo, len).transpose() * fixed_resid[ut].segment(lo, len));
    }
  }
  return {P, h};
}

GammaConditional GibbsSampler::error_precision_conditional(const ChainState& s, int outcome) const {
  const OutcomeDesign& od = design_.outcomes[static_cast<std::size_t>(outcome)];
  const double ssr = (od.y - linear_predictor(design_, s, outcome)).squaredNorm();
  if (!(ssr >= 0.0)) throw NumericalError("non-finite residual sum of squares");
  return {priors_.error_precision_shape + 0.5 * static_cast<double>(od.n_rows()),
          priors_.error_precision_rate + 0.5 * ssr};
}

WishartConditional GibbsSampler::re_precision_conditional(const ChainState& s, int block) const {
  const auto& idx = design_.re_blocks[static_cast<std::size_t>(block)];
  const auto m = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index j = 0; j < m; ++j) R(j, j) = priors_.scale_hyper_multiplier * s.scale_hyper[idx[static_cast<std::size_t>(j)]];
  Eigen::MatrixXd bb(s.b.rows(), m);
  for (Eigen::Index j = 0; j < m; ++j) bb.col(j) = s.b.col(idx[static_cast<std::size_t>(j)]);
  R += bb.transpose() * bb;
  const double df = static_cast<double>(m + priors_.wishart_df_offset) + static_cast<double>(s.b.rows());
  Eigen::LLT<Eigen::MatrixXd> llt(R);
  if (llt.info() != Eigen::Success) throw NumericalError("Wishart inverse scale is not positive definite");
  return {df, llt.solve(Eigen::MatrixXd::Identity(m, m))};
}

int GibbsSampler::block_of(Eigen::Index effect) const {
  for (std::size_t b = 0; b < design_.re_blocks.size(); ++b)
    for (Eigen::Index j : design_.re_blocks[b])
      if (j == effect) return static_cast<int>(b);
  throw ValidationError("random effect not in any prior block");
}

GammaConditional GibbsSampler::scale_hyper_conditional(const ChainState& s, Eigen::Index effect) const {
  const auto& idx = design_.re_blocks[static_cast<std::size_t>(block_of(effect))];
  const double prior_df = static_cast<double>(idx.size()) + priors_.wishart_df_offset;
  return {priors_.scale_hyper_shape + 0.5 * prior_df,
          priors_.scale_hyper_rate + 0.5 * priors_.scale_hyper_multiplier * s.D_inverse(effect, effect)};
}

Eigen::VectorXd GibbsSampler::update_fixed_effects(const ChainState& s, int outcome, Rng& rng) {
  return sample_gaussian(fixed_effects_canonical(s, outcome), rng, jitter_events_);
}

double GibbsSampler::update_association(const ChainState& s, Rng& rng) {
  return sample_gaussian(association_conditional(s), rng, jitter_events_)[0];
}

Eigen::VectorXd GibbsSampler::update_random_effects(const ChainState& s, int subject, Rng& rng) {
  return sample_gaussian(random_effects_canonical(s, subject, fixed_residuals(s)), rng, jitter_events_);
}

Eigen::VectorXd GibbsSampler::update_error_precisions(const ChainState& s, Rng& rng) {
  Eigen::VectorXd tau(design_.n_outcomes());
  for (int k = 0; k < design_.n_outcomes(); ++k) {
    const GammaConditional c = error_precision_conditional(s, k);
    tau[k] = rng.gamma(c.shape, c.rate);
  }
  return tau;
}

void GibbsSampler::update_re_precision(ChainState& s, Rng& rng) {
  for (std::size_t blk = 0; blk < design_.re_blocks.size(); ++blk) {
    const auto& idx = design_.re_blocks[blk];
    const Eigen::MatrixXd W = sample_wishart(re_precision_conditional(s, static_cast<int>(blk)), rng);
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t c = 0; c < idx.size(); ++c) s.D_inverse(idx[a], idx[c]) = W(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c));
  }
  for (Eigen::Index l = 0; l < design_.n_re; ++l) {
    const GammaConditional c = scale_hyper_conditional(s, l);
    s.scale_hyper[l] = rng.gamma(c.shape, c.rate);
  }
}

void GibbsSampler::sweep(ChainState& s, Rng& rng) {
  for (int k = 0; k < design_.n_outcomes(); ++k) s.beta[static_cast<std::size_t>(k)] = update_fixed_effects(s, k, rng);
  if (design_.has_association()) s.alpha = update_association(s, rng);
  if (design_.n_re > 0) {
    const auto resid = fixed_residuals(s);
    for (int i = 0; i < design_.n_subjects(); ++i) {
      const GaussianCanonical c = random_effects_canonical(s, i, resid);
      s.b.row(i) = sample_gaussian(c, rng, jitter_events_).transpose();
    }
  }
  s.tau = update_error_precisions(s, rng);
  if (design_.n_re > 0) update_re_precision(s, rng);
}

double GibbsSampler::log_likelihood(const ChainState& s) const {
  double ll = 0.0;
  for (int k = 0; k < design_.n_outcomes(); ++k) {
    const OutcomeDesign& od = design_.outcomes[static_cast<std::size_t>(k)];
    const double ssr = (od.y - linear_predictor(design_, s, k)).squaredNorm();
    const double n = static_cast<double>(od.n_rows());
    ll += 0.5 * n * (std::log(s.tau[k]) - std::log(2.0 * std::numbers::pi)) - 0.5 * s.tau[k] * ssr;
  }
  if (!std::isfinite(ll)) throw NumericalError("non-finite log-likelihood");
  return ll;
}

std::vector<std::string> GibbsSampler::parameter_names() const {
  std::vector<std::string> names;
  for (const OutcomeDesign& od : design_.outcomes)
    for (const auto& c : od.fixed_layout.columns) names.push_back("beta." + od.name + "." + c.name);
  if (design_.has_association()) names.push_back("alpha");
  for (const OutcomeDesign& od : design_.outcomes) names.push_back("sigma." + od.name);
  for (const auto& idx : design_.re_blocks)
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c <= r; ++c)
        names.push_back("D." + std::to_string(idx[r]) + "." + std::to_string(idx[c]));
  for (Eigen::Index l = 0; l < design_.n_re; ++l) names.push_back("a." + std::to_string(l));
  return names;
}

Eigen::RowVectorXd GibbsSampler::record(const ChainState& s) const {
  std::vector<double> v;
  for (const auto& beta : s.beta)
    for (Eigen::Index j = 0; j < beta.size(); ++j) v.push_back(beta[j]);
  if (design_.has_association()) v.push_back(s.alpha);
  for (Eigen::Index k = 0; k < s.tau.size(); ++k) v.push_back(1.0 / std::sqrt(s.tau[k]));
  for (const auto& idx : design_.re_blocks) {
    const auto m = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd block(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
      for (Eigen::Index c = 0; c < m; ++c) block(a, c) = s.D_inverse(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(c)]);
    const Eigen::MatrixXd cov = block.llt().solve(Eigen::MatrixXd::Identity(m, m));
    for (Eigen::Index r = 0; r < m; ++r)
      for (Eigen::Index c = 0; c <= r; ++c) v.push_back(cov(r, c));
  }
  for (Eigen::Index l = 0; l < s.scale_hyper.size(); ++l) v.push_back(s.scale_hyper[l]);
  return Eigen::Map<Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// ---------------------------------------------------------------------------

ChainDraws run_chain(const DesignSet& design, const ModelSpec& spec, int chain_index) {
  spec.mcmc.validate();
  GibbsSampler sampler(design, spec.priors);
  Rng rng(spec.mcmc.seed, static_cast<std::uint64_t>(chain_index));
  ChainState state = sampler.initial_state();

  ChainDraws out;
  out.names = sampler.parameter_names();
  out.seed = spec.mcmc.seed;
  out.chain_index = chain_index;
  out.config = spec.mcmc;
  out.draws.resize(spec.mcmc.retained(), static_cast<Eigen::Index>(out.names.size()));

  const McmcConfig& cfg = spec.mcmc;
  const int total = cfg.adapt + cfg.n_iter;
  Eigen::Index kept = 0;
  for (int it = 0; it < total; ++it) {
    try {
      sampler.sweep(state, rng);
    } catch (const NumericalError& e) {
      throw NumericalError("chain " + std::to_string(chain_index) + ", iteration " + std::to_string(it) + ": " + e.what());
    }
    const int post = it - cfg.adapt;
    if (post < cfg.burn_in) continue;
    if ((post - cfg.burn_in + 1) % cfg.thin != 0) continue;
    if (kept >= out.draws.rows()) break;
    Eigen::RowVectorXd row = sampler.record(state);
    if (!row.allFinite())
      throw NumericalError("chain " + std::to_string(chain_index) + ", iteration " + std::to_string(it) +
                           ": non-finite parameter value");
    out.draws.row(kept++) = row;
  }
  out.jitter_events = sampler.jitter_events();
  return out;
}

std::vector<ChainDraws> run_chains(const DesignSet& design, const ModelSpec& spec, int threads) {
  std::vector<ChainDraws> chains(static_cast<std::size_t>(spec.mcmc.n_chains));
  parallel_for(chains.size(), threads, [&](std::size_t c) {
    chains[c] = run_chain(design, spec, static_cast<int>(c));
  });
  return chains;
}

}  // namespace mvlme
