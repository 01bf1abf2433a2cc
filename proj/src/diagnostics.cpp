#include "mvlme/diagnostics.hpp"

#include "mvlme/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mvlme {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_chains(const std::vector<Eigen::VectorXd>& chains, std::size_t min_chains) {
  if (chains.size() < min_chains)
    throw ValidationError("diagnostic needs at least " + std::to_string(min_chains) + " chains");
  const Eigen::Index n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw ValidationError("chains must have equal length");
  if (n < 10) throw ValidationError("chains must retain at least 10 draws");
}

double sample_variance(const Eigen::VectorXd& x) {
  const double m = x.mean();
  return (x.array() - m).square().sum() / static_cast<double>(x.size() - 1);
}

std::vector<Eigen::VectorXd> gather(const std::vector<ChainDraws>& chains, const std::string& param) {
  std::vector<Eigen::VectorXd> out;
  for (const auto& c : chains) out.push_back(c.values(param));
  return out;
}

}  // namespace

double split_rhat(const std::vector<Eigen::VectorXd>& chains) {
  check_chains(chains, 2);
  const Eigen::Index half = chains.front().size() / 2;
  std::vector<Eigen::VectorXd> split;
  for (const auto& c : chains) {
    split.push_back(c.head(half));
    split.push_back(c.tail(half));
  }
  const auto m = static_cast<double>(split.size());
  const auto n = static_cast<double>(half);
  Eigen::VectorXd means(split.size());
  double W = 0.0;
  for (std::size_t j = 0; j < split.size(); ++j) {
    means[static_cast<Eigen::Index>(j)] = split[j].mean();
    W += sample_variance(split[j]);
  }
  W /= m;
  if (!(W > 0.0)) throw ValidationError("zero within-chain variance");
  const double B = n * sample_variance(means);
  const double var_plus = (n - 1.0) / n * W + B / n;
  return std::sqrt(var_plus / W);
}

double gelman_rubin(const std::vector<ChainDraws>& chains, const std::string& param) {
  return split_rhat(gather(chains, param));
}

double effective_sample_size(const std::vector<Eigen::VectorXd>& chains) {
  check_chains(chains, 1);
  const auto m = static_cast<double>(chains.size());
  const Eigen::Index n = chains.front().size();
  const auto nd = static_cast<double>(n);

  Eigen::VectorXd means(chains.size());
  std::vector<Eigen::VectorXd> centered;
  double W = 0.0;
  for (std::size_t j = 0; j < chains.size(); ++j) {
    means[static_cast<Eigen::Index>(j)] = chains[j].mean();
    centered.push_back(chains[j].array() - chains[j].mean());
    W += sample_variance(chains[j]);
  }
  W /= m;
  if (!(W > 0.0)) throw ValidationError("degenerate chain: zero variance");
  const double B = chains.size() > 1 ? nd * sample_variance(means) : 0.0;
  const double var_plus = (nd - 1.0) / nd * W + B / nd;

  // Mean over chains of the biased autocovariance at `lag`.
  auto autocov = [&](Eigen::Index lag) {
    double total = 0.0;
    for (const auto& c : centered)
      total += c.head(n - lag).dot(c.tail(n - lag)) / nd;
    return total / m;
  };
  auto rho = [&](Eigen::Index lag) { return 1.0 - (W - autocov(lag)) / var_plus; };

  // Geyer initial positive sequence over pairs (rho_{2k} + rho_{2k+1}), made monotone.
  double sum_pairs = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; 2 * k + 1 < n; ++k) {
    double pair = rho(2 * k) + rho(2 * k + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    sum_pairs += pair;
  }
  const double tau = -1.0 + 2.0 * sum_pairs;
  const double total = m * nd;
  const double ess = total / std::max(tau, 1.0 / std::log10(std::max(total, 10.0)));
  return std::min(ess, total);
}

double effective_sample_size(const std::vector<ChainDraws>& chains, const std::string& param) {
  return effective_sample_size(gather(chains, param));
}

double bayes_p(std::span<const double> draws) {
  if (draws.empty()) throw ValidationError("bayes_p: no draws");
  std::size_t le = 0;
  std::size_t ge = 0;
  for (double x : draws) {
    if (x <= 0.0) ++le;
    if (x >= 0.0) ++ge;
  }
  const double n = static_cast<double>(draws.size());
  return std::min(1.0, 2.0 * std::min(static_cast<double>(le) / n, static_cast<double>(ge) / n));
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw ValidationError("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

const ParameterSummary* PosteriorSummary::find(const std::string& name) const {
  for (const auto& p : parameters)
    if (p.name == name) return &p;
  return nullptr;
}

namespace {

ParameterSummary summarize_columns(const std::string& name, const std::vector<Eigen::VectorXd>& cols) {
  std::vector<double> pooled;
  for (const auto& c : cols) pooled.insert(pooled.end(), c.data(), c.data() + c.size());
  // Sorted accumulation makes the pooled moments independent of chain order.
  std::sort(pooled.begin(), pooled.end());
  ParameterSummary s;
  s.name = name;
  const double n = static_cast<double>(pooled.size());
  s.mean = std::accumulate(pooled.begin(), pooled.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : pooled) ss += (x - s.mean) * (x - s.mean);
  s.sd = pooled.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  s.q025 = quantile(pooled, 0.025);
  s.q975 = quantile(pooled, 0.975);
  s.bayes_p = bayes_p(pooled);
  s.rhat = kNaN;
  s.ess = kNaN;
  try {
    if (cols.size() >= 2) s.rhat = split_rhat(cols);
  } catch (const ValidationError&) {
  }
  try {
    s.ess = effective_sample_size(cols);
  } catch (const ValidationError&) {
  }
  return s;
}

}  // namespace

PosteriorSummary summarize(const std::vector<ChainDraws>& chains, const SummaryOptions& options) {
  if (chains.empty()) throw ValidationError("summarize: no chains");
  const auto& names = chains.front().names;
  for (const auto& c : chains)
    if (c.names != names) throw ValidationError("summarize: chains have different parameters");
  PosteriorSummary out;
  out.n_chains = static_cast<int>(chains.size());
  for (const auto& c : chains) out.total_draws += static_cast<std::size_t>(c.draws.rows());
  if (out.total_draws == 0) throw ValidationError("summarize: no retained draws");

  for (std::size_t j = 0; j < names.size(); ++j) {
    std::vector<Eigen::VectorXd> cols;
    for (const auto& c : chains) cols.push_back(c.draws.col(static_cast<Eigen::Index>(j)));
    out.parameters.push_back(summarize_columns(names[j], cols));
    if (names[j] == "alpha" && options.alpha_report_scale) {
      for (auto& col : cols) col *= *options.alpha_report_scale;
      out.parameters.push_back(summarize_columns("alpha.scaled", cols));
    }
  }
  return out;
}

}  // namespace mvlme
