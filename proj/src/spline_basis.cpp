#include "mvlme/spline_basis.hpp"

#include "mvlme/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mvlme {

namespace {

void require_finite(double t, const char* what) {
  if (!std::isfinite(t)) throw ValidationError(std::string("non-finite ") + what);
}

// Type-7 quantile of sorted data.
double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

void KnotSet::validate() const {
  if (df < 1) throw ValidationError("spline df must be >= 1");
  if (!std::isfinite(boundary_lo) || !std::isfinite(boundary_hi) || !(boundary_lo < boundary_hi))
    throw ValidationError("spline boundary knots must be finite with lo < hi");
  if (interior.size() != static_cast<std::size_t>(df - 1))
    throw ValidationError("spline needs df - 1 interior knots");
  double prev = boundary_lo;
  for (double k : interior) {
    if (!std::isfinite(k) || !(k > prev)) throw ValidationError("spline knots must be strictly increasing");
    prev = k;
  }
  if (!(boundary_hi > prev)) throw ValidationError("spline knots must be strictly increasing");
}

KnotSet make_knots(std::span<const double> times, int df,
                   std::optional<std::pair<double, double>> boundary) {
  if (df < 1) throw ValidationError("spline df must be >= 1");
  if (times.empty()) throw ValidationError("make_knots: no times");
  std::vector<double> sorted(times.begin(), times.end());
  for (double t : sorted) require_finite(t, "time in knot placement");
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> uniq = sorted;
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (uniq.size() < static_cast<std::size_t>(df + 1))
    throw ValidationError("make_knots: insufficient distinct times (" + std::to_string(uniq.size()) +
                          ") for df = " + std::to_string(df));

  KnotSet knots;
  knots.df = df;
  knots.boundary_lo = sorted.front();
  knots.boundary_hi = sorted.back();
  if (boundary) {
    if (!(boundary->first < boundary->second)) throw ValidationError("make_knots: boundary lo >= hi");
    knots.boundary_lo = boundary->first;
    knots.boundary_hi = boundary->second;
  }
  for (int k = 1; k < df; ++k)
    knots.interior.push_back(quantile_sorted(sorted, static_cast<double>(k) / df));
  knots.validate();
  return knots;
}

NaturalSplineBasis::NaturalSplineBasis(KnotSet knots) : knots_(std::move(knots)) {
  knots_.validate();
  width_ = knots_.boundary_hi - knots_.boundary_lo;
  breaks_.push_back(0.0);
  for (double k : knots_.interior) breaks_.push_back((k - knots_.boundary_lo) / width_);
  breaks_.push_back(1.0);

  const std::size_t K = breaks_.size();  // number of knots
  const int df = knots_.df;

  // Truncated-power representation: column = lin * u + sum_j theta_j (u - xi_j)_+^3.
  std::vector<double> lin(df, 0.0);
  std::vector<std::vector<double>> theta(df, std::vector<double>(K, 0.0));
  lin[0] = 1.0;
  auto add_d = [&](std::vector<double>& th, std::size_t k, double sign) {
    const double denom = breaks_[K - 1] - breaks_[k];
    th[k] += sign / denom;
    th[K - 1] -= sign / denom;
  };
  for (int c = 1; c < df; ++c) {
    add_d(theta[c], static_cast<std::size_t>(c - 1), 1.0);
    add_d(theta[c], K - 2, -1.0);
  }

  // Segments: 0 = (-inf, 0], s = 1..K-1 covers [xi_{s-1}, xi_s], K = [1, inf).
  coefs_.assign(df, std::vector<Cubic>(K + 1, Cubic{0, 0, 0, 0}));
  for (int c = 0; c < df; ++c) {
    coefs_[c][0] = Cubic{0.0, lin[c], 0.0, 0.0};
    for (std::size_t s = 1; s < K; ++s) {
      const double p = breaks_[s - 1];
      Cubic poly{lin[c] * p, lin[c], 0.0, 0.0};
      for (std::size_t j = 0; j + 1 <= s; ++j) {
        const double delta = p - breaks_[j];
        poly[0] += theta[c][j] * delta * delta * delta;
        poly[1] += theta[c][j] * 3.0 * delta * delta;
        poly[2] += theta[c][j] * 3.0 * delta;
        poly[3] += theta[c][j];
      }
      coefs_[c][s] = poly;
    }
    const Cubic& last = coefs_[c][K - 1];
    const double w = 1.0 - breaks_[K - 2];
    const double value = last[0] + w * (last[1] + w * (last[2] + w * last[3]));
    const double slope = last[1] + w * (2.0 * last[2] + w * 3.0 * last[3]);
    coefs_[c][K] = Cubic{value, slope, 0.0, 0.0};
  }
}

std::size_t NaturalSplineBasis::segment_of(double u) const {
  if (u < 0.0) return 0;
  if (u >= 1.0) return breaks_.size();
  const auto it = std::upper_bound(breaks_.begin(), breaks_.end(), u);
  return static_cast<std::size_t>(std::distance(breaks_.begin(), it));
}

double NaturalSplineBasis::anchor(std::size_t seg) const {
  if (seg == 0) return 0.0;
  if (seg >= breaks_.size()) return 1.0;
  return breaks_[seg - 1];
}

Eigen::VectorXd NaturalSplineBasis::eval(double t) const {
  require_finite(t, "spline argument");
  const double u = (t - knots_.boundary_lo) / width_;
  const std::size_t seg = segment_of(u);
  const double w = u - anchor(seg);
  Eigen::VectorXd out(df());
  for (int c = 0; c < df(); ++c) {
    const Cubic& p = coefs_[c][seg];
    out[c] = p[0] + w * (p[1] + w * (p[2] + w * p[3]));
  }
  return out;
}

Eigen::VectorXd NaturalSplineBasis::deriv(double t) const {
  require_finite(t, "spline argument");
  const double u = (t - knots_.boundary_lo) / width_;
  const std::size_t seg = segment_of(u);
  const double w = u - anchor(seg);
  Eigen::VectorXd out(df());
  for (int c = 0; c < df(); ++c) {
    const Cubic& p = coefs_[c][seg];
    out[c] = (p[1] + w * (2.0 * p[2] + w * 3.0 * p[3])) / width_;
  }
  return out;
}

double NaturalSplineBasis::antiderivative_on(std::size_t seg, int col, double u_lo,
                                             double u_hi) const {
  const Cubic& p = coefs_[col][seg];
  const double a = anchor(seg);
  auto prim = [&](double u) {
    const double w = u - a;
    return w * (p[0] + w * (p[1] / 2.0 + w * (p[2] / 3.0 + w * p[3] / 4.0)));
  };
  return prim(u_hi) - prim(u_lo);
}

Eigen::VectorXd NaturalSplineBasis::integral(double a, double b) const {
  require_finite(a, "integration bound");
  require_finite(b, "integration bound");
  if (a > b) throw ValidationError("spline integral requires a <= b");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(df());
  if (a == b) return out;
  const double ua = (a - knots_.boundary_lo) / width_;
  const double ub = (b - knots_.boundary_lo) / width_;
  const std::size_t first = segment_of(ua);
  const std::size_t last = segment_of(ub);
  for (std::size_t seg = first; seg <= last; ++seg) {
    const double lo = seg == first ? ua : anchor(seg);
    const double hi = seg == last ? ub : (seg < breaks_.size() ? breaks_[seg] : ub);
    if (hi <= lo) continue;
    for (int c = 0; c < df(); ++c) out[c] += antiderivative_on(seg, c, lo, hi);
  }
  return out * width_;
}

Eigen::VectorXd ns_eval(double t, const KnotSet& knots) { return NaturalSplineBasis(knots).eval(t); }

Eigen::VectorXd ns_deriv(double t, const KnotSet& knots) { return NaturalSplineBasis(knots).deriv(t); }

Eigen::VectorXd ns_integral(double a, double b, const KnotSet& knots) {
  return NaturalSplineBasis(knots).integral(a, b);
}

}  // namespace mvlme
