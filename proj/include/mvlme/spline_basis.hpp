#pragma once

#include <Eigen/Core>

#include <array>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace mvlme {

/// Knot configuration of a natural cubic spline basis without intercept.
/// `df` basis columns use `df - 1` interior knots.
struct KnotSet {
  double boundary_lo = 0.0;
  double boundary_hi = 1.0;
  std::vector<double> interior;
  int df = 1;

  /// Throws ValidationError when the ordering or count invariants fail.
  void validate() const;

  bool operator==(const KnotSet&) const = default;
};

/// Boundary knots at min/max of `times` (unless overridden), interior knots at
/// the equally spaced empirical quantiles k/df, k = 1..df-1 (type-7 rule).
KnotSet make_knots(std::span<const double> times, int df,
                   std::optional<std::pair<double, double>> boundary = std::nullopt);

/// Natural cubic spline basis stored as one cubic polynomial per knot segment
/// and column, so values, derivatives and definite integrals are all exact.
///
/// Column 0 is the linear term; column j >= 1 is the truncated-power
/// combination d_{j-1} - d_{K-2} over the K = df + 1 knots, evaluated on the
/// normalized coordinate u = (t - boundary_lo) / (boundary_hi - boundary_lo).
/// Outside the boundary knots every column is exactly linear.
class NaturalSplineBasis {
 public:
  explicit NaturalSplineBasis(KnotSet knots);

  const KnotSet& knots() const { return knots_; }
  int df() const { return knots_.df; }

  Eigen::VectorXd eval(double t) const;
  Eigen::VectorXd deriv(double t) const;
  /// Exact integral of each column over [a, b]; requires a <= b.
  Eigen::VectorXd integral(double a, double b) const;

 private:
  using Cubic = std::array<double, 4>;  // c0 + c1 w + c2 w^2 + c3 w^3, w = u - anchor

  std::size_t segment_of(double u) const;
  double anchor(std::size_t seg) const;
  double antiderivative_on(std::size_t seg, int col, double u_lo, double u_hi) const;

  KnotSet knots_;
  double width_ = 1.0;
  std::vector<double> breaks_;              // normalized knots 0 = xi_0 < ... < xi_{K-1} = 1
  std::vector<std::vector<Cubic>> coefs_;   // [column][segment], K + 1 segments
};

Eigen::VectorXd ns_eval(double t, const KnotSet& knots);
Eigen::VectorXd ns_deriv(double t, const KnotSet& knots);
Eigen::VectorXd ns_integral(double a, double b, const KnotSet& knots);

}  // namespace mvlme
