#include "mvlme/functional_forms.hpp"

#include "mvlme/error.hpp"

#include <algorithm>
#include <cmath>

namespace mvlme {

bool DesignLayout::depends_on_time() const {
  return std::any_of(columns.begin(), columns.end(), [](const DesignColumn& c) {
    return c.kind == ColumnKind::time || c.kind == ColumnKind::spline;
  });
}

namespace {

const NaturalSplineBasis& spline_of(const DesignLayout& layout) {
  if (!layout.spline) throw ValidationError("design layout has spline columns but no basis");
  return *layout.spline;
}

// Index of the covariate row in effect at time t.
std::size_t active_row(std::span<const double> times, double t) {
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0;
  return static_cast<std::size_t>(std::distance(times.begin(), it)) - 1;
}

}  // namespace

double CovariateHistory::value_at(Eigen::Index column, double t) const {
  if (values == nullptr || values->rows() == 0) throw ValidationError("empty covariate history");
  if (times.empty()) return (*values)(0, column);
  return (*values)(static_cast<Eigen::Index>(active_row(times, t)), column);
}

double CovariateHistory::integral(Eigen::Index column, double a, double b) const {
  if (values == nullptr || values->rows() == 0) throw ValidationError("empty covariate history");
  if (times.size() <= 1) return (*values)(0, column) * (b - a);
  double total = 0.0;
  double lo = a;
  std::size_t row = active_row(times, a);
  while (lo < b) {
    const double next = row + 1 < times.size() ? std::max(times[row + 1], lo) : b;
    const double hi = std::min(next, b);
    total += (*values)(static_cast<Eigen::Index>(row), column) * (hi - lo);
    lo = hi;
    ++row;
  }
  return total;
}

Eigen::VectorXd value_row(const DesignLayout& layout, double t, const CovariateHistory& history) {
  Eigen::VectorXd row(layout.size());
  std::optional<Eigen::VectorXd> basis;
  for (Eigen::Index j = 0; j < layout.size(); ++j) {
    const DesignColumn& col = layout.columns[static_cast<std::size_t>(j)];
    switch (col.kind) {
      case ColumnKind::intercept: row[j] = 1.0; break;
      case ColumnKind::time: row[j] = t / layout.time_scale; break;
      case ColumnKind::spline:
        if (!basis) basis = spline_of(layout).eval(t);
        row[j] = (*basis)[col.index];
        break;
      case ColumnKind::covariate: row[j] = history.value_at(col.index, t); break;
    }
  }
  return row;
}

Eigen::VectorXd slope_row(const DesignLayout& layout, double t) {
  Eigen::VectorXd row = Eigen::VectorXd::Zero(layout.size());
  std::optional<Eigen::VectorXd> basis;
  for (Eigen::Index j = 0; j < layout.size(); ++j) {
    const DesignColumn& col = layout.columns[static_cast<std::size_t>(j)];
    if (col.kind == ColumnKind::time) {
      row[j] = 1.0 / layout.time_scale;
    } else if (col.kind == ColumnKind::spline) {
      if (!basis) basis = spline_of(layout).deriv(t);
      row[j] = (*basis)[col.index];
    }
  }
  return row;
}

Eigen::VectorXd integral_row(const DesignLayout& layout, double a, double b,
                             const CovariateHistory& history) {
  if (a > b) throw ValidationError("integral_row requires a <= b");
  Eigen::VectorXd row(layout.size());
  std::optional<Eigen::VectorXd> basis;
  for (Eigen::Index j = 0; j < layout.size(); ++j) {
    const DesignColumn& col = layout.columns[static_cast<std::size_t>(j)];
    switch (col.kind) {
      case ColumnKind::intercept: row[j] = b - a; break;
      case ColumnKind::time: row[j] = 0.5 * (b * b - a * a) / layout.time_scale; break;
      case ColumnKind::spline:
        if (!basis) basis = spline_of(layout).integral(a, b);
        row[j] = (*basis)[col.index];
        break;
      case ColumnKind::covariate: row[j] = history.integral(col.index, a, b); break;
    }
  }
  return row;
}

void validate_query(const FunctionalQuery& query) {
  if (!std::isfinite(query.t) || query.t < 0.0)
    throw ValidationError("functional query time must be finite and >= 0");
  if (query.window_d && !(*query.window_d > 0.0))
    throw ValidationError("window_d must be > 0");
}

Eigen::VectorXd functional_row(const FunctionalQuery& query, const DesignLayout& layout,
                               const CovariateHistory& history) {
  validate_query(query);
  const double t = query.t;
  switch (query.kind) {
    case FunctionalKind::value: return value_row(layout, t, history);
    case FunctionalKind::slope: return slope_row(layout, t);
    case FunctionalKind::auc: break;
  }
  const double lower = query.window_d ? std::max(0.0, t - *query.window_d) : 0.0;
  double normalizer = t;
  if (query.normalize_by == Normalization::one_over_window && query.window_d)
    normalizer = *query.window_d;
  if (normalizer < kNormalizedAreaTimeFloor) return value_row(layout, 0.0, history);
  return integral_row(layout, lower, t, history) / normalizer;
}

FunctionalRows functional_rows(const FunctionalQuery& query, const DesignLayout& fixed,
                               const DesignLayout& random, const CovariateHistory& history) {
  return FunctionalRows{functional_row(query, fixed, history), functional_row(query, random, history)};
}

FunctionalRows functional_rows(const FunctionalQuery& query, const DesignLayout& fixed,
                               const DesignLayout& random, const Eigen::VectorXd& covariate_row) {
  const Eigen::MatrixXd values = covariate_row.transpose();
  const CovariateHistory history{{}, &values};
  return functional_rows(query, fixed, random, history);
}

}  // namespace mvlme
