#pragma once

#include "mvlme/spline_basis.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mvlme {

enum class FunctionalKind { value, slope, auc };
enum class Normalization { one_over_t, one_over_window };

/// Below this time the 1/t-normalized area is replaced by its t -> 0 limit, the value at 0.
inline constexpr double kNormalizedAreaTimeFloor = 1e-8;

struct FunctionalQuery {
  FunctionalKind kind = FunctionalKind::value;
  double t = 0.0;
  std::optional<double> window_d;  // absent = full history from 0
  Normalization normalize_by = Normalization::one_over_t;
};

enum class ColumnKind { intercept, time, spline, covariate };

/// One column of a design row, described by how it depends on time.
struct DesignColumn {
  std::string name;
  ColumnKind kind = ColumnKind::intercept;
  int index = 0;  // spline column or covariate column, depending on kind
};

/// Column layout of a fixed- or random-effects design. `time` columns are
/// t / time_scale; covariates are step functions of the subject's history.
struct DesignLayout {
  std::vector<DesignColumn> columns;
  double time_scale = 1.0;
  std::optional<NaturalSplineBasis> spline;

  Eigen::Index size() const { return static_cast<Eigen::Index>(columns.size()); }
  bool depends_on_time() const;
};

/// Covariate history of one subject: values in row j hold from times[j] up to
/// times[j + 1]; before times[0] the first row applies.
struct CovariateHistory {
  std::span<const double> times;
  const Eigen::MatrixXd* values = nullptr;  // n_i x P

  double value_at(Eigen::Index column, double t) const;
  double integral(Eigen::Index column, double a, double b) const;
};

Eigen::VectorXd value_row(const DesignLayout& layout, double t, const CovariateHistory& history);
Eigen::VectorXd slope_row(const DesignLayout& layout, double t);
Eigen::VectorXd integral_row(const DesignLayout& layout, double a, double b,
                             const CovariateHistory& history);

/// Design row g(t) such that the functional of the latent trajectory x(s)'beta
/// equals g(t)'beta.
Eigen::VectorXd functional_row(const FunctionalQuery& query, const DesignLayout& layout,
                               const CovariateHistory& history);

struct FunctionalRows {
  Eigen::VectorXd fx;
  Eigen::VectorXd fz;
};

FunctionalRows functional_rows(const FunctionalQuery& query, const DesignLayout& fixed,
                               const DesignLayout& random, const CovariateHistory& history);

/// Time-fixed covariates given as a single row.
FunctionalRows functional_rows(const FunctionalQuery& query, const DesignLayout& fixed,
                               const DesignLayout& random, const Eigen::VectorXd& covariate_row);

void validate_query(const FunctionalQuery& query);

}  // namespace mvlme
