#include "mvlme/error.hpp"
#include "mvlme/functional_forms.hpp"
#include "mvlme/random.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

using namespace mvlme;

namespace {

DesignLayout spline_layout(double time_scale = 1.0) {
  DesignLayout l;
  l.time_scale = time_scale;
  l.spline = NaturalSplineBasis(make_knots(std::vector<double>{6, 8, 9, 12, 14, 17, 20}, 2));
  l.columns = {{"intercept", ColumnKind::intercept, 0},
               {"ns1", ColumnKind::spline, 0},
               {"ns2", ColumnKind::spline, 1},
               {"time", ColumnKind::time, 0}};
  return l;
}

DesignLayout covariate_layout() {
  DesignLayout l;
  l.time_scale = 10.0;
  l.columns = {{"intercept", ColumnKind::intercept, 0},
               {"time", ColumnKind::time, 0},
               {"z", ColumnKind::covariate, 0}};
  return l;
}

const Eigen::MatrixXd kNoCovariates = Eigen::MatrixXd::Zero(1, 0);

}  // namespace

TEST(ValueRow, ColumnKinds) {
  const DesignLayout l = spline_layout(10.0);
  const CovariateHistory h{{}, &kNoCovariates};
  const Eigen::VectorXd row = value_row(l, 13.0, h);
  const Eigen::VectorXd ns = l.spline->eval(13.0);
  EXPECT_EQ(row[0], 1.0);
  EXPECT_EQ(row[1], ns[0]);
  EXPECT_EQ(row[2], ns[1]);
  EXPECT_DOUBLE_EQ(row[3], 1.3);
}

TEST(SlopeRow, MatchesFiniteDifferenceOfValue) {
  const DesignLayout l = spline_layout(4.0);
  const CovariateHistory h{{}, &kNoCovariates};
  for (double t : {0.5, 6.0, 7.3, 11.0, 19.9, 25.0}) {
    const double e = 1e-6;
    const Eigen::VectorXd fd = (value_row(l, t + e, h) - value_row(l, t - e, h)) / (2 * e);
    EXPECT_LT((slope_row(l, t) - fd).cwiseAbs().maxCoeff(), 1e-6) << t;
  }
}

TEST(SlopeRow, CovariatesAndInterceptHaveZeroSlope) {
  const Eigen::VectorXd s = slope_row(covariate_layout(), 5.0);
  EXPECT_EQ(s[0], 0.0);
  EXPECT_DOUBLE_EQ(s[1], 0.1);
  EXPECT_EQ(s[2], 0.0);
}

TEST(AucRow, FullHistoryMatchesQuadrature) {
  const DesignLayout l = spline_layout(10.0);
  const CovariateHistory h{{}, &kNoCovariates};
  for (double t : {3.0, 9.5, 18.0}) {
    FunctionalQuery q{FunctionalKind::auc, t, std::nullopt, Normalization::one_over_t};
    const Eigen::VectorXd row = functional_row(q, l, h);
    for (Eigen::Index c = 0; c < l.size(); ++c) {
      const double want =
          testing_util::trapezoid([&](double s) { return value_row(l, s, h)[c]; }, 0.0, t, 100000) / t;
      EXPECT_NEAR(row[c], want, 1e-8 * (1.0 + std::abs(want)));
    }
  }
}

TEST(AucRow, WindowedNormalizations) {
  const DesignLayout l = spline_layout();
  const CovariateHistory h{{}, &kNoCovariates};
  const double t = 15.0, d = 5.0;
  const Eigen::VectorXd area = integral_row(l, t - d, t, h);
  FunctionalQuery q{FunctionalKind::auc, t, d, Normalization::one_over_t};
  EXPECT_LT((functional_row(q, l, h) - area / t).cwiseAbs().maxCoeff(), 1e-14);
  q.normalize_by = Normalization::one_over_window;
  EXPECT_LT((functional_row(q, l, h) - area / d).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(AucRow, WindowClampedAtZero) {
  const DesignLayout l = covariate_layout();
  const Eigen::MatrixXd z = Eigen::MatrixXd::Constant(1, 1, 2.0);
  const CovariateHistory h{{}, &z};
  FunctionalQuery q{FunctionalKind::auc, 3.0, 10.0, Normalization::one_over_t};
  const Eigen::VectorXd row = functional_row(q, l, h);
  EXPECT_DOUBLE_EQ(row[0], 1.0);
  EXPECT_DOUBLE_EQ(row[1], 0.5 * 9.0 / 10.0 / 3.0);
  EXPECT_DOUBLE_EQ(row[2], 2.0);
}

TEST(AucRow, WideWindowEqualsFullHistoryBitwise) {
  const DesignLayout l = spline_layout(10.0);
  const CovariateHistory h{{}, &kNoCovariates};
  for (double t : {0.0, 2.0, 7.5, 19.0}) {
    const FunctionalQuery full{FunctionalKind::auc, t, std::nullopt, Normalization::one_over_t};
    const FunctionalQuery wide{FunctionalKind::auc, t, 19.0, Normalization::one_over_t};
    EXPECT_EQ(functional_row(full, l, h), functional_row(wide, l, h)) << t;
  }
}

TEST(AucRow, TimeZeroUsesValueAtZero) {
  const DesignLayout l = spline_layout();
  const CovariateHistory h{{}, &kNoCovariates};
  const FunctionalQuery q{FunctionalKind::auc, 0.0, std::nullopt, Normalization::one_over_t};
  EXPECT_EQ(functional_row(q, l, h), value_row(l, 0.0, h));
  const FunctionalQuery tiny{FunctionalKind::auc, 1e-12, std::nullopt, Normalization::one_over_t};
  EXPECT_EQ(functional_row(tiny, l, h), value_row(l, 0.0, h));
}

TEST(CovariateHistory, StepFunctionIntegral) {
  const std::vector<double> times{2.0, 5.0, 9.0};
  Eigen::MatrixXd v(3, 1);
  v << 1.0, 3.0, -2.0;
  const CovariateHistory h{times, &v};
  EXPECT_EQ(h.value_at(0, 0.0), 1.0);
  EXPECT_EQ(h.value_at(0, 5.0), 3.0);
  EXPECT_EQ(h.value_at(0, 8.9), 3.0);
  EXPECT_EQ(h.value_at(0, 20.0), -2.0);
  // [0,5): 1, [5,9): 3, [9,12]: -2
  EXPECT_DOUBLE_EQ(h.integral(0, 0.0, 12.0), 5.0 + 12.0 - 6.0);
  EXPECT_DOUBLE_EQ(h.integral(0, 6.0, 10.0), 9.0 - 2.0);
  EXPECT_DOUBLE_EQ(h.integral(0, 6.0, 6.0), 0.0);
}

TEST(FunctionalRows, TimeFixedCovariateRow) {
  DesignLayout fixed = covariate_layout();
  DesignLayout random;
  random.time_scale = 10.0;
  random.columns = {{"intercept", ColumnKind::intercept, 0}, {"time", ColumnKind::time, 0}};
  Eigen::VectorXd cov(1);
  cov << 4.0;
  const FunctionalQuery q{FunctionalKind::auc, 8.0, 4.0, Normalization::one_over_window};
  const FunctionalRows r = functional_rows(q, fixed, random, cov);
  // (1/4) int_4^8 [1, s/10, 4] ds = [1, 0.6, 4]
  EXPECT_DOUBLE_EQ(r.fx[0], 1.0);
  EXPECT_DOUBLE_EQ(r.fx[1], 0.6);
  EXPECT_DOUBLE_EQ(r.fx[2], 4.0);
  EXPECT_DOUBLE_EQ(r.fz[0], 1.0);
  EXPECT_DOUBLE_EQ(r.fz[1], 0.6);
}

TEST(FunctionalQuery, Validation) {
  FunctionalQuery q{FunctionalKind::auc, 5.0, 0.0, Normalization::one_over_t};
  EXPECT_THROW(validate_query(q), ValidationError);
  q.window_d = -1.0;
  EXPECT_THROW(validate_query(q), ValidationError);
  q.window_d = 2.0;
  q.t = -1.0;
  EXPECT_THROW(validate_query(q), ValidationError);
  q.t = 1.0;
  EXPECT_NO_THROW(validate_query(q));
}

TEST(FunctionalRow, SplineLayoutWithoutBasisThrows) {
  DesignLayout l;
  l.columns = {{"ns1", ColumnKind::spline, 0}};
  const CovariateHistory h{{}, &kNoCovariates};
  EXPECT_THROW(value_row(l, 1.0, h), ValidationError);
}
