#pragma once

#include "mvlme/model.hpp"
#include "mvlme/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace testing_util {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = fs::temp_directory_path() /
            ("mvlme_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

/// Two outcomes "a" and "b" over n subjects, each with 3-6 encounters in
/// [1, 15], a binary covariate "x", and a few missing slots.
inline mvlme::LongitudinalDataset small_dataset(int n_subjects, std::uint64_t seed, bool with_missing = true) {
  mvlme::Rng rng(seed, 99);
  mvlme::LongitudinalDataset d;
  d.outcome_names = {"a", "b"};
  d.covariate_names = {"x"};
  for (int i = 0; i < n_subjects; ++i) {
    mvlme::SubjectRecord s;
    s.id = "s" + std::to_string(100 + i);
    const int n = rng.uniform_int(3, 6);
    for (int e = 0; e < n; ++e) s.times.push_back(rng.uniform(1.0, 15.0));
    std::sort(s.times.begin(), s.times.end());
    s.outcomes.resize(n, 2);
    s.covariates.resize(n, 1);
    const double x = rng.uniform() < 0.5 ? 1.0 : 0.0;
    const double bi = rng.normal();
    for (int e = 0; e < n; ++e) {
      const double t = s.times[static_cast<std::size_t>(e)];
      s.outcomes(e, 1) = 0.5 + 0.05 * t + 0.2 * bi + 0.1 * rng.normal();
      s.outcomes(e, 0) = 20.0 - 0.5 * t + 2.0 * x + 3.0 * bi + rng.normal();
      s.covariates(e, 0) = x;
    }
    if (with_missing && n > 3) {
      s.outcomes(1, i % 2) = mvlme::kMissing;
    }
    d.subjects.push_back(std::move(s));
  }
  return d;
}

/// Model for small_dataset: a ~ intercept + time + x with random intercept and
/// slope, b ~ intercept + time with random intercept and slope.
inline mvlme::ModelSpec small_spec(mvlme::AssociationKind kind, std::optional<double> window = std::nullopt) {
  mvlme::ModelSpec spec;
  spec.outcomes = {mvlme::OutcomeModel{"a", {"intercept", "time", "x"}, {"intercept", "time"}, 2},
                   mvlme::OutcomeModel{"b", {"intercept", "time"}, {"intercept", "time"}, 2}};
  spec.time_scale = 10.0;
  spec.association.kind = kind;
  spec.association.window_d = window;
  if (kind != mvlme::AssociationKind::none_shared_re_only) {
    spec.association.source_outcome = 1;
    spec.association.target_outcome = 0;
  }
  spec.re_cross_outcome_correlation = kind == mvlme::AssociationKind::none_shared_re_only;
  spec.mcmc.n_chains = 2;
  spec.mcmc.n_iter = 400;
  spec.mcmc.burn_in = 100;
  spec.mcmc.thin = 3;
  spec.mcmc.adapt = 0;
  spec.mcmc.seed = 11;
  return spec;
}

/// Composite trapezoid rule with n intervals.
inline double trapezoid(const std::function<double(double)>& f, double a, double b, long n) {
  const double h = (b - a) / static_cast<double>(n);
  double s = 0.5 * (f(a) + f(b));
  for (long i = 1; i < n; ++i) s += f(a + h * static_cast<double>(i));
  return s * h;
}

/// Gradient and Hessian of a quadratic function of x around 0 by central
/// differences. Exact up to rounding for quadratics.
struct Quadratic {
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

inline Quadratic quadratic_form(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::Index n,
                                const Eigen::VectorXd& center, double step) {
  Quadratic q;
  q.gradient.resize(n);
  q.hessian.resize(n, n);
  auto at = [&](Eigen::Index i, double di, Eigen::Index j, double dj) {
    Eigen::VectorXd x = center;
    if (i >= 0) x[i] += di;
    if (j >= 0) x[j] += dj;
    return f(x);
  };
  const double f0 = f(center);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double fp = at(i, step, -1, 0), fm = at(i, -step, -1, 0);
    q.gradient[i] = (fp - fm) / (2 * step);
    q.hessian(i, i) = (fp - 2 * f0 + fm) / (step * step);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double h = (at(i, step, j, step) - at(i, step, j, -step) - at(i, -step, j, step) +
                        at(i, -step, j, -step)) /
                       (4 * step * step);
      q.hessian(i, j) = q.hessian(j, i) = h;
    }
  }
  return q;
}

}  // namespace testing_util
