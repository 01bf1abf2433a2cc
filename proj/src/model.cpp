#include "mvlme/model.hpp"

#include "mvlme/error.hpp"

#include <algorithm>
#include <set>

namespace mvlme {

namespace {

template <typename... Parts>
std::string cat(Parts&&... parts) {
  std::string out;
  ((out += parts), ...);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Data

void LongitudinalDataset::validate(std::pair<double, double> admissible_time) const {
  const auto K = static_cast<Eigen::Index>(outcome_names.size());
  const auto P = static_cast<Eigen::Index>(covariate_names.size());
  if (K == 0) throw ValidationError("dataset has no outcomes");
  for (const SubjectRecord& s : subjects) {
    const Eigen::Index n = s.n_encounters();
    if (n == 0) throw ValidationError(cat("subject ", s.id, " has no encounters"));
    if (s.outcomes.rows() != n || s.outcomes.cols() != K)
      throw ValidationError(cat("subject ", s.id, ": outcome matrix shape mismatch"));
    if (s.covariates.rows() != n || s.covariates.cols() != P)
      throw ValidationError(cat("subject ", s.id, ": covariate matrix shape mismatch"));
    for (Eigen::Index e = 0; e < n; ++e) {
      const double t = s.times[static_cast<std::size_t>(e)];
      if (!std::isfinite(t)) throw ValidationError(cat("subject ", s.id, ": non-finite time"));
      if (t < admissible_time.first || t > admissible_time.second)
        throw ValidationError(cat("subject ", s.id, ": time ", std::to_string(t), " outside admissible range"));
      if (e > 0 && t < s.times[static_cast<std::size_t>(e - 1)])
        throw ValidationError(cat("subject ", s.id, ": times not sorted"));
      bool any = false;
      for (Eigen::Index k = 0; k < K; ++k) {
        const double v = s.outcomes(e, k);
        if (is_missing(v)) continue;
        if (!std::isfinite(v)) throw ValidationError(cat("subject ", s.id, ": non-finite outcome"));
        any = true;
      }
      if (!any) throw ValidationError(cat("subject ", s.id, ": encounter with every outcome missing"));
      for (Eigen::Index p = 0; p < P; ++p)
        if (!std::isfinite(s.covariates(e, p)))
          throw ValidationError(cat("subject ", s.id, ": non-finite covariate ", covariate_names[p]));
    }
  }
}

std::size_t LongitudinalDataset::n_encounters() const {
  std::size_t n = 0;
  for (const auto& s : subjects) n += s.times.size();
  return n;
}

int LongitudinalDataset::outcome_index(const std::string& name) const {
  const auto it = std::find(outcome_names.begin(), outcome_names.end(), name);
  return it == outcome_names.end() ? -1 : static_cast<int>(it - outcome_names.begin());
}

int LongitudinalDataset::covariate_index(const std::string& name) const {
  const auto it = std::find(covariate_names.begin(), covariate_names.end(), name);
  return it == covariate_names.end() ? -1 : static_cast<int>(it - covariate_names.begin());
}

LongitudinalDataset rescale_source_outcome(const LongitudinalDataset& data, int outcome, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) throw ValidationError("rescale factor must be > 0");
  if (outcome < 0 || outcome >= static_cast<int>(data.outcome_names.size()))
    throw ValidationError("rescale: source outcome index out of range");
  LongitudinalDataset out = data;
  out.source_scale = data.source_scale * factor;
  if (factor == 1.0) return out;
  for (SubjectRecord& s : out.subjects) s.outcomes.col(outcome) *= factor;
  return out;
}

// ---------------------------------------------------------------------------
// Spec

void PriorConfig::validate() const {
  if (!(beta_prior_variance > 0 && alpha_prior_variance > 0 && error_precision_shape > 0 &&
        error_precision_rate > 0 && scale_hyper_shape > 0 && scale_hyper_rate > 0 &&
        scale_hyper_multiplier > 0))
    throw ValidationError("prior hyperparameters must be strictly positive");
  if (wishart_df_offset < 1) throw ValidationError("wishart_df_offset must be >= 1");
}

void McmcConfig::validate() const {
  if (n_chains < 1) throw ValidationError("n_chains must be >= 1");
  if (thin < 1) throw ValidationError("thin must be >= 1");
  if (burn_in < 0 || adapt < 0) throw ValidationError("burn_in and adapt must be >= 0");
  if (burn_in + adapt >= n_iter) throw ValidationError("burn_in + adapt must be < n_iter");
  if (retained() < 1) throw ValidationError("MCMC schedule retains no draws");
}

McmcConfig McmcConfig::desk() {
  McmcConfig c;
  c.n_iter = 6000;
  c.burn_in = 1000;
  c.thin = 10;
  c.adapt = 0;
  return c;
}

int ModelSpec::outcome_index(const std::string& name) const {
  for (std::size_t k = 0; k < outcomes.size(); ++k)
    if (outcomes[k].name == name) return static_cast<int>(k);
  return -1;
}

void ModelSpec::validate() const {
  if (outcomes.empty()) throw ValidationError("model has no outcomes");
  std::set<std::string> names;
  for (const OutcomeModel& o : outcomes) {
    if (!names.insert(o.name).second) throw ValidationError(cat("duplicate outcome ", o.name));
    if (o.fixed.empty()) throw ValidationError(cat("outcome ", o.name, " has no fixed effects"));
    if (o.spline_df < 1) throw ValidationError(cat("outcome ", o.name, ": spline_df must be >= 1"));
    std::set<std::string> fixed(o.fixed.begin(), o.fixed.end());
    if (fixed.size() != o.fixed.size()) throw ValidationError(cat("outcome ", o.name, ": duplicate fixed term"));
    std::set<std::string> random;
    for (const std::string& r : o.random) {
      if (!fixed.count(r))
        throw ValidationError(cat("outcome ", o.name, ": random term ", r, " is not a fixed term"));
      if (!random.insert(r).second) throw ValidationError(cat("outcome ", o.name, ": duplicate random term"));
    }
  }
  const auto K = static_cast<int>(outcomes.size());
  if (association.active()) {
    const int q = association.source_outcome;
    const int t = association.target_outcome;
    if (q < 0 || q >= K || t < 0 || t >= K) throw ValidationError("association outcome index out of range");
    if (q == t) throw ValidationError("association source and target must differ");
  }
  if (association.window_d && !(*association.window_d > 0.0)) throw ValidationError("window_d must be > 0");
  if (!(time_scale > 0.0)) throw ValidationError("time_scale must be > 0");
  if (!(admissible_time.first < admissible_time.second)) throw ValidationError("admissible time range is empty");
  priors.validate();
  mcmc.validate();
}

// ---------------------------------------------------------------------------
// Design

std::vector<std::string> OutcomeDesign::fixed_names() const {
  std::vector<std::string> out;
  for (const auto& c : fixed_layout.columns) out.push_back(c.name);
  return out;
}

std::vector<std::string> OutcomeDesign::random_names() const {
  std::vector<std::string> out;
  for (const auto& c : random_layout.columns) out.push_back(c.name);
  return out;
}

std::vector<std::string> DesignSet::random_effect_names() const {
  std::vector<std::string> out;
  for (const OutcomeDesign& o : outcomes)
    for (const auto& c : o.random_layout.columns) out.push_back(o.name + ":" + c.name);
  return out;
}

namespace {

DesignLayout make_layout(const std::vector<std::string>& terms, const OutcomeModel& model,
                         const LongitudinalDataset& data, double time_scale,
                         const std::optional<NaturalSplineBasis>& basis) {
  DesignLayout layout;
  layout.time_scale = time_scale;
  for (const std::string& term : terms) {
    if (term == "intercept") {
      layout.columns.push_back({"intercept", ColumnKind::intercept, 0});
    } else if (term == "time") {
      layout.columns.push_back({"time", ColumnKind::time, 0});
    } else if (term == "ns") {
      if (!basis) throw ValidationError(cat("outcome ", model.name, ": spline basis unavailable"));
      layout.spline = basis;
      for (int j = 0; j < model.spline_df; ++j)
        layout.columns.push_back({"ns" + std::to_string(j + 1), ColumnKind::spline, j});
    } else {
      const int idx = data.covariate_index(term);
      if (idx < 0) throw ValidationError(cat("outcome ", model.name, ": unknown covariate ", term));
      layout.columns.push_back({term, ColumnKind::covariate, idx});
    }
  }
  return layout;
}

void require_finite_rows(const Eigen::MatrixXd& m, const std::string& what) {
  if (!m.allFinite()) throw ValidationError(cat("non-finite entry in ", what));
}

}  // namespace

DesignSet build_design(const LongitudinalDataset& data, const ModelSpec& spec) {
  spec.validate();
  data.validate(spec.admissible_time);

  const int K = static_cast<int>(spec.outcomes.size());
  const int n_subjects = static_cast<int>(data.subjects.size());
  DesignSet design;
  design.association = spec.association;
  for (const auto& s : data.subjects) design.subject_ids.push_back(s.id);

  std::vector<int> data_col(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const OutcomeModel& om = spec.outcomes[static_cast<std::size_t>(k)];
    data_col[static_cast<std::size_t>(k)] = data.outcome_index(om.name);
    if (data_col[static_cast<std::size_t>(k)] < 0)
      throw ValidationError(cat("outcome ", om.name, " not found in data"));
  }

  for (int k = 0; k < K; ++k) {
    const OutcomeModel& om = spec.outcomes[static_cast<std::size_t>(k)];
    const int col = data_col[static_cast<std::size_t>(k)];

    std::vector<double> observed_times;
    for (const auto& s : data.subjects)
      for (Eigen::Index e = 0; e < s.n_encounters(); ++e)
        if (!is_missing(s.outcomes(e, col))) observed_times.push_back(s.times[static_cast<std::size_t>(e)]);
    if (observed_times.empty()) throw ValidationError(cat("outcome ", om.name, " is missing everywhere"));

    const bool uses_spline = std::find(om.fixed.begin(), om.fixed.end(), "ns") != om.fixed.end();
    std::optional<NaturalSplineBasis> basis;
    if (uses_spline) basis.emplace(make_knots(observed_times, om.spline_df));

    OutcomeDesign od;
    od.name = om.name;
    od.fixed_layout = make_layout(om.fixed, om, data, spec.time_scale, basis);
    od.random_layout = make_layout(om.random, om, data, spec.time_scale, basis);

    const auto n_rows = static_cast<Eigen::Index>(observed_times.size());
    od.X.resize(n_rows, od.fixed_layout.size());
    od.Z.resize(n_rows, od.random_layout.size());
    od.y.resize(n_rows);
    od.row_begin.reserve(static_cast<std::size_t>(n_subjects) + 1);
    Eigen::Index r = 0;
    for (int i = 0; i < n_subjects; ++i) {
      const SubjectRecord& s = data.subjects[static_cast<std::size_t>(i)];
      od.row_begin.push_back(r);
      const CovariateHistory history{s.times, &s.covariates};
      for (Eigen::Index e = 0; e < s.n_encounters(); ++e) {
        const double v = s.outcomes(e, col);
        if (is_missing(v)) continue;
        const double t = s.times[static_cast<std::size_t>(e)];
        od.X.row(r) = value_row(od.fixed_layout, t, history);
        od.Z.row(r) = value_row(od.random_layout, t, history);
        od.y[r] = v;
        od.subject.push_back(i);
        od.encounter.push_back(static_cast<int>(e));
        ++r;
      }
    }
    od.row_begin.push_back(r);
    require_finite_rows(od.X, om.name + " fixed design");
    require_finite_rows(od.Z, om.name + " random design");
    design.outcomes.push_back(std::move(od));
  }

  Eigen::Index offset = 0;
  for (const auto& od : design.outcomes) {
    design.re_offset.push_back(offset);
    offset += od.n_random();
  }
  design.n_re = offset;
  if (spec.re_cross_outcome_correlation) {
    std::vector<Eigen::Index> all;
    for (Eigen::Index j = 0; j < design.n_re; ++j) all.push_back(j);
    if (!all.empty()) design.re_blocks.push_back(std::move(all));
  } else {
    for (int k = 0; k < K; ++k) {
      std::vector<Eigen::Index> block;
      for (Eigen::Index j = 0; j < design.outcomes[static_cast<std::size_t>(k)].n_random(); ++j)
        block.push_back(design.re_offset[static_cast<std::size_t>(k)] + j);
      if (!block.empty()) design.re_blocks.push_back(std::move(block));
    }
  }

  const AssociationStructure& assoc = spec.association;
  if (assoc.active()) {
    const OutcomeDesign& src = design.outcomes[static_cast<std::size_t>(assoc.source_outcome)];
    const OutcomeDesign& tgt = design.outcomes[static_cast<std::size_t>(assoc.target_outcome)];
    design.Fx.resize(tgt.n_rows(), src.n_fixed());
    design.Fz.resize(tgt.n_rows(), src.n_random());
    FunctionalQuery query;
    query.kind = assoc.kind == AssociationKind::value   ? FunctionalKind::value
                 : assoc.kind == AssociationKind::slope ? FunctionalKind::slope
                                                        : FunctionalKind::auc;
    query.window_d = assoc.window_d;
    query.normalize_by = assoc.normalize_by;
    for (Eigen::Index r = 0; r < tgt.n_rows(); ++r) {
      const SubjectRecord& s = data.subjects[static_cast<std::size_t>(tgt.subject[static_cast<std::size_t>(r)])];
      query.t = s.times[static_cast<std::size_t>(tgt.encounter[static_cast<std::size_t>(r)])];
      const CovariateHistory history{s.times, &s.covariates};
      FunctionalRows rows = functional_rows(query, src.fixed_layout, src.random_layout, history);
      design.Fx.row(r) = rows.fx;
      design.Fz.row(r) = rows.fz;
    }
    require_finite_rows(design.Fx, "association design");
    require_finite_rows(design.Fz, "association design");
  }
  return design;
}

Eigen::VectorXd association_covariate(const DesignSet& design, const ChainState& state) {
  if (!design.has_association()) throw ValidationError("model has no association term");
  const int q = design.association.source_outcome;
  const int target = design.association.target_outcome;
  const OutcomeDesign& tgt = design.outcomes[static_cast<std::size_t>(target)];
  const auto uq = static_cast<std::size_t>(q);
  const Eigen::Index off = design.re_offset[uq];
  const Eigen::Index rq = design.outcomes[uq].n_random();
  if (state.beta[uq].size() != design.Fx.cols()) throw ValidationError("beta dimension mismatch");
  Eigen::VectorXd f = design.Fx * state.beta[uq];
  if (rq > 0) {
    for (Eigen::Index r = 0; r < tgt.n_rows(); ++r)
      f[r] += design.Fz.row(r).dot(state.b.row(tgt.subject[static_cast<std::size_t>(r)]).segment(off, rq));
  }
  return f;
}

Eigen::VectorXd linear_predictor(const DesignSet& design, const ChainState& state, int outcome) {
  if (outcome < 0 || outcome >= design.n_outcomes()) throw ValidationError("outcome index out of range");
  const auto k = static_cast<std::size_t>(outcome);
  const OutcomeDesign& od = design.outcomes[k];
  if (state.beta.size() != design.outcomes.size() || state.beta[k].size() != od.n_fixed())
    throw ValidationError("beta dimension mismatch");
  if (state.b.rows() != design.n_subjects() || state.b.cols() != design.n_re)
    throw ValidationError("random effect dimension mismatch");
  Eigen::VectorXd m = od.X * state.beta[k];
  const Eigen::Index off = design.re_offset[k];
  if (od.n_random() > 0) {
    for (Eigen::Index r = 0; r < od.n_rows(); ++r)
      m[r] += od.Z.row(r).dot(state.b.row(od.subject[static_cast<std::size_t>(r)]).segment(off, od.n_random()));
  }
  if (design.has_association() && outcome == design.association.target_outcome)
    m += state.alpha * association_covariate(design, state);
  return m;
}

}  // namespace mvlme
