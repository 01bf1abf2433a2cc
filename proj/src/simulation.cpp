#include "mvlme/simulation.hpp"

#include "mvlme/error.hpp"
#include "mvlme/mcmc.hpp"
#include "mvlme/parallel.hpp"
#include "mvlme/random.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace mvlme {

std::string to_string(AssociationKind kind) {
  switch (kind) {
    case AssociationKind::none_shared_re_only: return "none";
    case AssociationKind::value: return "value";
    case AssociationKind::slope: return "slope";
    case AssociationKind::auc: return "auc";
  }
  return "none";
}

AssociationKind association_kind_from_string(const std::string& s) {
  if (s == "none" || s == "none_shared_re_only" || s.empty()) return AssociationKind::none_shared_re_only;
  if (s == "value") return AssociationKind::value;
  if (s == "slope") return AssociationKind::slope;
  if (s == "auc" || s == "area") return AssociationKind::auc;
  throw ValidationError("unknown association kind '" + s + "'");
}

void SimulationScenario::validate() const {
  if (n_subjects < 2) throw ValidationError("scenario needs at least 2 subjects");
  if (min_encounters < 1 || max_encounters < min_encounters)
    throw ValidationError("scenario encounter range invalid");
  if (!(time_lo >= 0.0 && time_hi > time_lo)) throw ValidationError("scenario time range invalid");
  if (!(time_scale > 0.0)) throw ValidationError("scenario time_scale must be > 0");
  if (!(sigma1 >= 0.0 && sigma2 >= 0.0)) throw ValidationError("scenario error sds must be >= 0");
  if (true_kind == AssociationKind::none_shared_re_only)
    throw ValidationError("scenario true association must be value, slope or auc");
  if (window_d && !(*window_d > 0.0)) throw ValidationError("scenario window_d must be > 0");
  if (!D.isApprox(D.transpose())) throw ValidationError("scenario D must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(D);
  if (eig.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, D.norm()))
    throw ValidationError("scenario D must be positive semi-definite");
}

namespace {

const std::vector<std::string> kTargetTerms{"intercept", "time", "x"};
const std::vector<std::string> kSourceTerms{"intercept", "time"};
const std::vector<std::string> kRandomTerms{"intercept", "time"};

DesignLayout linear_layout(bool with_covariate, double time_scale) {
  DesignLayout l;
  l.time_scale = time_scale;
  l.columns.push_back({"intercept", ColumnKind::intercept, 0});
  l.columns.push_back({"time", ColumnKind::time, 0});
  if (with_covariate) l.columns.push_back({"x", ColumnKind::covariate, 0});
  return l;
}

FunctionalKind functional_kind(AssociationKind k) {
  switch (k) {
    case AssociationKind::slope: return FunctionalKind::slope;
    case AssociationKind::auc: return FunctionalKind::auc;
    default: return FunctionalKind::value;
  }
}

}  // namespace

TruthRecord scenario_truth(const SimulationScenario& sc) {
  TruthRecord truth;
  for (std::size_t j = 0; j < kTargetTerms.size(); ++j)
    truth["beta.y1." + kTargetTerms[j]] = sc.beta1[static_cast<Eigen::Index>(j)];
  for (std::size_t j = 0; j < kSourceTerms.size(); ++j)
    truth["beta.y2." + kSourceTerms[j]] = sc.beta2[static_cast<Eigen::Index>(j)];
  truth["alpha"] = sc.alpha;
  truth["sigma.y1"] = sc.sigma1;
  truth["sigma.y2"] = sc.sigma2;
  for (int l = 0; l < 4; ++l) truth["D." + std::to_string(l) + "." + std::to_string(l)] = sc.D(l, l);
  return truth;
}

SimulatedData generate_dataset(const SimulationScenario& sc, int replicate_index) {
  sc.validate();
  Rng rng(sc.seed, static_cast<std::uint64_t>(replicate_index));

  // Symmetric square root handles singular (including zero) D.
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(sc.D);
  const Eigen::Vector4d root_eval = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::Matrix4d D_root = eig.eigenvectors() * root_eval.asDiagonal() * eig.eigenvectors().transpose();

  const DesignLayout src_layout = linear_layout(false, sc.time_scale);
  const DesignLayout tgt_layout = linear_layout(true, sc.time_scale);
  FunctionalQuery query;
  query.kind = functional_kind(sc.true_kind);
  query.window_d = sc.window_d;
  query.normalize_by = sc.normalize_by;

  SimulatedData out;
  out.data.outcome_names = {"y1", "y2"};
  out.data.covariate_names = {"x"};
  out.data.subjects.reserve(static_cast<std::size_t>(sc.n_subjects));
  const int width = static_cast<int>(std::to_string(sc.n_subjects).size());

  for (int i = 0; i < sc.n_subjects; ++i) {
    SubjectRecord s;
    std::string id = std::to_string(i + 1);
    s.id = "s" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id;
    const int n = rng.uniform_int(sc.min_encounters, sc.max_encounters);
    s.times.resize(static_cast<std::size_t>(n));
    for (double& t : s.times) t = rng.uniform(sc.time_lo, sc.time_hi);
    std::sort(s.times.begin(), s.times.end());
    const double x = rng.uniform() < sc.covariate_probability ? 1.0 : 0.0;
    Eigen::Vector4d z;
    for (int j = 0; j < 4; ++j) z[j] = rng.normal();
    const Eigen::Vector4d b = D_root * z;

    s.covariates = Eigen::MatrixXd::Constant(n, 1, x);
    s.outcomes.resize(n, 2);
    const CovariateHistory history{s.times, &s.covariates};
    for (int e = 0; e < n; ++e) {
      const double t = s.times[static_cast<std::size_t>(e)];
      const Eigen::VectorXd src_row = value_row(src_layout, t, history);
      const Eigen::VectorXd tgt_row = value_row(tgt_layout, t, history);
      query.t = t;
      const FunctionalRows f = functional_rows(query, src_layout, src_layout, history);
      const double functional = f.fx.dot(sc.beta2) + f.fz.dot(b.tail<2>());
      const double m2 = src_row.dot(sc.beta2) + src_row.dot(b.tail<2>());
      const double m1 = tgt_row.dot(sc.beta1) + tgt_row.head<2>().dot(b.head<2>()) + sc.alpha * functional;
      const double e2 = rng.normal();
      const double e1 = rng.normal();
      s.outcomes(e, 1) = m2 + sc.sigma2 * e2;
      s.outcomes(e, 0) = m1 + sc.sigma1 * e1;
    }
    out.data.subjects.push_back(std::move(s));
  }

  out.truth = scenario_truth(sc);
  return out;
}

std::string FittedStructure::label() const {
  switch (connection) {
    case Connection::re_only: return "RE";
    case Connection::assoc_only: return to_string(kind);
    case Connection::assoc_and_re: return to_string(kind) + "&RE";
  }
  return "?";
}

ModelSpec simulation_model_spec(const SimulationScenario& sc, const FittedStructure& structure,
                                const McmcConfig& mcmc, const PriorConfig& priors) {
  ModelSpec spec;
  spec.outcomes = {OutcomeModel{"y1", kTargetTerms, kRandomTerms, 2},
                   OutcomeModel{"y2", kSourceTerms, kRandomTerms, 2}};
  spec.time_scale = sc.time_scale;
  spec.priors = priors;
  spec.mcmc = mcmc;
  if (structure.connection == Connection::re_only) {
    spec.association = AssociationStructure{};
    spec.re_cross_outcome_correlation = true;
  } else {
    if (structure.kind == AssociationKind::none_shared_re_only)
      throw ValidationError("association structure needs value, slope or auc");
    spec.association.kind = structure.kind;
    spec.association.window_d = sc.window_d;
    spec.association.normalize_by = sc.normalize_by;
    spec.association.source_outcome = 1;
    spec.association.target_outcome = 0;
    spec.re_cross_outcome_correlation = structure.connection == Connection::assoc_and_re;
  }
  return spec;
}

std::vector<StructureFit> fit_structures(const SimulatedData& sim, const SimulationScenario& scenario,
                                         const std::vector<FittedStructure>& structures,
                                         const McmcConfig& mcmc) {
  std::vector<StructureFit> out;
  for (const FittedStructure& st : structures) {
    StructureFit fit;
    fit.structure = st;
    try {
      const ModelSpec spec = simulation_model_spec(scenario, st, mcmc);
      const DesignSet design = build_design(sim.data, spec);
      std::vector<ChainDraws> chains;
      for (int c = 0; c < spec.mcmc.n_chains; ++c) chains.push_back(run_chain(design, spec, c));
      fit.summary = summarize(chains, SummaryOptions{std::nullopt});
      fit.ok = true;
    } catch (const std::exception& e) {
      fit.error = st.label() + ": " + e.what();
    }
    out.push_back(std::move(fit));
  }
  return out;
}

const BiasCell* BiasTable::find(const std::string& scenario, const std::string& structure,
                                const std::string& parameter) const {
  for (const BiasCell& c : cells)
    if (c.scenario == scenario && c.structure == structure && c.parameter == parameter) return &c;
  return nullptr;
}

std::uint64_t replicate_mcmc_seed(const SimulationScenario& scenario, int replicate_index) {
  return derive_seed(scenario.seed ^ 0x5EEDF17ULL, static_cast<std::uint64_t>(replicate_index));
}

std::vector<std::string> tracked_parameters(const TruthRecord& truth) {
  std::vector<std::string> out;
  for (const auto& [name, value] : truth) out.push_back(name);
  return out;
}

SensitivityResult run_sensitivity(const std::vector<SimulationScenario>& scenarios, int replicates,
                                  const SensitivityOptions& options) {
  if (replicates < 1) throw ValidationError("replicates must be >= 1");
  if (options.structures.empty()) throw ValidationError("no fitted structures requested");
  for (const auto& sc : scenarios) sc.validate();

  struct Job {
    std::size_t scenario;
    int replicate;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < scenarios.size(); ++s)
    for (int r = 0; r < replicates; ++r) jobs.push_back({s, r});

  std::vector<std::vector<StructureFit>> fits(jobs.size());
  std::vector<TruthRecord> truths(scenarios.size());
  for (std::size_t s = 0; s < scenarios.size(); ++s) truths[s] = scenario_truth(scenarios[s]);

  parallel_for(jobs.size(), options.threads, [&](std::size_t j) {
    const SimulationScenario& sc = scenarios[jobs[j].scenario];
    McmcConfig mcmc = options.mcmc;
    mcmc.seed = replicate_mcmc_seed(sc, jobs[j].replicate);
    try {
      const SimulatedData sim = generate_dataset(sc, jobs[j].replicate);
      fits[j] = fit_structures(sim, sc, options.structures, mcmc);
    } catch (const std::exception& e) {
      for (const auto& st : options.structures) {
        StructureFit f;
        f.structure = st;
        f.error = st.label() + ": " + e.what();
        fits[j].push_back(std::move(f));
      }
    }
  });

  SensitivityResult result;
  for (std::size_t j = 0; j < jobs.size(); ++j)
    for (const StructureFit& f : fits[j])
      result.replicates.push_back({scenarios[jobs[j].scenario].name, jobs[j].replicate, f});

  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const SimulationScenario& sc = scenarios[s];
    for (std::size_t st = 0; st < options.structures.size(); ++st) {
      const std::string label = options.structures[st].label();
      for (const std::string& param : tracked_parameters(truths[s])) {
        BiasCell cell;
        cell.scenario = sc.name;
        cell.true_kind = sc.true_kind;
        cell.structure = label;
        cell.parameter = param;
        cell.truth = truths[s].at(param);
        double sum = 0.0;
        double abs_sum = 0.0;
        int covered = 0;
        bool present = false;
        for (std::size_t j = 0; j < jobs.size(); ++j) {
          if (jobs[j].scenario != s) continue;
          const StructureFit& f = fits[j][st];
          if (!f.ok) {
            ++cell.replicates_failed;
            continue;
          }
          const ParameterSummary* p = f.summary.find(param);
          if (p == nullptr) continue;
          present = true;
          ++cell.replicates_ok;
          sum += p->mean;
          abs_sum += std::abs(p->mean - cell.truth);
          if (p->q025 <= cell.truth && cell.truth <= p->q975) ++covered;
        }
        // Parameters the fitted structure does not contain (alpha under RE) get no cell.
        if (!present && cell.replicates_failed == 0) continue;
        if (cell.replicates_ok > 0) {
          const double n = cell.replicates_ok;
          cell.mean_estimate = sum / n;
          cell.bias = cell.mean_estimate - cell.truth;
          cell.mean_abs_error = abs_sum / n;
          cell.coverage = covered / n;
        }
        result.table.cells.push_back(std::move(cell));
      }
    }
  }
  return result;
}

}  // namespace mvlme
