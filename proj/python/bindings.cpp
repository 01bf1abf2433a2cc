#include "mvlme/diagnostics.hpp"
#include "mvlme/error.hpp"
#include "mvlme/io.hpp"
#include "mvlme/simulation.hpp"
#include "mvlme/spline_basis.hpp"
#include "mvlme/stratified.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace mvlme;

namespace {

py::dict summary_dict(const PosteriorSummary& s) {
  py::dict out;
  for (const ParameterSummary& p : s.parameters) {
    py::dict row;
    row["mean"] = p.mean;
    row["sd"] = p.sd;
    row["q2.5"] = p.q025;
    row["q97.5"] = p.q975;
    row["rhat"] = p.rhat;
    row["ess"] = p.ess;
    row["bayes_p"] = p.bayes_p;
    out[py::str(p.name)] = row;
  }
  return out;
}

std::vector<ChainDraws> chains_from_arrays(const std::vector<Eigen::MatrixXd>& draws,
                                           const std::vector<std::string>& names) {
  std::vector<ChainDraws> chains;
  for (std::size_t c = 0; c < draws.size(); ++c) {
    if (draws[c].cols() != static_cast<Eigen::Index>(names.size()))
      throw ValidationError("draw matrix width does not match the parameter names");
    ChainDraws d;
    d.names = names;
    d.draws = draws[c];
    d.chain_index = static_cast<int>(c);
    chains.push_back(std::move(d));
  }
  return chains;
}

}  // namespace

PYBIND11_MODULE(_mvlme, m) {
  m.doc() = "Bayesian multivariate mixed-effects models for longitudinal outcomes";
  m.attr("__version__") = MVLME_VERSION;

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<NaturalSplineBasis>(m, "NaturalSplineBasis")
      .def(py::init([](const std::vector<double>& times, int df) {
             return NaturalSplineBasis(make_knots(times, df));
           }),
           py::arg("times"), py::arg("df") = 2)
      .def_property_readonly("df", &NaturalSplineBasis::df)
      .def_property_readonly("boundary", [](const NaturalSplineBasis& b) {
        return std::make_pair(b.knots().boundary_lo, b.knots().boundary_hi);
      })
      .def_property_readonly("interior", [](const NaturalSplineBasis& b) { return b.knots().interior; })
      .def("eval", &NaturalSplineBasis::eval, py::arg("t"))
      .def("deriv", &NaturalSplineBasis::deriv, py::arg("t"))
      .def("integral", &NaturalSplineBasis::integral, py::arg("a"), py::arg("b"));

  m.def("split_rhat", &split_rhat, py::arg("chains"));
  m.def(
      "effective_sample_size",
      [](const std::vector<Eigen::VectorXd>& chains) { return effective_sample_size(chains); }, py::arg("chains"));
  m.def(
      "bayes_p", [](const std::vector<double>& draws) { return bayes_p(draws); }, py::arg("draws"));

  m.def(
      "summarize",
      [](const std::vector<Eigen::MatrixXd>& draws, const std::vector<std::string>& names, double report_scale) {
        return summary_dict(summarize(chains_from_arrays(draws, names), SummaryOptions{report_scale}));
      },
      py::arg("draws"), py::arg("names"), py::arg("report_scale") = 0.1,
      "Summary per parameter of a list of (draws x parameters) arrays.");

  m.def(
      "canonical_config",
      [](const std::string& text) {
        const RunConfig rc = parse_config_text(text);
        return py::make_tuple(serialize_config(rc), config_hash(rc));
      },
      py::arg("text"), "Fully resolved configuration JSON and its hash.");

  m.def(
      "fit",
      [](const fs::path& config, const fs::path& data, std::optional<std::uint64_t> seed, std::optional<int> chains,
         int threads) {
        RunConfig rc = parse_config(config);
        if (seed) rc.spec.mcmc.seed = *seed;
        if (chains) rc.spec.mcmc.n_chains = *chains;
        CsvSchema schema = rc.schema;
        schema.group_column.clear();
        const LongitudinalDataset ds = load_long_csv(data, schema);
        FitResult fit;
        {
          py::gil_scoped_release release;
          fit = fit_dataset(ds, rc.spec, rc.report_scale, config_hash(rc), threads);
        }
        py::list draws;
        for (const ChainDraws& c : fit.chains) draws.append(c.draws);
        py::dict out;
        out["names"] = fit.chains.front().names;
        out["draws"] = draws;
        out["summary"] = summary_dict(fit.summary);
        return out;
      },
      py::arg("config"), py::arg("data"), py::arg("seed") = py::none(), py::arg("chains") = py::none(),
      py::arg("threads") = 1);

  m.def(
      "fit_strata",
      [](const fs::path& config, const fs::path& data, const std::string& group_col, int min_n,
         std::optional<fs::path> out_dir) {
        RunConfig rc = parse_config(config);
        rc.schema.group_column = group_col;
        const LongitudinalDataset ds = load_long_csv(data, rc.schema);
        StratifiedOptions opts;
        opts.group_column = group_col;
        opts.min_n = min_n;
        opts.report_scale = rc.report_scale;
        opts.config_hash = config_hash(rc);
        opts.out_dir = out_dir;
        StratifiedResult r;
        {
          py::gil_scoped_release release;
          r = stratified_fit(ds, rc.spec, opts);
        }
        py::dict status;
        for (const GroupOutcome& g : r.manifest.groups) status[py::str(g.group)] = to_string(g.status);
        py::dict alpha;
        for (const GroupReport& g : r.reports)
          alpha[py::str(g.group)] = py::make_tuple(g.alpha.mean, g.alpha.sd, g.alpha.q025, g.alpha.q975);
        return py::make_tuple(status, alpha);
      },
      py::arg("config"), py::arg("data"), py::arg("group_col"), py::arg("min_n") = 120,
      py::arg("out_dir") = py::none(), "Returns ({group: status}, {group: (mean, sd, q2.5, q97.5) of alpha}).");

  m.def(
      "simulate_csv",
      [](const std::string& true_kind, int replicate, std::uint64_t seed, int n_subjects) {
        SimulationScenario sc;
        sc.true_kind = association_kind_from_string(true_kind);
        sc.seed = seed;
        sc.n_subjects = n_subjects;
        const SimulatedData sim = generate_dataset(sc, replicate);
        return py::make_tuple(format_long_csv(sim.data), sim.truth);
      },
      py::arg("true_kind") = "value", py::arg("replicate") = 0, py::arg("seed") = 20240601,
      py::arg("n_subjects") = 200, "Synthetic cohort as CSV text plus its true parameter values.");
}
