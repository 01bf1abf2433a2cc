#include "mvlme/error.hpp"
#include "mvlme/io.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace mvlme;
using testing_util::TempDir;

namespace {

const CsvSchema kSchema{{"fev1", "dep"}, {"age0"}, {}, ""};

const char* const kTwoByThree =
    "id,time,fev1,dep,age0\n"
    "a,1,90,0.3,6\n"
    "a,2,88,0.31,6\n"
    "a,3.5,85,,6\n"
    "b,1.2,70,0.6,7\n"
    "b,2,,0.62,7\n"
    "b,4,66,0.61,7\n";

const char* const kConfig = R"({
  "outcomes": [
    {"name": "fev1", "fixed": ["intercept", "ns", "gender", "genotype", "age0"], "random": ["intercept"]},
    {"name": "dep", "fixed": ["intercept", "time"], "random": ["intercept", "time"]}
  ],
  "association": {"kind": "auc", "window_d": 2, "source": "dep", "target": "fev1"},
  "time_scale": 10,
  "data": {"categorical": {"gender": ["F", "M"], "genotype": ["none", "one", "two"]}, "group_column": "state"},
  "mcmc": {"n_iter": 500, "burn_in": 100, "thin": 2, "seed": 3, "adapt": 0},
  "report": {"scale": 0.1, "min_n": 50}
})";

ChainDraws make_chain(int index, std::uint64_t seed) {
  Rng rng(seed);
  ChainDraws c;
  c.names = {"beta.y.intercept", "alpha", "D.1.0"};
  c.draws.resize(25, 3);
  for (Eigen::Index r = 0; r < c.draws.rows(); ++r)
    for (Eigen::Index j = 0; j < 3; ++j) c.draws(r, j) = rng.normal() * std::pow(10.0, static_cast<double>(j * 3 - 4));
  c.draws(0, 0) = 0.1;
  c.draws(1, 0) = 1.0 / 3.0;
  c.draws(2, 0) = -5e-310;
  c.chain_index = index;
  c.seed = seed;
  c.config_hash = "00000000deadbeef";
  c.jitter_events = 2;
  c.config.seed = seed;
  return c;
}

}  // namespace

TEST(LoadCsv, CompleteTwoSubjects) {
  const LongitudinalDataset d = parse_long_csv(kTwoByThree, kSchema);
  ASSERT_EQ(d.subjects.size(), 2u);
  EXPECT_EQ(d.subjects[0].n_encounters() + d.subjects[1].n_encounters(), 6);
  EXPECT_EQ(d.subjects[1].id, "b");
  EXPECT_TRUE(is_missing(d.subjects[0].outcomes(2, 1)));
  EXPECT_TRUE(is_missing(d.subjects[1].outcomes(1, 0)));
  EXPECT_EQ(d.subjects[0].times[2], 3.5);
  EXPECT_EQ(d.covariate_names, (std::vector<std::string>{"age0"}));
  EXPECT_NO_THROW(d.validate());
}

TEST(LoadCsv, EveryOutcomeMissingNamesLine) {
  const std::string text = "id,time,fev1,dep,age0\na,1,90,0.3,6\na,2,,NA,6\n";
  try {
    parse_long_csv(text, kSchema);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LoadCsv, UnsortedIsSortedAndRoundTripIsIdempotent) {
  const std::string shuffled =
      "id,time,fev1,dep,age0\r\n"
      "b,4,66,0.61,7\r\n"
      "a,3.5,85,,6\r\n"
      "b,1.2,70,0.6,7\r\n"
      "a,1,90,0.3,6\r\n"
      "b,2,,0.62,7\r\n"
      "a,2,88,0.31,6\r\n";
  const LongitudinalDataset d = parse_long_csv(shuffled, kSchema);
  const LongitudinalDataset sorted = parse_long_csv(kTwoByThree, kSchema);
  EXPECT_EQ(format_long_csv(d), format_long_csv(sorted));
  EXPECT_EQ(d.subjects[1].times, (std::vector<double>{1.2, 2.0, 4.0}));

  TempDir tmp;
  write_long_csv(d, tmp / "d.csv");
  const LongitudinalDataset again = load_long_csv(tmp / "d.csv", kSchema);
  EXPECT_EQ(format_long_csv(again), format_long_csv(d));
  for (std::size_t i = 0; i < d.subjects.size(); ++i) {
    EXPECT_EQ(again.subjects[i].times, d.subjects[i].times);
    EXPECT_TRUE((again.subjects[i].outcomes.array() == d.subjects[i].outcomes.array() ||
                 (again.subjects[i].outcomes.array().isNaN() && d.subjects[i].outcomes.array().isNaN()))
                    .all());
  }
}

TEST(LoadCsv, RoundTripKeepsFullPrecision) {
  const LongitudinalDataset sim = testing_util::small_dataset(10, 4);
  const CsvSchema schema{{"a", "b"}, {"x"}, {}, ""};
  const LongitudinalDataset back = parse_long_csv(format_long_csv(sim), schema);
  ASSERT_EQ(back.subjects.size(), sim.subjects.size());
  for (std::size_t i = 0; i < sim.subjects.size(); ++i) {
    EXPECT_EQ(back.subjects[i].times, sim.subjects[i].times);
    for (Eigen::Index e = 0; e < sim.subjects[i].n_encounters(); ++e)
      for (Eigen::Index k = 0; k < 2; ++k) {
        const double a = sim.subjects[i].outcomes(e, k), b = back.subjects[i].outcomes(e, k);
        EXPECT_TRUE(a == b || (is_missing(a) && is_missing(b)));
      }
  }
}

TEST(LoadCsv, Errors) {
  EXPECT_THROW(parse_long_csv("id,fev1,dep,age0\na,1,2,3\n", kSchema), ValidationError);
  EXPECT_THROW(parse_long_csv("id,time,fev1,dep\na,1,2,3\n", kSchema), ValidationError);
  EXPECT_THROW(parse_long_csv("id,time,fev1,dep,age0\na,1,x,3,4\n", kSchema), ValidationError);
  EXPECT_THROW(parse_long_csv("id,time,fev1,dep,age0\na,1,2,3\n", kSchema), ValidationError);
  EXPECT_THROW(parse_long_csv("id,time,fev1,dep,age0\na,1,2,3,4\na,1,5,6,4\n", kSchema), ValidationError);
  EXPECT_THROW(parse_long_csv("id,time,fev1,dep,age0\n", kSchema), ValidationError);
  EXPECT_THROW(parse_long_csv("", kSchema), ValidationError);
}

TEST(LoadCsv, DuplicateNamesBothLines) {
  try {
    parse_long_csv("id,time,fev1,dep,age0\na,1,2,3,4\nb,1,2,3,4\na,1,5,6,4\n", kSchema);
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  }
}

TEST(LoadCsv, CategoricalAndGroups) {
  CsvSchema s{{"fev1"}, {}, {{"gender", {"F", "M"}}, {"geno", {"n", "o", "t"}}}, "state"};
  const std::string text =
      "\xEF\xBB\xBF"
      "id,time,fev1,gender,geno,state\n"
      "p1,1,90,M,t,\"North, East\"\n"
      "p1,2,91,M,t,\"North, East\"\n"
      "p2,1,80,F,o,South\n";
  const LongitudinalDataset d = parse_long_csv(text, s);
  EXPECT_EQ(d.covariate_names, (std::vector<std::string>{"gender:M", "geno:o", "geno:t"}));
  EXPECT_EQ(d.subjects[0].covariates.row(0), Eigen::RowVector3d(1, 0, 1));
  EXPECT_EQ(d.subjects[1].covariates.row(0), Eigen::RowVector3d(0, 1, 0));
  EXPECT_EQ(d.subjects[0].group, "North, East");
  EXPECT_EQ(d.group_column, "state");
  EXPECT_THROW(parse_long_csv("id,time,fev1,gender,geno,state\np1,1,90,X,t,S\n", s), ValidationError);
  EXPECT_THROW(parse_long_csv("id,time,fev1,gender,geno,state\np1,1,90,M,t,\n", s), ValidationError);
  EXPECT_THROW(
      parse_long_csv("id,time,fev1,gender,geno,state\np1,1,90,M,t,A\np1,2,90,M,t,B\n", s), ValidationError);
}

TEST(Config, ParsesAndExpandsCategoricals) {
  const RunConfig rc = parse_config_text(kConfig);
  EXPECT_EQ(rc.spec.outcomes[0].fixed,
            (std::vector<std::string>{"intercept", "ns", "gender:M", "genotype:one", "genotype:two", "age0"}));
  EXPECT_EQ(rc.schema.outcomes, (std::vector<std::string>{"fev1", "dep"}));
  EXPECT_EQ(rc.schema.covariates, (std::vector<std::string>{"age0"}));
  EXPECT_EQ(rc.schema.group_column, "state");
  EXPECT_EQ(rc.spec.association.kind, AssociationKind::auc);
  ASSERT_TRUE(rc.spec.association.window_d);
  EXPECT_EQ(*rc.spec.association.window_d, 2.0);
  EXPECT_EQ(rc.spec.association.source_outcome, 1);
  EXPECT_FALSE(rc.spec.re_cross_outcome_correlation);
  EXPECT_EQ(rc.spec.mcmc.n_iter, 500);
  EXPECT_EQ(rc.spec.mcmc.n_chains, McmcConfig{}.n_chains);
  EXPECT_EQ(rc.min_n, 50);
  EXPECT_EQ(rc.spec.priors, PriorConfig{});
}

TEST(Config, EmptyAssociationMeansSharedRandomEffects) {
  const RunConfig rc = parse_config_text(R"({"outcomes": [{"name": "y", "fixed": ["intercept"]},
                                                          {"name": "z", "fixed": ["intercept"]}],
                                             "association": {}})");
  EXPECT_EQ(rc.spec.association.kind, AssociationKind::none_shared_re_only);
  EXPECT_TRUE(rc.spec.re_cross_outcome_correlation);
  EXPECT_EQ(rc.report_scale, 0.1);
  EXPECT_EQ(rc.min_n, 120);
}

TEST(Config, RoundTrip) {
  const RunConfig rc = parse_config_text(kConfig);
  const std::string text = serialize_config(rc);
  const RunConfig again = parse_config_text(text);
  EXPECT_EQ(again, rc);
  EXPECT_EQ(serialize_config(again), text);
  EXPECT_EQ(config_hash(again), config_hash(rc));
  EXPECT_EQ(config_hash(rc).size(), 16u);
}

TEST(Config, Errors) {
  const std::string outcomes = R"("outcomes": [{"name": "y", "fixed": ["intercept", "time"]},
                                               {"name": "z", "fixed": ["intercept", "time"]}])";
  auto with = [&](const std::string& extra) { return "{" + outcomes + (extra.empty() ? "" : ", " + extra) + "}"; };
  EXPECT_NO_THROW(parse_config_text(with("")));
  EXPECT_THROW(parse_config_text(with(R"("colour": 1)")), ValidationError);
  EXPECT_THROW(parse_config_text(with(R"("mcmc": {"iters": 5})")), ValidationError);
  EXPECT_THROW(parse_config_text(with(R"("association": {"kind": "curvature", "source": "z", "target": "y"})")),
               ValidationError);
  EXPECT_THROW(
      parse_config_text(with(R"("association": {"kind": "auc", "window_d": 0, "source": "z", "target": "y"})")),
      ValidationError);
  EXPECT_THROW(
      parse_config_text(with(R"("association": {"kind": "auc", "window_d": -2, "source": "z", "target": "y"})")),
      ValidationError);
  EXPECT_THROW(
      parse_config_text(with(R"("association": {"kind": "value", "window_d": 5, "source": "z", "target": "y"})")),
      ValidationError);
  EXPECT_THROW(parse_config_text(with(R"("association": {"window_d": 5})")), ValidationError);
  EXPECT_THROW(parse_config_text(with(R"("association": {"kind": "value", "source": "z"})")), ValidationError);
  EXPECT_THROW(parse_config_text(with(R"("association": {"kind": "value", "source": "q", "target": "y"})")),
               ValidationError);
  EXPECT_THROW(parse_config_text(with(R"("time_scale": "ten")")), ValidationError);
  EXPECT_THROW(parse_config_text(with(R"("report": {"min_n": 0})")), ValidationError);
  EXPECT_THROW(parse_config_text("{not json"), ValidationError);
  EXPECT_THROW(parse_config_text(R"({"outcomes": []})"), ValidationError);
  EXPECT_THROW(parse_config_text(R"({"outcomes": [{"name": "y", "fixed": ["intercept"], "random": ["x"]}]})"),
               ValidationError);
}

TEST(Config, WindowedAucActivatesWindowedRows) {
  const RunConfig rc = parse_config_text(kConfig);
  LongitudinalDataset d;
  d.outcome_names = {"fev1", "dep"};
  d.covariate_names = rc.schema.covariate_columns();
  for (int i = 0; i < 4; ++i) {
    SubjectRecord s;
    s.id = std::to_string(i);
    s.times = {1.0 + i, 5.0, 9.0};
    s.outcomes = Eigen::MatrixXd::Constant(3, 2, 1.0);
    s.covariates = Eigen::MatrixXd::Zero(3, 4);
    d.subjects.push_back(s);
  }
  const DesignSet ds = build_design(d, rc.spec);
  // Row at t = 9: (1/9) int_7^9 1 ds for the source intercept.
  EXPECT_NEAR(ds.Fx(2, 0), 2.0 / 9.0, 1e-14);
}

TEST(SimulationConfig, DefaultsAndOverrides) {
  const SimulationConfig def = default_simulation_config();
  EXPECT_EQ(def.scenarios.size(), 3u);
  EXPECT_EQ(def.structures.size(), 7u);
  EXPECT_EQ(def.replicates, 100);
  EXPECT_EQ(def.mcmc, McmcConfig::desk());

  const SimulationConfig c = parse_simulation_config_text(R"({
    "replicates": 4,
    "structures": ["value", "RE", "auc&RE"],
    "scenarios": [{"name": "s", "true_kind": "slope", "n_subjects": 50, "D": [1, 2, 3, 4]},
                  {"name": "t", "D": [[1,0,0,0],[0,1,0.5,0],[0,0.5,1,0],[0,0,0,1]]}]
  })");
  EXPECT_EQ(c.replicates, 4);
  ASSERT_EQ(c.structures.size(), 3u);
  EXPECT_EQ(c.structures[2].label(), "auc&RE");
  EXPECT_EQ(c.scenarios[0].true_kind, AssociationKind::slope);
  EXPECT_EQ(c.scenarios[0].D(3, 3), 4.0);
  EXPECT_EQ(c.scenarios[1].D(1, 2), 0.5);
  EXPECT_THROW(parse_simulation_config_text(R"({"structures": ["none"]})"), ValidationError);
  EXPECT_THROW(parse_simulation_config_text(R"({"scenarios": [{"name": "a"}, {"name": "a"}]})"), ValidationError);
  EXPECT_THROW(parse_simulation_config_text(R"({"scenarios": [{"D": [1, 2]}]})"), ValidationError);
  EXPECT_THROW(parse_simulation_config_text(R"({"replicates": 0})"), ValidationError);
}

TEST(Chains, WriteReadBitExact) {
  TempDir tmp;
  const std::vector<ChainDraws> chains{make_chain(0, 5), make_chain(1, 6)};
  write_chains(chains, tmp.path());
  EXPECT_TRUE(fs::exists(tmp / "chain_0.csv"));
  EXPECT_TRUE(fs::exists(tmp / "chain_1.json"));
  const LoadedChains back = read_chains(tmp.path(), std::string("00000000deadbeef"));
  EXPECT_TRUE(back.warnings.empty());
  ASSERT_EQ(back.chains.size(), 2u);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_EQ(back.chains[c].names, chains[c].names);
    EXPECT_EQ(back.chains[c].draws, chains[c].draws);
    EXPECT_EQ(back.chains[c].seed, chains[c].seed);
    EXPECT_EQ(back.chains[c].chain_index, chains[c].chain_index);
    EXPECT_EQ(back.chains[c].jitter_events, 2u);
    EXPECT_EQ(back.chains[c].config, chains[c].config);
  }
}

TEST(Chains, TamperedHashWarns) {
  TempDir tmp;
  write_chains({make_chain(0, 5)}, tmp.path());
  std::string side = read_text(tmp / "chain_0.json");
  const auto pos = side.find("\"draws_hash\": \"");
  ASSERT_NE(pos, std::string::npos);
  side[pos + 16] = side[pos + 16] == '0' ? '1' : '0';
  write_text(tmp / "chain_0.json", side);
  const LoadedChains back = read_chains(tmp.path());
  ASSERT_EQ(back.warnings.size(), 1u);
  EXPECT_EQ(back.chains[0].draws, make_chain(0, 5).draws);

  const LoadedChains other = read_chains(tmp.path(), std::string("ffffffffffffffff"));
  EXPECT_EQ(other.warnings.size(), 2u);
}

TEST(Chains, RaggedRowNamesLine) {
  TempDir tmp;
  write_chains({make_chain(0, 5)}, tmp.path());
  std::string csv = read_text(tmp / "chain_0.csv");
  std::size_t pos = 0;
  for (int l = 0; l < 3; ++l) pos = csv.find('\n', pos) + 1;
  csv.insert(csv.find('\n', pos), ",7");
  write_text(tmp / "chain_0.csv", csv);
  try {
    read_chains(tmp.path());
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
}

TEST(Chains, MissingDirectoryOrFiles) {
  TempDir tmp;
  EXPECT_THROW(read_chains(tmp / "nope"), ValidationError);
  EXPECT_THROW(read_chains(tmp.path()), ValidationError);
}

TEST(Reports, HeadersAreStable) {
  PosteriorSummary s;
  s.parameters.push_back({"alpha", -1.5, 0.5, -2.5, -0.5, 1.01, 400, 0.002});
  s.parameters.push_back({"x", 1.0, 0.0, 1.0, 1.0, std::nan(""), std::nan(""), 0.0});
  const std::string csv = format_summary_csv(s);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "parameter,mean,sd,q2.5,q97.5,rhat,ess,bayes_p");
  EXPECT_NE(csv.find("alpha,-1.5,0.5,-2.5,-0.5,1.01,400,0.002\n"), std::string::npos);
  EXPECT_NE(csv.find("x,1,0,1,1,NA,NA,0\n"), std::string::npos);

  BiasTable t;
  t.cells.push_back({"s", AssociationKind::auc, "auc&RE", "alpha", -10, 3, 1, -9.5, 0.5, 0.7, 1.0});
  const std::string bt = format_bias_table_csv(t);
  EXPECT_EQ(bt.substr(0, bt.find('\n')),
            "scenario,true_kind,structure,parameter,truth,replicates_ok,replicates_failed,mean_estimate,bias,"
            "mean_abs_error,coverage");
  EXPECT_NE(bt.find("s,auc,auc&RE,alpha,-10,3,1,-9.5,0.5,0.69999999999999996,1\n"), std::string::npos);

  ReplicateRecord ok{"s", 0, {}};
  ok.fit.ok = true;
  ok.fit.summary = s;
  ReplicateRecord bad{"s", 1, {}};
  bad.fit.structure = {Connection::re_only, AssociationKind::value};
  bad.fit.error = "RE: failed, badly";
  const std::string rep = format_replicate_csv({ok, bad});
  EXPECT_EQ(rep.substr(0, rep.find('\n')), std::string(kReplicateHeader));
  EXPECT_NE(rep.find("s,0,value,ok,alpha,"), std::string::npos);
  EXPECT_NE(rep.find("s,1,RE,failed,,,,,,,,,\"RE: failed, badly\"\n"), std::string::npos);
  for (std::size_t start = 0; start < rep.size();) {
    const std::size_t end = rep.find('\n', start);
    const std::string line = rep.substr(start, end - start);
    if (line.find('"') == std::string::npos) EXPECT_EQ(std::count(line.begin(), line.end(), ','), 12) << line;
    start = end + 1;
  }
}

TEST(Reports, NumbersAndFields) {
  EXPECT_EQ(format_number(0.1), "0.10000000000000001");
  EXPECT_EQ(format_number(std::nan("")), "NA");
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(sanitize_component("New York/NY"), "New_York_NY");
  EXPECT_EQ(sanitize_component(".."), "_..");
  EXPECT_EQ(sanitize_component(""), "_");
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}
