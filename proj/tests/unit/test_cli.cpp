#include "mvlme/io.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <string>
#include <sys/wait.h>

using testing_util::TempDir;
namespace fs = std::filesystem;

namespace {

const std::string kCli = MVLME_CLI_PATH;
const fs::path kData = MVLME_TEST_DATA_DIR;

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = "MVLME_THREADS=1 SOURCE_DATE_EPOCH=1700000000 \"" + kCli + "\" " + args + " > \"" +
                          log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config() { return "--config \"" + (kData / "example_config.json").string() + "\""; }
std::string data() { return "--data \"" + (kData / "example_data.csv").string() + "\""; }

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = mvlme::read_text(e.path());
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    if (kCli.empty()) GTEST_SKIP() << "command-line tool not built";
  }
  TempDir tmp;
};

}  // namespace

TEST_F(Cli, ValidateExampleSucceeds) {
  EXPECT_EQ(run("validate " + config() + " " + data(), tmp / "log"), 0) << mvlme::read_text(tmp / "log");
  EXPECT_NE(mvlme::read_text(tmp / "log").find("data ok: 469 subjects"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("", tmp / "log"), 1);
  EXPECT_EQ(run("frobnicate", tmp / "log"), 1);
  EXPECT_EQ(run("fit " + config(), tmp / "log"), 1);
  EXPECT_EQ(run("fit " + config() + " " + data() + " --out x --chains zero", tmp / "log"), 1);
  EXPECT_EQ(run("--help", tmp / "log"), 0);
}

TEST_F(Cli, ValidationErrorsExitTwo) {
  mvlme::write_text(tmp / "bad.json", R"({"outcomes": [{"name": "y", "fixed": ["intercept"]}], "colour": 1})");
  EXPECT_EQ(run("validate --config \"" + (tmp / "bad.json").string() + "\"", tmp / "log"), 2);
  EXPECT_EQ(run("validate " + config() + " --data \"" + (tmp / "missing.csv").string() + "\"", tmp / "log"), 2);
  EXPECT_EQ(run("validate " + config() + " --window-d 0", tmp / "log"), 2);
  mvlme::write_text(tmp / "value.json",
                    R"({"outcomes": [{"name": "y", "fixed": ["intercept", "time"]},
                                     {"name": "z", "fixed": ["intercept", "time"]}],
                        "association": {"kind": "value", "source": "z", "target": "y"}})");
  EXPECT_EQ(run("validate --config \"" + (tmp / "value.json").string() + "\" --window-d 5", tmp / "log"), 2);
}

TEST_F(Cli, FitIsByteDeterministic) {
  const std::string args = "fit " + config() + " " + data() + " --chains 2 --seed 7 --out ";
  ASSERT_EQ(run(args + "\"" + (tmp / "a").string() + "\"", tmp / "log"), 0) << mvlme::read_text(tmp / "log");
  ASSERT_EQ(run(args + "\"" + (tmp / "b").string() + "\"", tmp / "log"), 0) << mvlme::read_text(tmp / "log");
  const auto a = tree(tmp / "a");
  const auto b = tree(tmp / "b");
  EXPECT_EQ(a, b);
  for (const char* f : {"chains/all/chain_0.csv", "chains/all/chain_1.csv", "chains/all/chain_0.json",
                        "summary.csv", "group_report.csv", "manifest.json", "config.json"})
    EXPECT_EQ(a.count(f), 1u) << f;

  // summarize reproduces the fit summary from the stored chains.
  ASSERT_EQ(run("summarize --data \"" + (tmp / "a" / "chains" / "all").string() + "\" --out \"" +
                    (tmp / "s").string() + "\"",
                tmp / "log"),
            0);
  EXPECT_EQ(mvlme::read_text(tmp / "s" / "summary.csv"), a.at("summary.csv"));
}

TEST_F(Cli, SeedChangesChains) {
  const std::string args = "fit " + config() + " " + data() + " --chains 1 --out ";
  ASSERT_EQ(run(args + "\"" + (tmp / "a").string() + "\" --seed 1", tmp / "log"), 0);
  ASSERT_EQ(run(args + "\"" + (tmp / "b").string() + "\" --seed 2", tmp / "log"), 0);
  EXPECT_NE(mvlme::read_text(tmp / "a" / "chains" / "all" / "chain_0.csv"),
            mvlme::read_text(tmp / "b" / "chains" / "all" / "chain_0.csv"));
}

TEST_F(Cli, FitStrataGatesSmallState) {
  ASSERT_EQ(run("fit-strata " + config() + " " + data() + " --min-n 120 --out \"" + tmp.path().string() + "\"",
                tmp / "log"),
            0)
      << mvlme::read_text(tmp / "log");
  EXPECT_NE(mvlme::read_text(tmp / "log").find("2 fitted, 1 skipped_small_n, 0 failed"), std::string::npos);
  const std::string report = mvlme::read_text(tmp / "group_report.csv");
  EXPECT_EQ(std::count(report.begin(), report.end(), '\n'), 3);
  EXPECT_NE(report.find("\nTexas,150,"), std::string::npos);
  EXPECT_NE(report.find(",5,0.10000000000000001,"), std::string::npos);
  EXPECT_TRUE(fs::exists(tmp / "chains" / "Utah" / "chain_1.csv"));
  EXPECT_FALSE(fs::exists(tmp / "chains" / "Ohio"));
  const std::string manifest = mvlme::read_text(tmp / "manifest.json");
  EXPECT_NE(manifest.find("\"skipped_small_n\": 1"), std::string::npos);
}

TEST_F(Cli, WindowOverrideAndScale) {
  ASSERT_EQ(run("fit-strata " + config() + " " + data() +
                    " --min-n 190 --window-d full --scale-report 1 --out \"" + tmp.path().string() + "\"",
                tmp / "log"),
            0);
  const std::string report = mvlme::read_text(tmp / "group_report.csv");
  EXPECT_NE(report.find("\nUtah,200,"), std::string::npos);
  EXPECT_NE(report.find(",full,1,"), std::string::npos);
}

TEST_F(Cli, SimulateWritesTables) {
  mvlme::write_text(tmp / "sim.json", R"({
    "replicates": 2,
    "structures": ["value", "RE"],
    "mcmc": {"n_chains": 2, "n_iter": 120, "burn_in": 20, "thin": 2, "adapt": 0},
    "scenarios": [{"name": "small", "true_kind": "value", "n_subjects": 20}]
  })");
  ASSERT_EQ(run("simulate --config \"" + (tmp / "sim.json").string() + "\" --out \"" + (tmp / "o").string() + "\"",
                tmp / "log"),
            0)
      << mvlme::read_text(tmp / "log");
  const std::string bias = mvlme::read_text(tmp / "o" / "bias_table.csv");
  EXPECT_EQ(bias.substr(0, bias.find('\n')), std::string(mvlme::kBiasTableHeader));
  EXPECT_NE(bias.find("\nsmall,value,RE,beta.y1.intercept,80,2,0,"), std::string::npos);
  const std::string reps = mvlme::read_text(tmp / "o" / "replicate_summaries.csv");
  EXPECT_EQ(reps.substr(0, reps.find('\n')), std::string(mvlme::kReplicateHeader));
  EXPECT_TRUE(fs::exists(tmp / "o" / "manifest.json"));
}

TEST_F(Cli, SummarizeMissingDirectoryExitsTwo) {
  EXPECT_EQ(run("summarize --data \"" + (tmp / "none").string() + "\"", tmp / "log"), 2);
}
