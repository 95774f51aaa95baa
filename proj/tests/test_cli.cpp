#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "ebsde/cli.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kConfig = std::string(EBSDE_TEST_DATA) + "/vasicek_small.json";

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = ebsde::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("ebsde_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
};

const std::vector<std::string> kCsvOutputs = {"error_table.csv", "mae_curve.csv", "normality.csv",
                                              "replications.csv"};

}  // namespace

TEST_F(CliTest, RatesPrintsGrid) {
  const CliRun r = run({"rates"});
  EXPECT_EQ(r.code, 0);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "k,13,14,15,16,17,18,19");
  int ones = 0;
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    while (std::getline(row, cell, ',')) ones += cell == "1";
  }
  EXPECT_EQ(rows, 18);
  EXPECT_EQ(ones, 75);
}

TEST_F(CliTest, MissingConfigIsConfigError) {
  const CliRun r = run({"estimate", "--config", (dir_ / "missing.json").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--config"), std::string::npos);
  EXPECT_EQ(run({"experiment"}).code, 1);
}

TEST_F(CliTest, UnknownSubcommandOrFlag) {
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"rates", "--bogus"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"--version"}).code, 0);
}

TEST_F(CliTest, BadEntryNamesKey) {
  const CliRun r = run({"experiment", "--config", kConfig, "--out", dir_.string(), "--set", "scenario.name=garch"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("scenario.name"), std::string::npos);
  const CliRun bad_pair = run({"experiment", "--config", kConfig, "--out", dir_.string(), "--set", "rates.pairs=[[12,5]]"});
  EXPECT_EQ(bad_pair.code, 1);
  EXPECT_NE(bad_pair.err.find("rates.pairs"), std::string::npos);
}

TEST_F(CliTest, ExperimentIsByteIdenticalAcrossRuns) {
  const fs::path a = dir_ / "a", b = dir_ / "b";
  ASSERT_EQ(run({"experiment", "--config", kConfig, "--out", a.string(), "--threads", "3"}).code, 0);
  ASSERT_EQ(run({"experiment", "--config", kConfig, "--out", b.string(), "--threads", "1"}).code, 0);
  for (const auto& name : kCsvOutputs) {
    ASSERT_TRUE(fs::exists(a / name)) << name;
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
  }
  EXPECT_TRUE(fs::exists(a / "run_meta.json"));
  for (const auto& entry : fs::directory_iterator(a)) EXPECT_NE(entry.path().extension(), ".tmp");

  const std::string table = slurp(a / "error_table.csv");
  EXPECT_EQ(table.substr(0, table.find('\n')), "k,13,14,15,16,17,18,19");
  const std::string reps = slurp(a / "replications.csv");
  EXPECT_EQ(std::count(reps.begin(), reps.end(), '\n'), 1 + 2 * 2 * 4);
  const std::string normality = slurp(a / "normality.csv");
  EXPECT_EQ(normality.substr(0, normality.find('\n')), "n,l,k,component,mean,sd,ks_stat,reps");
  EXPECT_EQ(slurp(a / "mae_curve.csv").substr(0, 6), "n,mae\n");
}

TEST_F(CliTest, EchoedConfigReproducesOutputs) {
  const fs::path a = dir_ / "a", b = dir_ / "b";
  ASSERT_EQ(run({"experiment", "--config", kConfig, "--out", a.string(), "--set", "experiment.reps=2"}).code, 0);
  const auto meta = nlohmann::json::parse(slurp(a / "run_meta.json"));
  EXPECT_EQ(meta["subcommand"], "experiment");
  EXPECT_EQ(meta["sd_convention"], "sample (n-1 denominator)");
  EXPECT_EQ(meta["config"]["experiment"]["reps"], 2);
  const fs::path echoed = dir_ / "echoed.json";
  std::ofstream(echoed) << meta["config"].dump(2);
  ASSERT_EQ(run({"experiment", "--config", echoed.string(), "--out", b.string()}).code, 0);
  for (const auto& name : kCsvOutputs) EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
  EXPECT_EQ(nlohmann::json::parse(slurp(b / "run_meta.json"))["config"], meta["config"]);
}

TEST_F(CliTest, OverrideChangesRun) {
  ASSERT_EQ(run({"experiment", "--config", kConfig, "--out", dir_.string(), "--set", "experiment.reps=1",
                 "--set", "experiment.n_set=[2000]"})
                .code,
            0);
  const std::string reps = slurp(dir_ / "replications.csv");
  EXPECT_EQ(std::count(reps.begin(), reps.end(), '\n'), 1 + 2);
}

TEST_F(CliTest, SimulateThenEstimate) {
  const CliRun sim = run({"simulate", "--config", kConfig, "--out", dir_.string()});
  ASSERT_EQ(sim.code, 0) << sim.err;
  const std::string csv = slurp(dir_ / "observations.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "k,t,x_1,y_1");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3002);
  // Second row is k = 1: the time h has 17 significant digits.
  const std::string row1 = csv.substr(csv.find("\n1,") + 1);
  const std::string t1 = row1.substr(2, row1.find(',', 2) - 2);
  EXPECT_DOUBLE_EQ(std::stod(t1), std::pow(3000.0, -0.65));
  EXPECT_GE(t1.size(), 17u);

  const CliRun est = run({"estimate", "--config", kConfig, "--out", dir_.string(), "--data",
                       (dir_ / "observations.csv").string()});
  ASSERT_EQ(est.code, 0) << est.err;
  const auto doc = nlohmann::json::parse(slurp(dir_ / "estimate.json"));
  EXPECT_EQ(doc["n"], 3000);
  EXPECT_EQ(doc["c"], 5);
  ASSERT_EQ(doc["theta_hat"].size(), 1u);
  EXPECT_TRUE(doc["theta_hat"][0].is_number());
  EXPECT_TRUE(doc.contains("gamma_hat"));
  EXPECT_TRUE(doc.contains("std_errors"));
  EXPECT_EQ(nlohmann::json::parse(est.out), doc);
}

TEST_F(CliTest, RuntimeFailureExitsTwo) {
  const fs::path data = dir_ / "flat.csv";
  {
    std::ofstream out(data);
    out << "k,t,x_1,y_1\n";
    for (int k = 0; k <= 100; ++k) out << k << "," << k * 0.01 << ",0.3,1\n";
  }
  const CliRun r = run({"estimate", "--config", kConfig, "--out", dir_.string(), "--data", data.string(),
                     "--set", "rates.c=10"});
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(fs::exists(dir_ / "estimate.json"));
}

TEST_F(CliTest, MalformedDataIsConfigError) {
  const fs::path data = dir_ / "bad.csv";
  std::ofstream(data) << "k,t,q\n0,0,1\n";
  EXPECT_EQ(run({"estimate", "--config", kConfig, "--data", data.string(), "--out", dir_.string()}).code, 1);
}
