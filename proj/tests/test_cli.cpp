#include <gtest/gtest.h>
#include <json.hpp>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "calibra/calibra.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(CALIBRA_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  Run r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

json result_of(const Run& r) { return json::parse(r.out)["result"]; }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("calibra_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    write("four.csv", "c0,c1,label\n0.8,0.2,0\n0.8,0.2,0\n0.8,0.2,0\n0.8,0.2,1\n");
    write("perfect.csv", "c0,c1,label\n1,0,0\n0,1,1\n");
    write("three.csv", "c0,c1,c2,label\n0.5,0.3,0.2,0\n0.1,0.8,0.1,1\n");
    write("bad.csv", "c0,c1,label\n0.8,0.2,0\n0.7,zzz,1\n");
    calibra::Rng rng(5);
    const calibra::LogisticNormalModel m(3, 1.0, 6);
    std::ofstream v(path("val.csv")), t(path("test.csv"));
    calibra::write_csv(v, calibra::calibrated_labels(3, m.draw(4000, rng), 7));
    calibra::write_csv(t, calibra::calibrated_labels(3, m.draw(4000, rng), 8));
  }
  void TearDown() override { fs::remove_all(dir); }

  void write(const std::string& name, const std::string& text) { std::ofstream(path(name)) << text; }
  std::string path(const std::string& name) const { return (dir / name).string(); }

  fs::path dir;
};

}  // namespace

TEST_F(Cli, EstimateFourPointFixture) {
  const auto r = run("estimate --input " + path("four.csv") + " --estimator ece --bins 15");
  ASSERT_EQ(r.code, 0);
  const auto doc = json::parse(r.out);
  EXPECT_EQ(doc["schema_version"], 1);
  EXPECT_NEAR(doc["result"]["value"].get<double>(), 0.05, 1e-12);
  const auto& m = doc["manifest"];
  EXPECT_EQ(m["command"], "estimate");
  EXPECT_EQ(m["config"]["bins"], "15");
  ASSERT_EQ(m["inputs"].size(), 1u);
  EXPECT_EQ(m["inputs"][0]["sha256"].get<std::string>().size(), 64u);
  EXPECT_TRUE(m.contains("started") && m.contains("finished") && m.contains("version"));
}

TEST_F(Cli, PerfectFixtureAndUnparseableInput) {
  write("abc.csv", "abc");
  const auto r = run("estimate --input " + path("perfect.csv") + " --estimator rbs");
  ASSERT_EQ(r.code, 0);
  EXPECT_NEAR(result_of(r)["value"].get<double>(), 0.0, 1e-15);
  EXPECT_EQ(run("estimate --input " + path("abc.csv")).code, 3);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("estimate --input " + path("four.csv") + " --estimator bogus").code, 2);
  EXPECT_EQ(run("estimate --input " + path("bad.csv")).code, 3);
  EXPECT_EQ(run("estimate --input " + path("missing.csv")).code, 3);
  EXPECT_EQ(run("recalibrate --test " + path("four.csv")).code, 2);
  EXPECT_EQ(run("recalibrate --val " + path("four.csv") + " --test " + path("three.csv")).code, 3);
  EXPECT_EQ(run("counterexample --classes 10").code, 2);
  EXPECT_EQ(run("no-such-command").code, 2);
  EXPECT_EQ(run("estimate --input " + path("four.csv") + " --estimator tce_p --debias --p 3").code, 2);
}

TEST_F(Cli, RecalibrateTemperatureOnCalibratedData) {
  const auto r = run("recalibrate --val " + path("val.csv") + " --test " + path("test.csv") + " --method ts --estimators ece,rbs --map-out " +
                     path("map.json"));
  ASSERT_EQ(r.code, 0);
  const auto res = result_of(r);
  const double T = std::stod(res["map"]["parameters"]["temperature"].get<std::string>());
  EXPECT_NEAR(T, 1.0, 0.1);
  for (const auto& row : res["rows"]) EXPECT_NEAR(row["improvement"].get<double>(), 0.0, 0.01);
  EXPECT_TRUE(fs::exists(path("map.json")));
  EXPECT_EQ(json::parse(r.out)["manifest"]["inputs"].size(), 2u);
}

TEST_F(Cli, RecalibrateTfDrivesEceToZero) {
  const auto r = run("recalibrate --val " + path("test.csv") + " --test " + path("test.csv") + " --method tf --estimators ece");
  ASSERT_EQ(r.code, 0);
  const auto res = result_of(r);
  EXPECT_LT(res["rows"][0]["after"].get<double>(), 1e-12);
  EXPECT_EQ(res["accuracy_before"], res["accuracy_after"]);
}

TEST_F(Cli, CounterexampleTable) {
  const auto r = run("counterexample --classes 100 --eps 0.01 --support 5 --seed 1");
  ASSERT_EQ(r.code, 0);
  const auto e = result_of(r)["errors"];
  EXPECT_GE(e["ce_2"].get<double>(), 0.9899);
  EXPECT_NEAR(e["ece"].get<double>(), 0.0, 1e-12);
  EXPECT_TRUE(result_of(r).contains("joint"));
}

TEST_F(Cli, DecomposeResidualOnSerializedJoint) {
  ASSERT_EQ(run("counterexample --classes 5 --eps 0.05 --support 3 --seed 2 --joint-out " + path("j.json")).code, 0);
  const auto r = run("decompose --joint " + path("j.json"));
  ASSERT_EQ(r.code, 0);
  for (const auto& row : result_of(r)["rows"]) EXPECT_LT(std::abs(row["residual"].get<double>()), 1e-10);
  const auto e = run("decompose --input " + path("val.csv") + " --score brier");
  ASSERT_EQ(e.code, 0);
  EXPECT_LT(std::abs(result_of(e)["rows"][0]["residual"].get<double>()), 1e-10);
}

TEST_F(Cli, SimulateBiasMuColumnDecreases) {
  const auto r = run("simulate-bias --classes 100 --atoms 500 --n-grid 100..10000 --ticks 4 --replicates 5 --seed 3");
  ASSERT_EQ(r.code, 0);
  double prev = 1e9;
  for (const auto& row : result_of(r)["rows"]) {
    EXPECT_LT(row["mu"].get<double>(), prev);
    prev = row["mu"].get<double>();
  }
}

TEST_F(Cli, SweepIsReproducibleAcrossThreadCounts) {
  const std::string base = "sweep --input " + path("test.csv") + " --estimators ece,rbs --min-size 50 --ticks 3 --replicates 20 --seed 9";
  const auto a = run(base + " --threads 1 --csv " + path("a.csv"));
  const auto b = run(base + " --threads 3 --csv " + path("b.csv"));
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(result_of(a), result_of(b));
  std::ifstream fa(path("a.csv")), fb(path("b.csv"));
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(fa), {}), std::string(std::istreambuf_iterator<char>(fb), {}));
  EXPECT_EQ(run("sweep --input " + path("test.csv")).code, 2);
}

TEST_F(Cli, ImprovementSweep) {
  const auto r = run("sweep --input " + path("val.csv") + " --temper 0.7 --methods ts --val-size 2000 --estimators ece --min-size 100 "
                     "--ticks 2 --replicates 10 --seed 4");
  ASSERT_EQ(r.code, 0);
  const auto res = result_of(r);
  EXPECT_TRUE(res.contains("validation_fingerprint"));
  EXPECT_EQ(res["rows"].size(), 4u);
}

TEST_F(Cli, RegressDemoWritesCurve) {
  const auto r = run("regress-demo --iterations 100 --eval-every 50 --hidden 5 --seed 1 --curve " + path("curve.jsonl"));
  ASSERT_EQ(r.code, 0);
  std::ifstream in(path("curve.jsonl"));
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    EXPECT_TRUE(json::parse(line).contains("iter"));
    ++n;
  }
  EXPECT_EQ(n, 3);
  EXPECT_TRUE(result_of(r).contains("table_calibrated"));
}

TEST_F(Cli, BadLogLevelIsConfigError) {
  const std::string cmd = "CALIBRA_LOG=loud " + std::string(CALIBRA_CLI_PATH) + " estimate --input " + path("four.csv") + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  EXPECT_EQ(WEXITSTATUS(status), 2);
}
