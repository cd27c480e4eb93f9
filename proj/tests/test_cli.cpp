#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kSource = QKDLINK_SOURCE_DIR;
const std::string kPaper = kSource + "/configs/paper.ini";

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("qkdlink_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name), std::ios::binary) << text;
    return path(name);
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  CliResult run(const std::string& args) const {
    const std::string cmd = std::string(QKDLINK_CLI_PATH) + " " + args + " >" + path("stdout") + " 2>" + path("stderr");
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(path("stdout"));
    r.err = slurp(path("stderr"));
    return r;
  }

  fs::path dir_;
};

// model -> rows of the sweep CSV (split on commas)
std::map<std::string, std::vector<std::vector<std::string>>> parse_sweep(const std::string& csv) {
  std::map<std::string, std::vector<std::vector<std::string>>> out;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "# qkd-linkbench v1");
  std::getline(in, line);
  EXPECT_EQ(line, "model,loss_db,eta_total,qber,p_click,skr_per_pulse,skr_bps");
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    EXPECT_EQ(cells.size(), 7u) << line;
    out[cells[0]].push_back(cells);
  }
  return out;
}

double value(const nlohmann::json& j, const char* key) { return j.at(key).at("value").get<double>(); }

}  // namespace

TEST_F(Cli, SweepBackToBack) {
  const auto r = run("sweep -c " + kPaper + " --loss-grid 0 --qber-sps 0.034");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_sweep(r.out);
  ASSERT_EQ(rows.at("sps").size(), 1u);
  // Closed-form value from the arbitrary-precision oracle, f_ec = 1.1.
  EXPECT_NEAR(std::stod(rows.at("sps")[0][6]), 448331.291239177, 1e-3);
  EXPECT_EQ(rows.size(), 5u);
}

TEST_F(Cli, SweepIsByteIdentical) {
  const auto a = run("sweep -c " + kPaper);
  const auto b = run("sweep -c " + kPaper + " -o " + path("sweep.csv"));
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(a.out, slurp(path("sweep.csv")));
  EXPECT_EQ(parse_sweep(a.out).at("wcp_decoy").size(), 41u);
}

TEST_F(Cli, SweepEmptyGridIsUsageError) {
  const auto r = run("sweep -c " + kPaper + " --loss-grid ''");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("loss grid"), std::string::npos);
  EXPECT_TRUE(r.out.empty());
}

TEST_F(Cli, SweepEveryModelReachesZero) {
  const auto r = run("sweep -c " + kPaper + " --loss-grid 0:2:60");
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto& [model, rows] : parse_sweep(r.out)) {
    ASSERT_EQ(rows.size(), 31u);
    EXPECT_GT(std::stod(rows.front()[6]), 0.0) << model;
    EXPECT_EQ(std::stod(rows.back()[6]), 0.0) << model;
    // Once zero, stays zero.
    bool zero = false;
    for (const auto& row : rows) {
      if (zero) {
        EXPECT_EQ(std::stod(row[6]), 0.0) << model << " at " << row[1];
      }
      zero = zero || std::stod(row[6]) == 0.0;
    }
  }
}

TEST_F(Cli, SweepConventionFlag) {
  const auto r = run("sweep -c " + kPaper + " --loss-grid 10 --loss-includes-bob true");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(std::stod(parse_sweep(r.out).at("sps")[0][2]), 0.1);
  EXPECT_EQ(run("sweep -c " + kPaper + " --loss-includes-bob perhaps").code, 2);
}

TEST_F(Cli, ConfigErrors) {
  const auto missing = run("sweep -c " + path("nope.ini"));
  EXPECT_EQ(missing.code, 2);
  const auto bad = write("bad.ini", "[link]\nrep_rate = 80 mhz\nrep_rat = 80 mhz\n");
  const auto r = run("sweep -c " + bad);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
}

TEST_F(Cli, SimulateDeterministic) {
  const std::string args = "simulate -c " + kPaper + " --pulses 200000 --seed 9";
  const auto a = run(args + " --workers 1");
  const auto b = run(args + " --workers 3");
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out, run("simulate -c " + kPaper + " --pulses 200000 --seed 10").out);
}

TEST_F(Cli, SimulateZeroPulsesIsUsageError) {
  const auto r = run("simulate -c " + kPaper + " --pulses 0");
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(Cli, SimulateAgreesWithAnalytic) {
  for (const char* model : {"sps", "wcp"}) {
    const auto r = run("simulate -c " + kPaper + " --pulses 10000000 --workers 4 --model " + model);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j.at("pulses").get<std::uint64_t>(), 10'000'000u);
    EXPECT_LT(std::abs(j.at("z").at("qber").get<double>()), 3.0) << model;
    EXPECT_LT(std::abs(j.at("z").at("gain").get<double>()), 3.0) << model;
  }
}

TEST_F(Cli, FitG2BundledData) {
  const auto r = run("fit g2 -i " + kSource + "/data/g2_pulsed.timetag");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(value(j, "g2_zero"), 0.02, 0.01);
  EXPECT_NEAR(value(j, "tau_c_ns"), 3.6, 0.2);
  EXPECT_TRUE(j.at("fit").at("converged").get<bool>());
}

TEST_F(Cli, FitG2LongBundledData) {
  const auto r = run("fit g2long -i " + kSource + "/data/g2_longtime.timetag");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(value(j, "on_fraction"), 0.77, 0.05);
  EXPECT_NEAR(j.at("tau_trap_ns").get<double>(), 1000.0, 100.0);
}

TEST_F(Cli, FitSaturationBundledData) {
  const auto r = run("fit saturation -i " + kSource + "/data/saturation.csv --query-power 2");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(value(j.at("fit").at("parameters"), "r_inf"), 1e7, 0.01 * 1e7);
  EXPECT_FALSE(j.at("ill_conditioned").get<bool>());
  EXPECT_NEAR(j.at("query").at("mu_mol").get<double>(), 0.08, 0.01);
}

TEST_F(Cli, FitQberBundledData) {
  const auto sps = run("fit qber -i " + kSource + "/data/qber_sps.csv --source sps --mu 0.08");
  ASSERT_EQ(sps.code, 0) << sps.err;
  const auto p = nlohmann::json::parse(sps.out).at("fit").at("parameters");
  EXPECT_GE(value(p, "p_dark"), 0.4e-6);
  EXPECT_LE(value(p, "p_dark"), 4e-6);
  EXPECT_NEAR(value(p, "e_det"), 0.039, 0.005);
  const auto wcp = run("fit qber -i " + kSource + "/data/qber_wcp.csv --source wcp --mu 0.5");
  ASSERT_EQ(wcp.code, 0) << wcp.err;
  EXPECT_NEAR(value(nlohmann::json::parse(wcp.out).at("fit").at("parameters"), "e_det"), 0.008, 0.001);
}

TEST_F(Cli, FitMalformedLineIsNamed) {
  const auto tags = write("bad.timetag", "# timetag v1 rep_period_ps=25000\n1,100\n2,abc\n");
  const auto r = run("fit g2 -i " + tags);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
  const auto csv = write("bad.csv", "power,rate\n1,2\n2,3\n3\n");
  const auto s = run("fit saturation -i " + csv);
  EXPECT_EQ(s.code, 2);
  EXPECT_NE(s.err.find("line 4"), std::string::npos) << s.err;
}

TEST_F(Cli, FitEmptyLateralPeaksIsNumericError) {
  // Two channels whose only tags lie far further apart than the window.
  const auto tags = write("far.timetag", "# timetag v1 rep_period_ps=25000\n1,0\n2,900000000\n");
  const auto r = run("fit g2 -i " + tags);
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST_F(Cli, TimetagsRoundTrip) {
  const std::string args = "timetags --cycles 20000 --seed 4 --mu 0.5";
  const auto a = run(args + " -o " + path("a.tt"));
  ASSERT_EQ(a.code, 0) << a.err;
  const auto b = run(args);
  EXPECT_EQ(slurp(path("a.tt")), b.out);
  EXPECT_EQ(b.out.rfind("# timetag v1 rep_period_ps=25000\n", 0), 0u);
  EXPECT_EQ(run("timetags --on-fraction 0").code, 2);
}

TEST_F(Cli, BudgetReport) {
  const auto r = run("budget -c " + kPaper);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("mu_ref = 0.3087315 (derived)"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("mu_ref = 0.46309725 (derived)"), std::string::npos);
  EXPECT_NE(r.out.find("qy_extracted = 0.553192043"), std::string::npos);
  EXPECT_NE(r.out.find("eta_pump = 0.47 (measured)"), std::string::npos);
  EXPECT_NE(r.out.find("[comparison]"), std::string::npos);
}

TEST_F(Cli, BudgetIdentityFactors) {
  const auto cfg = write("id.ini",
                         "[budget]\nmu_mol = 0.08\neta_opt_alice = 1\neta_col = 1\non_frac = 0.77\neta_pump = 1\n"
                         "qy = 0.6\neta_opt_star = 1\neta_col_star = 1\neta_pump_star = 1\n");
  const auto r = run("budget -c " + cfg);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("mu_ref = 0.462 (derived)"), std::string::npos) << r.out;
}

TEST_F(Cli, BudgetMissingKey) {
  const auto cfg = write("m.ini", "[budget]\nmu_mol = 0.08\neta_opt_alice = 1\neta_col = 1\n");
  const auto r = run("budget -c " + cfg);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("on_frac"), std::string::npos) << r.err;
}
