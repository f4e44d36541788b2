#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "feedback_probe/io/config.hpp"

namespace fs = std::filesystem;
using feedback_probe::io::Json;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("feedback_probe_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) const {
    const std::string cmd = "cd '" + dir_.string() + "' && '" FEEDBACK_PROBE_CLI "' " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string write(const std::string& name, const std::string& text) const {
    const auto p = dir_ / name;
    std::ofstream(p) << text;
    return p.string();
  }

  std::string read(const std::string& rel) const {
    std::ifstream f(dir_ / rel, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  }

  fs::path dir_;
};

const std::string kScenario = R"({"seed": 3, "scenario": {"kind": "additive", "n": 2000,
  "feedback": {"shape": "monotone_with_jump"}}})";

}  // namespace

TEST_F(Cli, SimulateThenFitFromLog) {
  const auto cfg = write("sim.json", kScenario);
  ASSERT_EQ(run("simulate --config " + cfg + " --output a"), 0);
  EXPECT_TRUE(fs::exists(dir_ / "a/observations.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "a/truth.json"));
  const auto fit_cfg = write("fit.json", R"({"input_path": ")" + (dir_ / "a/observations.csv").string() + R"("})");
  ASSERT_EQ(run("fit --config " + fit_cfg + " --output b"), 0);
  const auto report = Json::parse(read("b/report.json"));
  EXPECT_EQ(report["format_version"], 1);
  EXPECT_EQ(report["config_hash"].get<std::string>().size(), 16u);
  EXPECT_EQ(report["feedback"]["jump_tests"].size(), 1u);
  EXPECT_TRUE(fs::exists(dir_ / "b/feedback.csv"));
}

TEST_F(Cli, RepeatedRunsAreByteIdentical) {
  const auto cfg = write("sim.json", kScenario);
  ASSERT_EQ(run("simulate --config " + cfg + " --output a"), 0);
  ASSERT_EQ(run("simulate --config " + cfg + " --output b"), 0);
  EXPECT_EQ(read("a/observations.csv"), read("b/observations.csv"));
  EXPECT_EQ(read("a/truth.json"), read("b/truth.json"));
  ASSERT_EQ(run("fit --config " + cfg + " --output c"), 0);
  ASSERT_EQ(run("fit --config " + cfg + " --output d"), 0);
  EXPECT_EQ(read("c/report.json"), read("d/report.json"));
  EXPECT_EQ(read("c/feedback.csv"), read("d/feedback.csv"));
  ASSERT_EQ(run("simulate --config " + cfg + " --seed 4 --output e"), 0);
  EXPECT_NE(read("a/observations.csv"), read("e/observations.csv"));
}

TEST_F(Cli, BootstrapWritesBands) {
  const auto cfg = write("sim.json", kScenario);
  ASSERT_EQ(run("bootstrap --config " + cfg + " --bootstrap-reps 5 --output a"), 0);
  const auto bands = read("a/bootstrap_bands.csv");
  EXPECT_EQ(bands.substr(0, bands.find('\n')),
            "x_logodds,x_prob,f_hat,se_bootstrap,se_parametric,replicate_0,replicate_1,replicate_2,replicate_3,"
            "replicate_4");
  EXPECT_NE(read("a/feedback.csv").find("se_bootstrap"), std::string::npos);
}

TEST_F(Cli, TradeoffWritesRecommendation) {
  ASSERT_EQ(run("tradeoff --config " FEEDBACK_PROBE_CONFIGS "/linear_tradeoff.json --output a"), 0);
  const auto t = Json::parse(read("a/tradeoff.json"));
  ASSERT_TRUE(t["tradeoff"].contains("recommendation"));
  EXPECT_GE(t["tradeoff"]["correct_loss"].get<double>(), 0.0);
  EXPECT_EQ(t["linear"]["variant"], "conditioned");
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("fit --config missing.json"), 2);
  EXPECT_EQ(run("fit"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("fit --config " + write("bad.json", R"({"scenario": {"kind": "additive", "bogus": 1}})")), 2);

  // Data integrity: a deployed value that is not prior + noise.
  const auto cfg = write("sim.json", kScenario);
  ASSERT_EQ(run("simulate --config " + cfg + " --output a"), 0);
  std::string log = read("a/observations.csv");
  const auto row = log.find("\n2,");
  ASSERT_NE(row, std::string::npos);
  const auto comma = [&](std::size_t from, int k) {
    for (int i = 0; i < k; ++i) from = log.find(',', from + 1);
    return from;
  };
  const auto start = comma(row, 4) + 1;
  log.replace(start, log.find(',', start) - start, "123.5");
  write("corrupt.csv", log);
  const auto fit_cfg = write("fit.json", R"({"input_path": ")" + (dir_ / "corrupt.csv").string() + R"("})");
  EXPECT_EQ(run("fit --config " + fit_cfg), 3);

  // Numerical: duplicated jump columns make the contrast rank deficient.
  const auto degenerate = write("deg.json", R"({"scenario": {"kind": "additive", "n": 2000},
    "f_basis": {"spline_df": 0, "jump_locations": [0, 0]}})");
  EXPECT_EQ(run("fit --config " + degenerate), 4);

  // Noise spec that does not match the logged noise.
  const auto wrong = write("wrong.json", R"({"input_path": ")" + (dir_ / "a/observations.csv").string() +
                                             R"(", "noise": {"kind": "gaussian", "sigma_nu": 0.5}})");
  EXPECT_EQ(run("fit --config " + wrong), 2);
}

TEST_F(Cli, SmallerSamplesGiveWiderBands) {
  auto median_se = [&](const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    std::vector<double> se;
    while (std::getline(in, line)) {
      std::istringstream row(line);
      std::string cell;
      for (int k = 0; k < 4; ++k) std::getline(row, cell, ',');
      se.push_back(std::stod(cell));
    }
    std::nth_element(se.begin(), se.begin() + se.size() / 2, se.end());
    return se[se.size() / 2];
  };
  const auto small = write("small.json", R"({"scenario": {"kind": "additive", "n": 1000}})");
  const auto large = write("large.json", R"({"scenario": {"kind": "additive", "n": 100000}})");
  ASSERT_EQ(run("fit --config " + small + " --output s"), 0);
  ASSERT_EQ(run("fit --config " + large + " --output l"), 0);
  EXPECT_GT(median_se(read("s/feedback.csv")), 5.0 * median_se(read("l/feedback.csv")));
}

TEST_F(Cli, QuickFigures) {
  ASSERT_EQ(run("reproduce-figures --quick --output figs"), 0);
  for (char p = 'a'; p <= 'f'; ++p) EXPECT_TRUE(fs::exists(dir_ / ("figs/figure1" + std::string(1, p) + ".csv")));
  const auto summary = read("figs/summary.csv");
  EXPECT_EQ(std::count(summary.begin(), summary.end(), '\n'), 7);
}
