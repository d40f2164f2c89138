#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "splinehmm/io.hpp"
#include "splinehmm/simulation.hpp"
#include "splinehmm_cli/cli.hpp"

using namespace splinehmm;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("splinehmm_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    Matrix g(2, 2);
    g << 0.9, 0.1, 0.1, 0.9;
    const HmmModel m = make_stationary_model(g, {NormalDensity{-2, 1}, NormalDensity{2, 1}});
    Rng rng(1);
    const auto sim = simulate_series(m, 300, rng);
    std::ofstream out(path("data.csv"));
    out << "t,x\n";
    for (std::size_t t = 0; t < sim.observations.size(); ++t) out << t + 1 << "," << format_double(sim.observations[t]) << "\n";
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "splinehmm");
    out_.str("");
    err_.str("");
    return cli::run(args, out_, err_);
  }

  std::string parametric_fit(const std::string& out_dir) {
    EXPECT_EQ(run({"fit", "--data", path("data.csv"), "--column", "x", "--states", "2", "--restarts", "2", "-o",
                   path(out_dir), "--config", write_config("par.json", R"({"model": {"families": ["normal"]}})")}),
              cli::kExitOk)
        << err_.str();
    return path(out_dir + "/model.json");
  }

  std::string write_config(const std::string& name, const std::string& text) {
    std::ofstream(path(name)) << text;
    return path(name);
  }

  fs::path dir_;
  std::ostringstream out_;
  std::ostringstream err_;
};

std::vector<std::string> lines(const std::string& file) {
  std::ifstream in(file);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_F(CliTest, UsageErrorsExitWithOne) {
  EXPECT_EQ(run({}), cli::kExitConfig);
  EXPECT_EQ(run({"fit", "--no-such-flag"}), cli::kExitConfig);
  EXPECT_EQ(run({"--help"}), cli::kExitOk);
  EXPECT_EQ(run({"fit", "--config", write_config("bad.json", R"({"modell": {}})")}), cli::kExitConfig);
  EXPECT_NE(err_.str().find("config.modell"), std::string::npos);
}

TEST_F(CliTest, FitWritesModelAndInformationCriteria) {
  const std::string model = parametric_fit("fit");
  ASSERT_TRUE(fs::exists(model));
  const auto report = nlohmann::json::parse(read_file(path("fit/fit_report.json")));
  const double ll = report["loglik"];
  const double p = report["parameters"];
  EXPECT_EQ(p, 6.0);
  EXPECT_EQ(report["aic"].get<double>(), -2.0 * ll + 2.0 * p);
  EXPECT_EQ(report["bic"].get<double>(), -2.0 * ll + p * std::log(300.0));
  EXPECT_NE(out_.str().find("Gamma:"), std::string::npos);
  EXPECT_NE(out_.str().find("log-likelihood"), std::string::npos);
}

TEST_F(CliTest, FitIsByteReproducible) {
  parametric_fit("a");
  parametric_fit("b");
  EXPECT_EQ(read_file(path("a/model.json")), read_file(path("b/model.json")));
  EXPECT_EQ(read_file(path("a/fit_report.json")), read_file(path("b/fit_report.json")));
}

TEST_F(CliTest, SplineFitNeedsLambda) {
  EXPECT_EQ(run({"fit", "--data", path("data.csv"), "--column", "2", "-o", path("s")}), cli::kExitConfig);
  EXPECT_EQ(run({"fit", "--data", path("data.csv"), "--column", "2", "--K", "6", "--lambda", "100,100", "--restarts",
                 "2", "-o", path("s")}),
            cli::kExitOk)
      << err_.str();
  const auto report = nlohmann::json::parse(read_file(path("s/fit_report.json")));
  EXPECT_FALSE(report.contains("aic"));
}

TEST_F(CliTest, DiagnoseWritesPlotFiles) {
  const std::string model = parametric_fit("fit");
  ASSERT_EQ(run({"diagnose", "--model", model, "--data", path("data.csv"), "--column", "x", "--max-lag", "12", "-o",
                 path("diag")}),
            cli::kExitOk)
      << err_.str();
  EXPECT_EQ(lines(path("diag/viterbi.csv")).size(), 301u);
  const auto acf = lines(path("diag/acf.csv"));
  ASSERT_EQ(acf.size(), 14u);
  EXPECT_EQ(acf[1].substr(0, 4), "0,1,");
  EXPECT_EQ(lines(path("diag/residuals.csv")).size(), 301u);
  EXPECT_EQ(lines(path("diag/state_densities.csv"))[0], "x,state_1,state_2");
  const auto diag = nlohmann::json::parse(read_file(path("diag/diagnostics.json")));
  EXPECT_GT(diag["jarque_bera"]["p_value"].get<double>(), 0.0);
}

TEST_F(CliTest, BootstrapValidatesAndWritesBands) {
  const std::string model = parametric_fit("fit");
  EXPECT_EQ(run({"bootstrap", "--model", model, "-B", "0"}), cli::kExitConfig);
  EXPECT_EQ(run({"bootstrap", "--model", model, "--level", "1.5"}), cli::kExitConfig);
  EXPECT_EQ(run({"bootstrap", "--model", model, "--level", "0"}), cli::kExitConfig);
  ASSERT_EQ(run({"bootstrap", "--model", model, "--length", "200", "-B", "25", "-o", path("boot")}), cli::kExitOk)
      << err_.str();
  const auto band = lines(path("boot/band_state1_simultaneous.csv"));
  EXPECT_EQ(band[0], "x,lower,upper");
  EXPECT_EQ(band.size(), 513u);
  EXPECT_EQ(lines(path("boot/tpm_intervals.csv")).size(), 5u);
  const auto report = nlohmann::json::parse(read_file(path("boot/bootstrap_report.json")));
  for (const auto& b : report["bands"]) {
    EXPECT_GE(b["inflation"].get<double>(), 1.0);
    if (b["type"] == "simultaneous") EXPECT_GE(b["coverage"].get<double>(), 0.95);
  }
}

TEST_F(CliTest, SelectStatesRanksDecreasing) {
  ASSERT_EQ(run({"select-states", "--data", path("data.csv"), "--column", "x", "--candidates", "1,2", "-C", "2",
                 "--restarts", "2", "-o", path("sel"), "--config",
                 write_config("par.json", R"({"model": {"families": ["normal"]}})")}),
            cli::kExitOk)
      << err_.str();
  const auto r = nlohmann::json::parse(read_file(path("sel/select_states.json")));
  ASSERT_EQ(r["ranking"].size(), 2u);
  EXPECT_GE(r["ranking"][0]["mean_score"].get<double>(), r["ranking"][1]["mean_score"].get<double>());
  EXPECT_EQ(r["selected"].get<std::size_t>(), r["ranking"][0]["states"].get<std::size_t>());
}

TEST_F(CliTest, SimulateWritesSeries) {
  const std::string model = parametric_fit("fit");
  ASSERT_EQ(run({"simulate", "--model", model, "--length", "50", "--seed", "3", "-o", path("sim")}), cli::kExitOk);
  const auto rows = lines(path("sim/series.csv"));
  EXPECT_EQ(rows.size(), 51u);
  EXPECT_EQ(rows[0], "t,x,state");
}

TEST_F(CliTest, ZeroLikelihoodExitsWithTwo) {
  ModelFile f;
  auto basis = std::make_shared<const SplineBasis>(-1.0, 1.0, 3);
  Matrix g(1, 1);
  g << 1.0;
  f.model = make_stationary_model(g, {SplineDensity::uniform(basis)});
  f.penalty = {2, {0.0}};
  save_model(path("narrow.json"), f);
  EXPECT_EQ(run({"diagnose", "--model", path("narrow.json"), "--data", path("data.csv"), "--column", "x", "-o",
                 path("d")}),
            cli::kExitNumerical);
}

TEST_F(CliTest, SimstudyTinyScenario) {
  const std::string cfg = write_config("scen.json", R"({"scenario": {"runs": 1, "length": 200, "K": 5,
      "partitions": 2, "lambda_values": [256, 4096], "bootstrap": 0, "state_candidates": [], "restarts": 1}})");
  ASSERT_EQ(run({"simstudy", "--config", cfg, "-o", path("study")}), cli::kExitOk) << err_.str();
  const auto r = nlohmann::json::parse(read_file(path("study/simstudy_report.json")));
  EXPECT_EQ(r["runs"].get<std::size_t>(), 1u);
  EXPECT_TRUE(fs::exists(path("study/simstudy_table.txt")));
}
