#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "splinehmm/io.hpp"

using namespace splinehmm;

namespace {

DataSet parse(const std::string& text, CsvOptions o = {}) {
  std::istringstream in(text);
  return parse_csv(in, o, "test.csv");
}

ModelFile mixed_model() {
  auto basis = std::make_shared<const SplineBasis>(-2.0, 4.0, 5);
  std::vector<double> logits(10);
  for (std::size_t k = 0; k < logits.size(); ++k) logits[k] = std::sin(static_cast<double>(k)) / 3.0;
  Matrix g(3, 3);
  g << 0.8, 0.15, 0.05, 0.1, 0.7, 0.2, 0.3, 0.3, 0.4;
  ModelFile f;
  f.model = make_stationary_model(g, {SplineDensity(basis, logits), NormalDensity{1.0 / 3.0, 0.7},
                                      NormalMixtureDensity{-1, 0.5, 2, 1.25, 0.1}});
  f.penalty = {2, {65536, 0, 0}};
  f.summary = FitSummary{-100.25, -101.5, 42, 1, true, false};
  return f;
}

}  // namespace

TEST(Csv, SelectsColumnWithHeader) {
  CsvOptions o;
  o.column = 2;
  const DataSet d = parse("a,b\n1,2.5\n3,-4\n", o);
  EXPECT_EQ(d.values, (std::vector<double>{2.5, -4}));
  EXPECT_EQ(d.column, "b");
}

TEST(Csv, SelectsColumnByNameAndDelimiter) {
  CsvOptions o;
  o.delimiter = ';';
  o.column_name = "depth";
  const DataSet d = parse("t;depth\n1;7\n2;8\n", o);
  EXPECT_EQ(d.values, (std::vector<double>{7, 8}));
}

TEST(Csv, MissingMarkers) {
  const DataSet d = parse("1\nNA\n\n2\n", {.header = false});
  ASSERT_EQ(d.values.size(), 4u);
  EXPECT_TRUE(std::isnan(d.values[1]));
  EXPECT_TRUE(std::isnan(d.values[2]));
  EXPECT_EQ(d.missing, 2u);
}

TEST(Csv, LogAbsoluteTransform) {
  CsvOptions o;
  o.transform = Transform::LogAbsolute;
  const DataSet d = parse("x\n-2.0\n0\n1\n", o);
  EXPECT_NEAR(d.values[0], std::log(2.0), 1e-15);
  EXPECT_TRUE(std::isnan(d.values[1]));
  EXPECT_EQ(d.values[2], 0.0);
  EXPECT_EQ(parse_transform("log_abs"), Transform::LogAbsolute);
  EXPECT_THROW(parse_transform("sqrt"), ConfigError);
}

TEST(Csv, NonNumericCellReportsLine) {
  try {
    parse("x\n1\nabc\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Csv, AllMissingIsAnError) { EXPECT_THROW(parse("x\nNA\nNA\n"), ConfigError); }

TEST(Csv, QuotedFields) {
  CsvOptions o;
  o.column = 2;
  const DataSet d = parse("\"name, with comma\",v\n\"a,b\",1.5\n\"c\",2\n", o);
  EXPECT_EQ(d.values, (std::vector<double>{1.5, 2}));
}

TEST(FormatDouble, LosslessRoundTrip) {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.123456789, 0.0}) EXPECT_EQ(std::stod(format_double(x)), x);
  EXPECT_EQ(format_double(std::nan("")), "NA");
}

TEST(ModelFile, RoundTripReproducesDensities) {
  const ModelFile f = mixed_model();
  const std::string text = model_to_json(f);
  const ModelFile g = model_from_json(text);
  ASSERT_EQ(g.model.states(), 3u);
  for (double x = -3.0; x <= 5.0; x += 0.173)
    for (std::size_t i = 0; i < 3; ++i)
      EXPECT_NEAR(pdf(g.model.emissions[i], x), pdf(f.model.emissions[i], x), 1e-12);
  EXPECT_EQ(g.model.gamma, f.model.gamma);
  EXPECT_EQ(g.penalty.lambda, f.penalty.lambda);
  ASSERT_TRUE(g.summary.has_value());
  EXPECT_EQ(g.summary->loglik, -100.25);
  EXPECT_EQ(model_to_json(g), text);
}

TEST(ModelFile, RejectsUnknownKeysAndWrongFormat) {
  const std::string text = model_to_json(mixed_model());
  auto broken = text;
  broken.insert(1, "\"extra\": 1,");
  EXPECT_THROW(model_from_json(broken), ConfigError);
  EXPECT_THROW(model_from_json("{\"format\": \"other\", \"version\": 1, \"gamma\": [[1]], \"emissions\": []}"),
               ConfigError);
  EXPECT_THROW(model_from_json("not json"), ConfigError);
}

TEST(ModelFile, StructureMatchesModel) {
  const ModelFile f = mixed_model();
  const ModelStructure s = structure_of(f.model);
  EXPECT_EQ(s.families,
            (std::vector<EmissionFamily>{EmissionFamily::Spline, EmissionFamily::Normal, EmissionFamily::NormalMixture}));
  ASSERT_TRUE(s.basis);
  EXPECT_EQ(*s.basis, std::get<SplineDensity>(f.model.emissions[0]).basis());
}

TEST(Config, ParsesNestedSections) {
  const AppConfig c = parse_config(R"({
    "seed": 7, "threads": 2,
    "data": {"path": "x.csv", "column": "disp", "transform": "log_abs", "header": true},
    "model": {"states": 3, "K": 25, "order": 2},
    "lambda": [65536, 8192, 32],
    "cv": {"partitions": 5, "values": [1, 2, 4], "start": [2, 2, 2]},
    "fit": {"restarts": 4, "max_iterations": 100},
    "bootstrap": {"replicates": 50, "level": 0.9},
    "select_states": {"candidates": [1, 2]}
  })");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.threads, 2u);
  ASSERT_TRUE(c.data);
  EXPECT_EQ(c.data->csv.column_name, "disp");
  EXPECT_EQ(c.data->csv.transform, Transform::LogAbsolute);
  EXPECT_EQ(c.states, 3u);
  EXPECT_EQ(c.half_width, 25);
  EXPECT_EQ(*c.lambda, (std::vector<double>{65536, 8192, 32}));
  EXPECT_EQ(c.partitions, 5u);
  EXPECT_EQ(c.search.values, (std::vector<double>{1, 2, 4}));
  EXPECT_EQ(*c.search.start, (std::vector<double>{2, 2, 2}));
  EXPECT_EQ(c.restarts, 4);
  EXPECT_EQ(c.optimizer.max_iterations, 100);
  EXPECT_EQ(c.bootstrap_replicates, 50u);
  EXPECT_EQ(c.state_candidates, (std::vector<std::size_t>{1, 2}));
}

TEST(Config, LambdaCv) {
  const AppConfig c = parse_config(R"({"lambda": "cv"})");
  EXPECT_TRUE(c.lambda_cv);
  EXPECT_THROW(parse_config(R"({"lambda": "auto"})"), ConfigError);
}

TEST(Config, UnknownKeysNameTheFieldPath) {
  try {
    parse_config(R"({"model": {"statez": 2}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("config.model.statez"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config(R"({"cv": {"values": [1, "x"]}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"seed": -1})"), ConfigError);
}

TEST(Config, Scenario) {
  const AppConfig c = parse_config(R"({"scenario": {"runs": 3, "length": 400, "competitors": ["nonparametric"],
                                       "parametric_restarts": 4, "truth": {"gamma": [[0.8, 0.2], [0.2, 0.8]],
                                                 "emissions": [{"family": "normal", "mean": 0, "sd": 1},
                                                               {"family": "normal", "mean": 3, "sd": 1}]},
                                       "correct_families": ["normal", "normal"]}})");
  ASSERT_TRUE(c.scenario);
  EXPECT_EQ(c.scenario->runs, 3u);
  EXPECT_EQ(c.scenario->length, 400u);
  EXPECT_EQ(c.scenario->truth.gamma(0, 0), 0.8);
  EXPECT_EQ(c.scenario->competitors.size(), 1u);
  EXPECT_EQ(c.scenario->parametric_restarts, 4);
  EXPECT_THROW(parse_config(R"({"scenario": {"parametric_restarts": 0}})").scenario->validate(), ConfigError);
}
