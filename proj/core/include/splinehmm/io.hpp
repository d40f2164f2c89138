#ifndef SPLINEHMM_IO_HPP
#define SPLINEHMM_IO_HPP

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "splinehmm/estimation.hpp"
#include "splinehmm/hmm.hpp"
#include "splinehmm/model_selection.hpp"
#include "splinehmm/simulation.hpp"

namespace splinehmm {

enum class Transform { None, LogAbsolute };
Transform parse_transform(const std::string& name);

struct CsvOptions {
  char delimiter = ',';
  /// nullopt: treat the first row as a header when its selected cell is not numeric.
  std::optional<bool> header;
  /// 1-based column index, used when `column_name` is empty.
  std::size_t column = 1;
  std::string column_name;
  Transform transform = Transform::None;
};

struct DataSet {
  std::vector<double> values;  ///< NaN marks missing
  std::string source;
  std::string column;
  std::size_t missing = 0;
};

/// Blank cells and "NA" are missing. log-absolute maps x to log|x| and
/// zeros to missing. Errors carry 1-based line numbers.
DataSet parse_csv(std::istream& in, const CsvOptions& options, const std::string& source = "<stream>");
DataSet ingest(const std::string& path, const CsvOptions& options);

/// %.17g; NaN is written as NA.
std::string format_double(double x);

struct FitSummary {
  double loglik = 0.0;
  double penalized_loglik = 0.0;
  int iterations = 0;
  std::size_t best_restart = 0;
  bool converged = false;
  bool degenerate_state = false;
};

struct ModelFile {
  HmmModel model;
  PenaltySpec penalty;
  std::optional<FitSummary> summary;
};

inline constexpr int kModelFormatVersion = 1;

std::string model_to_json(const ModelFile& file);
ModelFile model_from_json(const std::string& text);
void save_model(const std::string& path, const ModelFile& file);
ModelFile load_model(const std::string& path);

/// Shared spline basis of the model (null when it has no spline state).
std::shared_ptr<const SplineBasis> model_basis(const HmmModel& model);
/// Structure (families and basis) matching a fitted model.
ModelStructure structure_of(const HmmModel& model);

struct DataConfig {
  std::string path;
  CsvOptions csv;
};

struct AppConfig {
  std::optional<DataConfig> data;
  std::size_t states = 2;
  int half_width = 15;
  std::vector<EmissionFamily> families;  ///< empty: all spline
  int order = 2;
  std::optional<std::vector<double>> lambda;
  bool lambda_cv = false;
  std::size_t partitions = 10;
  double calibration_fraction = 0.9;
  LambdaSearch search;
  int restarts = 5;
  OptimizerOptions optimizer;
  std::size_t bootstrap_replicates = 100;
  double level = 0.95;
  std::size_t grid_points = 512;
  int max_lag = 50;
  std::vector<std::size_t> state_candidates = {1, 2, 3};
  std::size_t simulate_length = 1000;
  std::optional<SimScenario> scenario;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

/// Parses a JSON config; unknown keys and wrong types raise ConfigError
/// naming the field path.
AppConfig parse_config(const std::string& text);
/// As parse_config; a relative data path is resolved against the config file.
AppConfig load_config(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace splinehmm

#endif  // SPLINEHMM_IO_HPP
