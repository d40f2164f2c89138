#include "splinehmm_cli/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "splinehmm/estimation.hpp"
#include "splinehmm/hmm.hpp"
#include "splinehmm/inference.hpp"
#include "splinehmm/io.hpp"
#include "splinehmm/model_selection.hpp"
#include "splinehmm/simulation.hpp"

namespace splinehmm::cli {
namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out_dir = ".";

  std::string data;
  std::string column;
  std::string transform;
  std::string delimiter;
  std::string model;
  std::optional<std::size_t> states;
  std::optional<int> half_width;
  std::string lambda;
  std::optional<std::size_t> replicates;
  std::optional<std::size_t> partitions;
  std::optional<double> calibration_fraction;
  std::optional<int> restarts;
  std::optional<double> level;
  std::optional<int> max_lag;
  std::string candidates;
  std::optional<std::size_t> length;
  std::optional<std::size_t> runs;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_real(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError(what + ": '" + s + "' is not a number");
  }
  if (used != s.size() || !std::isfinite(v)) throw ConfigError(what + ": '" + s + "' is not a number");
  return v;
}

AppConfig resolve(const Options& o) {
  AppConfig c = o.config.empty() ? AppConfig{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  if (!o.data.empty()) {
    if (!c.data) c.data = DataConfig{};
    c.data->path = o.data;
  }
  if (c.data) {
    if (!o.column.empty()) {
      if (std::all_of(o.column.begin(), o.column.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
        c.data->csv.column = static_cast<std::size_t>(std::stoul(o.column));
        c.data->csv.column_name.clear();
      } else {
        c.data->csv.column_name = o.column;
      }
    }
    if (!o.transform.empty()) c.data->csv.transform = parse_transform(o.transform);
    if (!o.delimiter.empty()) {
      const std::string d = o.delimiter == "\\t" ? "\t" : o.delimiter;
      if (d.size() != 1) throw ConfigError("--delimiter: expected a single character");
      c.data->csv.delimiter = d[0];
    }
  }
  if (o.states) c.states = *o.states;
  if (o.half_width) c.half_width = *o.half_width;
  if (!o.lambda.empty()) {
    if (o.lambda == "cv") {
      c.lambda_cv = true;
      c.lambda.reset();
    } else {
      std::vector<double> l;
      for (const auto& item : split_list(o.lambda)) l.push_back(parse_real(item, "--lambda"));
      c.lambda = l;
      c.lambda_cv = false;
    }
  }
  if (o.replicates) c.bootstrap_replicates = *o.replicates;
  if (o.partitions) c.partitions = *o.partitions;
  if (o.calibration_fraction) c.calibration_fraction = *o.calibration_fraction;
  if (o.restarts) c.restarts = *o.restarts;
  if (o.level) c.level = *o.level;
  if (o.max_lag) c.max_lag = *o.max_lag;
  if (!o.candidates.empty()) {
    c.state_candidates.clear();
    for (const auto& item : split_list(o.candidates)) {
      const double v = parse_real(item, "--candidates");
      if (v < 1 || v != std::floor(v)) throw ConfigError("--candidates: expected positive integers");
      c.state_candidates.push_back(static_cast<std::size_t>(v));
    }
  }
  if (o.length) c.simulate_length = *o.length;
  if (c.threads == 0) throw ConfigError("threads must be >= 1");
  return c;
}

DataSet load_data(const AppConfig& c) {
  if (!c.data || c.data->path.empty()) throw ConfigError("no data file given (use --data or config.data.path)");
  return ingest(c.data->path, c.data->csv);
}

std::string out_path(const Options& o, const std::string& name) {
  fs::create_directories(o.out_dir);
  return (fs::path(o.out_dir) / name).string();
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns) {
  std::ostringstream ss;
  for (std::size_t k = 0; k < header.size(); ++k) ss << (k ? "," : "") << header[k];
  ss << "\n";
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < columns.size(); ++k) ss << (k ? "," : "") << format_double(columns[k][r]);
    ss << "\n";
  }
  write_file(path, ss.str());
}

void write_json(const std::string& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

void print_matrix(std::ostream& out, const std::string& title, const Matrix& m) {
  out << title << "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << " ";
    for (Eigen::Index k = 0; k < m.cols(); ++k) out << " " << std::fixed << std::setprecision(4) << m(i, k);
    out << "\n";
  }
  out.unsetf(std::ios::floatfield);
}

std::vector<EmissionFamily> families_for(const AppConfig& c, std::size_t states) {
  if (c.families.empty()) return std::vector<EmissionFamily>(states, EmissionFamily::Spline);
  if (c.families.size() == 1) return std::vector<EmissionFamily>(states, c.families.front());
  if (c.families.size() != states)
    throw ConfigError("config.model.families: expected " + std::to_string(states) + " entries");
  return c.families;
}

FitConfig base_fit_config(const AppConfig& c, std::size_t states, Series data) {
  FitConfig f;
  f.structure.families = families_for(c, states);
  if (f.structure.has_spline())
    f.structure.basis = std::make_shared<const SplineBasis>(basis_for_series(data, c.half_width));
  f.penalty.order = c.order;
  f.penalty.lambda.assign(states, 0.0);
  f.restarts = c.restarts;
  f.seed = c.seed;
  f.optimizer = c.optimizer;
  f.threads = c.threads;
  return f;
}

std::vector<Partition> cv_partitions(const AppConfig& c, std::size_t length) {
  return make_partitions(length, c.partitions, c.calibration_fraction, derive_seed(c.seed, 7));
}

json cv_report_json(const CvReport& r) {
  json j;
  json traj = json::array();
  for (const auto& l : r.trajectory) traj.push_back(l);
  j["trajectory"] = traj;
  j["selected"] = r.selected;
  j["selected_score"] = r.selected_score;
  json scores = json::array();
  for (const auto& [lambda, score] : r.mean_scores)
    scores.push_back({{"lambda", lambda}, {"mean_score", score}, {"excluded_partitions", r.excluded_partitions.at(lambda)}});
  j["mean_scores"] = scores;
  json ext = json::array();
  for (const auto& e : r.extensions) ext.push_back({{"state", e.state + 1}, {"value", e.value}});
  j["extensions"] = ext;
  j["evaluated_cells"] = r.evaluated_cells;
  j["cache_hits"] = r.cache_hits;
  return j;
}

json restart_json(const std::vector<RestartDiagnostics>& restarts) {
  json arr = json::array();
  for (const auto& d : restarts)
    arr.push_back({{"index", d.index},
                   {"warm", d.warm},
                   {"penalized_loglik", d.penalized_loglik},
                   {"iterations", d.iterations},
                   {"status", to_string(d.status)},
                   {"converged", d.converged}});
  return arr;
}

// ---- commands ----

int cmd_fit(const Options& o, std::ostream& out) {
  const AppConfig c = resolve(o);
  const DataSet data = load_data(c);
  const std::size_t n = c.states;
  if (n < 1) throw ConfigError("config.model.states: must be >= 1");
  FitConfig f = base_fit_config(c, n, data.values);

  json report;
  if (c.lambda_cv) {
    if (!f.structure.has_spline()) throw ConfigError("lambda \"cv\" needs at least one spline state");
    CvFitScorer scorer(data.values, cv_partitions(c, data.values.size()), f, c.threads);
    LambdaSearch search = c.search;
    if (search.start && search.start->size() != n) throw ConfigError("config.cv.start: expected one value per state");
    const LambdaSelection sel = select_lambda(scorer, n, search);
    f.penalty.lambda = sel.lambda;
    json cv;
    if (!sel.diagonal.trajectory.empty()) cv["diagonal"] = cv_report_json(sel.diagonal);
    cv["walk"] = cv_report_json(sel.walk);
    cv["lambda"] = sel.lambda;
    cv["score"] = sel.score;
    cv["failed_fits"] = scorer.failures();
    write_json(out_path(o, "cv_report.json"), cv);
    out << "cross-validation: " << sel.walk.trajectory.size() - 1 << " walk steps, " << scorer.failures()
        << " failed fits\n";
  } else if (c.lambda) {
    if (c.lambda->size() != n) throw ConfigError("config.lambda: expected " + std::to_string(n) + " values");
    f.penalty.lambda = *c.lambda;
  } else if (f.structure.has_spline()) {
    throw ConfigError("config.lambda: required for spline states (numbers or \"cv\")");
  }

  FitResult res;
  try {
    res = fit(data.values, f);
  } catch (const FitError& e) {
    json diag;
    diag["error"] = e.what();
    diag["restarts"] = restart_json(e.diagnostics());
    write_json(out_path(o, "fit_failure.json"), diag);
    throw;
  }

  ModelFile mf;
  mf.model = res.model;
  mf.penalty = f.penalty;
  mf.summary = FitSummary{res.loglik, res.penalized_loglik, res.iterations, res.best_restart, res.converged,
                          res.degenerate_state};
  const std::string model_path = o.model.empty() ? out_path(o, "model.json") : o.model;
  if (!o.model.empty() && fs::path(o.model).has_parent_path()) fs::create_directories(fs::path(o.model).parent_path());
  save_model(model_path, mf);

  report["observations"] = observed_count(data.values);
  report["missing"] = data.missing;
  report["states"] = n;
  json fams = json::array();
  for (auto fam : f.structure.families) fams.push_back(to_string(fam));
  report["families"] = fams;
  report["lambda"] = f.penalty.lambda;
  report["loglik"] = res.loglik;
  report["penalized_loglik"] = res.penalized_loglik;
  report["gamma"] = matrix_json(res.model.gamma);
  report["delta"] = vector_json(res.model.delta);
  json means = json::array();
  for (const auto& e : res.model.emissions) means.push_back(mean(e));
  report["state_means"] = means;
  report["degenerate_state"] = res.degenerate_state;
  report["best_restart"] = res.best_restart;
  report["restarts"] = restart_json(res.restarts);
  if (!f.structure.has_spline()) {
    const InformationCriteria ic =
        information_criteria(res.loglik, parameter_count(f.structure), observed_count(data.values));
    report["parameters"] = ic.parameters;
    report["aic"] = ic.aic;
    report["bic"] = ic.bic;
  }
  write_json(out_path(o, "fit_report.json"), report);

  print_matrix(out, "Gamma:", res.model.gamma);
  out << "delta:";
  for (Eigen::Index i = 0; i < res.model.delta.size(); ++i) out << " " << std::fixed << std::setprecision(4) << res.model.delta(i);
  out.unsetf(std::ios::floatfield);
  out << "\nlog-likelihood: " << format_double(res.loglik) << "\npenalized log-likelihood: "
      << format_double(res.penalized_loglik) << "\n";
  if (report.contains("aic")) out << "AIC: " << format_double(report["aic"].get<double>()) << "\nBIC: "
                                  << format_double(report["bic"].get<double>()) << "\n";
  if (res.degenerate_state) out << "warning: a state is not visited by the decoded path\n";
  out << "model written to " << model_path << "\n";
  return kExitOk;
}

std::vector<double> density_grid(const HmmModel& model, std::size_t points) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& e : model.emissions) {
    const auto g = band_grid(e, 2);
    lo = std::min(lo, g.front());
    hi = std::max(hi, g.back());
  }
  std::vector<double> grid(points);
  for (std::size_t g = 0; g < points; ++g)
    grid[g] = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(points - 1);
  return grid;
}

int cmd_diagnose(const Options& o, std::ostream& out) {
  const AppConfig c = resolve(o);
  if (o.model.empty()) throw ConfigError("--model is required");
  const ModelFile mf = load_model(o.model);
  const HmmModel& m = mf.model;
  const DataSet data = load_data(c);
  if (c.max_lag < 0) throw ConfigError("config.diagnose.max_lag: must be >= 0");
  if (c.grid_points < 2) throw ConfigError("grid_points: must be >= 2");
  const std::vector<double>& x = data.values;

  const ResidualSeries res = pseudo_residuals(m, x);
  const JarqueBera jb = jarque_bera(res.residual);
  std::vector<double> t(x.size());
  std::iota(t.begin(), t.end(), 1.0);
  write_csv(out_path(o, "residuals.csv"), {"t", "x", "uniform", "residual"}, {t, x, res.uniform, res.residual});

  const ViterbiPath path = viterbi(m, x);
  std::vector<double> states(path.states.size());
  for (std::size_t k = 0; k < states.size(); ++k) states[k] = path.states[k] + 1;
  write_csv(out_path(o, "viterbi.csv"), {"t", "state"}, {t, states});

  const std::vector<double> sacf = sample_acf(x, c.max_lag);
  const std::vector<double> macf = model_acf(m, c.max_lag);
  std::vector<double> lags(sacf.size());
  std::iota(lags.begin(), lags.end(), 0.0);
  write_csv(out_path(o, "acf.csv"), {"lag", "sample", "model"}, {lags, sacf, macf});

  const std::vector<double> grid = density_grid(m, c.grid_points);
  std::vector<double> marginal(grid.size());
  std::vector<std::vector<double>> cols{grid};
  std::vector<std::string> header{"x"};
  for (std::size_t i = 0; i < m.states(); ++i) {
    std::vector<double> col(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g)
      col[g] = m.delta(static_cast<Eigen::Index>(i)) * pdf(m.emissions[i], grid[g]);
    cols.push_back(col);
    header.push_back("state_" + std::to_string(i + 1));
  }
  for (std::size_t g = 0; g < grid.size(); ++g) marginal[g] = marginal_density(m, grid[g]);
  write_csv(out_path(o, "marginal.csv"), {"x", "density"}, {grid, marginal});
  write_csv(out_path(o, "state_densities.csv"), header, cols);

  json j;
  j["observations"] = observed_count(x);
  j["gaps"] = res.gaps.size();
  j["jarque_bera"] = {{"statistic", jb.statistic}, {"p_value", jb.p_value}, {"n", jb.n}};
  j["viterbi_log_probability"] = path.log_probability;
  j["log_likelihood"] = log_likelihood(m, x);
  write_json(out_path(o, "diagnostics.json"), j);

  out << "Jarque-Bera statistic " << format_double(jb.statistic) << ", p-value " << format_double(jb.p_value) << "\n";
  out << "diagnostics written to " << o.out_dir << "\n";
  return kExitOk;
}

int cmd_bootstrap(const Options& o, std::ostream& out) {
  const AppConfig c = resolve(o);
  if (o.model.empty()) throw ConfigError("--model is required");
  if (c.bootstrap_replicates < 1) throw ConfigError("bootstrap replicates must be >= 1");
  if (!(c.level > 0.0 && c.level < 1.0)) throw ConfigError("level must lie in (0, 1)");
  if (c.grid_points < 2) throw ConfigError("grid_points: must be >= 2");
  const ModelFile mf = load_model(o.model);
  std::size_t length = c.simulate_length;
  if (c.data && !c.data->path.empty()) length = load_data(c).values.size();

  FitConfig f;
  f.structure = structure_of(mf.model);
  f.penalty = mf.penalty;
  if (f.penalty.lambda.empty()) f.penalty.lambda.assign(mf.model.states(), 0.0);
  f.restarts = 0;
  f.optimizer = c.optimizer;
  const BootstrapEnsemble ens = bootstrap(mf.model, length, c.bootstrap_replicates, f, derive_seed(c.seed, 11), c.threads);
  const TpmIntervals ci = tpm_intervals(ens, c.level);

  const std::size_t n = mf.model.states();
  std::vector<double> from, to, est, lo, hi;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      const auto a = static_cast<Eigen::Index>(i);
      const auto b = static_cast<Eigen::Index>(k);
      from.push_back(static_cast<double>(i + 1));
      to.push_back(static_cast<double>(k + 1));
      est.push_back(ens.generator.gamma(a, b));
      lo.push_back(ci.lower(a, b));
      hi.push_back(ci.upper(a, b));
    }
  write_csv(out_path(o, "tpm_intervals.csv"), {"from", "to", "estimate", "lower", "upper"}, {from, to, est, lo, hi});

  json bands = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> grid = band_grid(ens.generator.emissions[i], c.grid_points);
    for (BandType type : {BandType::Pointwise, BandType::Simultaneous}) {
      const DensityBand band = density_band(ens, i, grid, c.level, type);
      const std::string name = "band_state" + std::to_string(i + 1) + "_" + to_string(type) + ".csv";
      write_csv(out_path(o, name), {"x", "lower", "upper"}, {band.grid, band.lower, band.upper});
      bands.push_back({{"state", i + 1},
                       {"type", to_string(type)},
                       {"file", name},
                       {"inflation", band.inflation},
                       {"coverage", band.coverage}});
    }
  }
  json j;
  j["replicates"] = c.bootstrap_replicates;
  j["converged"] = ens.converged_count();
  j["failed"] = ens.failed_count();
  j["length"] = length;
  j["level"] = c.level;
  j["lambda"] = f.penalty.lambda;
  j["bands"] = bands;
  write_json(out_path(o, "bootstrap_report.json"), j);

  out << "bootstrap: " << ens.converged_count() << " of " << c.bootstrap_replicates << " replicates converged\n";
  for (const auto& b : bands)
    if (b["type"] == "simultaneous")
      out << "state " << b["state"].get<std::size_t>() << " simultaneous inflation factor "
          << format_double(b["inflation"].get<double>()) << "\n";
  return kExitOk;
}

std::string sim_table(const SimReport& r) {
  std::ostringstream ss;
  ss << "runs: " << r.runs << "  seed: " << r.seed << "\n";
  ss << std::left << std::setw(20) << "competitor" << std::setw(6) << "state" << std::right << std::setw(10)
     << "gamma_ii" << std::setw(10) << "mc_sd" << std::setw(10) << "boot_se" << std::setw(10) << "coverage"
     << std::setw(10) << "kld" << "\n";
  for (const auto& [comp, s] : r.competitors) {
    for (std::size_t i = 0; i < s.gamma_mean.size(); ++i) {
      ss << std::left << std::setw(20) << to_string(comp) << std::setw(6) << i + 1 << std::right << std::fixed
         << std::setprecision(4) << std::setw(10) << s.gamma_mean[i] << std::setw(10) << s.gamma_sd[i]
         << std::setw(10) << s.bootstrap_se_mean[i] << std::setw(10) << s.coverage[i] << std::setw(10)
         << s.kld_mean[i] << "\n";
    }
    if (s.failed > 0) ss << "  " << to_string(comp) << ": " << s.failed << " failed runs excluded\n";
  }
  if (r.state_selection_runs > 0) {
    ss << "state-count selection (" << r.state_selection_runs << " runs):";
    for (const auto& [n, f] : r.state_frequencies) ss << "  N=" << n << ": " << std::fixed << std::setprecision(3) << f;
    ss << "\n";
  }
  return ss.str();
}

json sim_json(const SimReport& r) {
  json j;
  j["runs"] = r.runs;
  j["seed"] = r.seed;
  j["truth_gamma_diag"] = r.truth_gamma_diag;
  json comps = json::object();
  for (const auto& [comp, s] : r.competitors)
    comps[to_string(comp)] = {{"fitted_runs", s.runs},        {"failed_runs", s.failed},
                              {"gamma_mean", s.gamma_mean},   {"gamma_sd", s.gamma_sd},
                              {"bootstrap_se_mean", s.bootstrap_se_mean}, {"coverage", s.coverage},
                              {"kld_mean", s.kld_mean}};
  j["competitors"] = comps;
  json freq = json::object();
  for (const auto& [n, f] : r.state_frequencies) freq[std::to_string(n)] = f;
  j["state_frequencies"] = freq;
  j["state_selection_runs"] = r.state_selection_runs;
  json runs = json::array();
  for (const auto& rec : r.records) {
    json jr;
    jr["run"] = rec.run;
    jr["seed"] = rec.seed;
    json jc = json::object();
    for (const auto& [comp, cr] : rec.competitors)
      jc[to_string(comp)] = {{"ok", cr.ok},         {"lambda", cr.lambda},   {"gamma_diag", cr.gamma_diag},
                             {"bootstrap_se", cr.bootstrap_se}, {"covered", cr.covered}, {"kld", cr.kld},
                             {"bootstrap_failures", cr.bootstrap_failures}, {"error", cr.error}};
    jr["competitors"] = jc;
    jr["selected_states"] = rec.selected_states;
    json sc = json::object();
    for (const auto& [n, s] : rec.state_scores) sc[std::to_string(n)] = s;
    jr["state_scores"] = sc;
    runs.push_back(jr);
  }
  j["records"] = runs;
  return j;
}

int cmd_simstudy(const Options& o, std::ostream& out) {
  const AppConfig c = resolve(o);
  SimScenario s = c.scenario ? *c.scenario : default_scenario();
  if (o.runs) s.runs = *o.runs;
  if (o.length) s.length = *o.length;
  if (o.half_width) s.half_width = *o.half_width;
  if (o.replicates) s.bootstrap = *o.replicates;
  if (o.partitions) s.partitions = *o.partitions;
  if (o.calibration_fraction) s.calibration_fraction = *o.calibration_fraction;
  if (o.level) s.level = *o.level;
  if (o.restarts) s.restarts = *o.restarts;
  s.seed = c.seed;
  s.threads = c.threads;
  const SimReport r = run_study(s);
  const std::string table = sim_table(r);
  write_file(out_path(o, "simstudy_table.txt"), table);
  write_json(out_path(o, "simstudy_report.json"), sim_json(r));
  out << table;
  return kExitOk;
}

int cmd_select_states(const Options& o, std::ostream& out) {
  const AppConfig c = resolve(o);
  if (c.state_candidates.empty()) throw ConfigError("state candidates must not be empty");
  const DataSet data = load_data(c);
  const auto partitions = cv_partitions(c, data.values.size());
  const FitConfigFactory factory = [&](std::size_t n) { return base_fit_config(c, n, data.values); };
  LambdaSearch search = c.search;
  search.start.reset();
  const StateCountReport r = select_num_states(data.values, c.state_candidates, factory, search, partitions, c.threads);

  std::vector<std::size_t> order(r.candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return r.mean_scores[a] > r.mean_scores[b]; });
  json ranking = json::array();
  out << "rank  N  mean validation log-likelihood  lambda\n";
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t idx = order[k];
    ranking.push_back({{"states", r.candidates[idx]}, {"mean_score", r.mean_scores[idx]}, {"lambda", r.lambdas[idx]}});
    out << std::setw(4) << k + 1 << "  " << r.candidates[idx] << "  " << format_double(r.mean_scores[idx]) << "  ";
    for (double l : r.lambdas[idx]) out << format_double(l) << " ";
    out << "\n";
  }
  json j;
  j["selected"] = r.selected;
  j["selected_score"] = r.selected_score;
  j["ranking"] = ranking;
  j["partitions"] = c.partitions;
  j["calibration_fraction"] = c.calibration_fraction;
  write_json(out_path(o, "select_states.json"), j);
  out << "selected N = " << r.selected << "\n";
  return kExitOk;
}

int cmd_simulate(const Options& o, std::ostream& out) {
  const AppConfig c = resolve(o);
  if (o.model.empty()) throw ConfigError("--model is required");
  if (c.simulate_length < 1) throw ConfigError("length must be >= 1");
  const ModelFile mf = load_model(o.model);
  Rng rng(derive_seed(c.seed, 13));
  const SimulatedSeries sim = simulate_series(mf.model, c.simulate_length, rng);
  std::vector<double> t(sim.observations.size());
  std::iota(t.begin(), t.end(), 1.0);
  std::vector<double> s(sim.states.size());
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = sim.states[k] + 1;
  const std::string path = out_path(o, "series.csv");
  write_csv(path, {"t", "x", "state"}, {t, sim.observations, s});
  out << "simulated " << sim.observations.size() << " observations to " << path << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hidden Markov models with penalized B-spline state-dependent densities"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Master random seed");
    sub->add_option("--threads", o.threads, "Worker threads");
    sub->add_option("--output-dir,-o", o.out_dir, "Directory for output files");
  };
  auto data_opts = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "CSV data file");
    sub->add_option("--column", o.column, "Column (1-based index or header name)");
    sub->add_option("--transform", o.transform, "none or log_abs");
    sub->add_option("--delimiter", o.delimiter, "Field delimiter");
  };
  auto model_opts = [&](CLI::App* sub) {
    sub->add_option("--states,-N", o.states, "Number of states");
    sub->add_option("--K", o.half_width, "Basis half-width (2K+1 densities)");
    sub->add_option("--lambda", o.lambda, "Comma-separated smoothing parameters, or cv");
    sub->add_option("--partitions,-C", o.partitions, "Cross-validation partitions");
    sub->add_option("--calibration-fraction", o.calibration_fraction, "Calibration share of each partition");
    sub->add_option("--restarts", o.restarts, "Random starting points");
  };

  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit a model by maximum penalized likelihood");
  common(fit_cmd);
  data_opts(fit_cmd);
  model_opts(fit_cmd);
  fit_cmd->add_option("--model-out", o.model, "Model file to write (default <output-dir>/model.json)");

  CLI::App* diag_cmd = app.add_subcommand("diagnose", "Pseudo-residuals, decoding, ACF and density curves");
  common(diag_cmd);
  data_opts(diag_cmd);
  diag_cmd->add_option("--model", o.model, "Model file")->required();
  diag_cmd->add_option("--max-lag", o.max_lag, "Largest ACF lag");

  CLI::App* boot_cmd = app.add_subcommand("bootstrap", "Parametric bootstrap intervals and density bands");
  common(boot_cmd);
  data_opts(boot_cmd);
  boot_cmd->add_option("--model", o.model, "Model file")->required();
  boot_cmd->add_option("-B,--replicates", o.replicates, "Bootstrap replicates");
  boot_cmd->add_option("--level", o.level, "Confidence level");
  boot_cmd->add_option("--length", o.length, "Series length when no data file is given");

  CLI::App* sim_cmd = app.add_subcommand("simstudy", "Simulation study with competing models");
  common(sim_cmd);
  sim_cmd->add_option("--runs", o.runs, "Number of simulation runs");
  sim_cmd->add_option("--length", o.length, "Series length per run");
  sim_cmd->add_option("--K", o.half_width, "Basis half-width");
  sim_cmd->add_option("-B,--replicates", o.replicates, "Bootstrap replicates per fit");
  sim_cmd->add_option("--partitions,-C", o.partitions, "Cross-validation partitions");
  sim_cmd->add_option("--calibration-fraction", o.calibration_fraction, "Calibration share of each partition");
  sim_cmd->add_option("--level", o.level, "Confidence level");
  sim_cmd->add_option("--restarts", o.restarts, "Random starting points");

  CLI::App* sel_cmd = app.add_subcommand("select-states", "Choose the number of states by cross-validation");
  common(sel_cmd);
  data_opts(sel_cmd);
  model_opts(sel_cmd);
  sel_cmd->add_option("--candidates", o.candidates, "Comma-separated candidate state counts");

  CLI::App* simu_cmd = app.add_subcommand("simulate", "Simulate a series from a model file");
  common(simu_cmd);
  simu_cmd->add_option("--model", o.model, "Model file")->required();
  simu_cmd->add_option("--length", o.length, "Series length");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*fit_cmd) return cmd_fit(o, out);
    if (*diag_cmd) return cmd_diagnose(o, out);
    if (*boot_cmd) return cmd_bootstrap(o, out);
    if (*sim_cmd) return cmd_simstudy(o, out);
    if (*sel_cmd) return cmd_select_states(o, out);
    if (*simu_cmd) return cmd_simulate(o, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace splinehmm::cli
