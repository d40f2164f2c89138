#include "splinehmm/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace splinehmm {
namespace {

using json = nlohmann::ordered_json;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == delim && !quoted) {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(ch);
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

bool is_na(const std::string& cell) { return cell.empty() || cell == "NA"; }

std::optional<double> parse_number(const std::string& cell) {
  double v = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (begin != end && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

// ---- JSON helpers with field paths ----

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw ConfigError(path + ": " + message);
}

void check_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  check_object(j, path);
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; });
    if (!known) fail(path + "." + item.key(), "unknown key");
  }
}

double as_double(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

std::int64_t as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<std::int64_t>();
}

std::size_t as_count(const json& j, const std::string& path) {
  const auto v = as_int(j, path);
  if (v < 0) fail(path, "must be >= 0");
  return static_cast<std::size_t>(v);
}

bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected true or false");
  return j.get<bool>();
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

std::vector<double> as_doubles(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_double(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<std::size_t> as_counts(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of integers");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_count(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

Matrix as_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) fail(path, "expected a non-empty array of rows");
  const auto n = static_cast<Eigen::Index>(j.size());
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::string rp = path + "[" + std::to_string(i) + "]";
    const std::vector<double> row = as_doubles(j[static_cast<std::size_t>(i)], rp);
    if (static_cast<Eigen::Index>(row.size()) != n) fail(rp, "row length does not match the number of rows");
    for (Eigen::Index k = 0; k < n; ++k) m(i, k) = row[static_cast<std::size_t>(k)];
  }
  return m;
}

template <class F>
void with(const json& obj, const char* key, const std::string& path, F&& f) {
  if (obj.contains(key)) f(obj.at(key), path + "." + key);
}

json emission_to_json(const StateDensity& d) {
  json e;
  e["family"] = family_name(d);
  if (const auto* s = std::get_if<SplineDensity>(&d)) {
    e["logits"] = std::vector<double>(s->free_logits().begin(), s->free_logits().end());
    e["weights"] = std::vector<double>(s->weights().begin(), s->weights().end());
  } else if (const auto* n = std::get_if<NormalDensity>(&d)) {
    e["mean"] = n->mean;
    e["sd"] = n->sd;
  } else {
    const auto& m = std::get<NormalMixtureDensity>(d);
    e["mean1"] = m.mean1;
    e["sd1"] = m.sd1;
    e["mean2"] = m.mean2;
    e["sd2"] = m.sd2;
    e["weight"] = m.weight;
  }
  return e;
}

StateDensity emission_from_json(const json& e, const std::string& path, const std::shared_ptr<const SplineBasis>& basis) {
  check_object(e, path);
  if (!e.contains("family")) fail(path + ".family", "missing");
  const EmissionFamily family = parse_family(as_string(e.at("family"), path + ".family"));
  auto need = [&](const char* key) {
    if (!e.contains(key)) fail(path + "." + key, "missing");
    return as_double(e.at(key), path + "." + key);
  };
  StateDensity d = NormalDensity{};
  switch (family) {
    case EmissionFamily::Spline: {
      check_keys(e, path, {"family", "logits", "weights"});
      if (!basis) fail(path, "spline emission requires a basis");
      if (!e.contains("logits")) fail(path + ".logits", "missing");
      const std::vector<double> logits = as_doubles(e.at("logits"), path + ".logits");
      if (logits.size() != basis->size() - 1) fail(path + ".logits", "expected 2K entries");
      d = SplineDensity(basis, logits);
      break;
    }
    case EmissionFamily::Normal:
      check_keys(e, path, {"family", "mean", "sd"});
      d = NormalDensity{need("mean"), need("sd")};
      break;
    case EmissionFamily::NormalMixture:
      check_keys(e, path, {"family", "mean1", "sd1", "mean2", "sd2", "weight"});
      d = NormalMixtureDensity{need("mean1"), need("sd1"), need("mean2"), need("sd2"), need("weight")};
      break;
  }
  try {
    validate(d);
  } catch (const ConfigError& err) {
    fail(path, err.what());
  }
  return d;
}

HmmModel model_from(const Matrix& gamma, std::vector<StateDensity> emissions, const std::string& path) {
  if (static_cast<std::size_t>(gamma.rows()) != emissions.size())
    fail(path, "gamma and emissions disagree on the number of states");
  try {
    return make_stationary_model(gamma, std::move(emissions));
  } catch (const Error& err) {
    fail(path, err.what());
  }
}

SimScenario scenario_from_json(const json& j, const std::string& path) {
  check_keys(j, path,
             {"truth", "runs", "length", "K", "partitions", "calibration_fraction", "lambda_values", "diagonal",
              "bootstrap", "level", "competitors", "correct_families", "state_candidates", "restarts",
              "parametric_restarts"});
  SimScenario s = default_scenario();
  with(j, "truth", path, [&](const json& t, const std::string& p) {
    check_keys(t, p, {"gamma", "emissions"});
    if (!t.contains("gamma") || !t.contains("emissions")) fail(p, "needs gamma and emissions");
    const Matrix gamma = as_matrix(t.at("gamma"), p + ".gamma");
    const json& em = t.at("emissions");
    if (!em.is_array()) fail(p + ".emissions", "expected an array");
    std::vector<StateDensity> emissions;
    for (std::size_t i = 0; i < em.size(); ++i)
      emissions.push_back(emission_from_json(em[i], p + ".emissions[" + std::to_string(i) + "]", nullptr));
    s.truth = model_from(gamma, std::move(emissions), p);
    s.correct_families.clear();
    for (const auto& e : s.truth.emissions) s.correct_families.push_back(family_of(e));
  });
  with(j, "runs", path, [&](const json& v, const std::string& p) { s.runs = as_count(v, p); });
  with(j, "length", path, [&](const json& v, const std::string& p) { s.length = as_count(v, p); });
  with(j, "K", path, [&](const json& v, const std::string& p) { s.half_width = static_cast<int>(as_int(v, p)); });
  with(j, "partitions", path, [&](const json& v, const std::string& p) { s.partitions = as_count(v, p); });
  with(j, "calibration_fraction", path,
       [&](const json& v, const std::string& p) { s.calibration_fraction = as_double(v, p); });
  with(j, "lambda_values", path, [&](const json& v, const std::string& p) { s.search.values = as_doubles(v, p); });
  with(j, "diagonal", path, [&](const json& v, const std::string& p) { s.search.diagonal = as_doubles(v, p); });
  with(j, "bootstrap", path, [&](const json& v, const std::string& p) { s.bootstrap = as_count(v, p); });
  with(j, "level", path, [&](const json& v, const std::string& p) { s.level = as_double(v, p); });
  with(j, "competitors", path, [&](const json& v, const std::string& p) {
    if (!v.is_array()) fail(p, "expected an array");
    s.competitors.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string ip = p + "[" + std::to_string(i) + "]";
      try {
        s.competitors.push_back(parse_competitor(as_string(v[i], ip)));
      } catch (const ConfigError& err) {
        fail(ip, err.what());
      }
    }
  });
  with(j, "correct_families", path, [&](const json& v, const std::string& p) {
    if (!v.is_array()) fail(p, "expected an array");
    s.correct_families.clear();
    for (std::size_t i = 0; i < v.size(); ++i)
      s.correct_families.push_back(parse_family(as_string(v[i], p + "[" + std::to_string(i) + "]")));
  });
  with(j, "state_candidates", path, [&](const json& v, const std::string& p) { s.state_candidates = as_counts(v, p); });
  with(j, "restarts", path, [&](const json& v, const std::string& p) { s.restarts = static_cast<int>(as_int(v, p)); });
  with(j, "parametric_restarts", path,
       [&](const json& v, const std::string& p) { s.parametric_restarts = static_cast<int>(as_int(v, p)); });
  return s;
}

}  // namespace

Transform parse_transform(const std::string& name) {
  if (name == "none") return Transform::None;
  if (name == "log_abs" || name == "log-absolute") return Transform::LogAbsolute;
  throw ConfigError("unknown transform '" + name + "' (expected none or log_abs)");
}

DataSet parse_csv(std::istream& in, const CsvOptions& options, const std::string& source) {
  DataSet data;
  data.source = source;
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> column;
  if (options.column_name.empty()) {
    if (options.column < 1) throw ConfigError(source + ": column index is 1-based");
    column = options.column - 1;
    data.column = std::to_string(options.column);
  } else {
    data.column = options.column_name;
  }
  bool first = true;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() && first) continue;
    const std::vector<std::string> cells = split(line, options.delimiter);
    if (first) {
      first = false;
      bool header = false;
      if (!options.column_name.empty()) {
        if (options.header.has_value() && !*options.header)
          throw ConfigError(source + ": selecting a column by name needs a header row");
        header = true;
        const auto it = std::find(cells.begin(), cells.end(), options.column_name);
        if (it == cells.end()) throw ConfigError(source + ": no column named '" + options.column_name + "'");
        column = static_cast<std::size_t>(it - cells.begin());
      } else if (options.header.has_value()) {
        header = *options.header;
      } else {
        header = *column < cells.size() && !is_na(cells[*column]) && !parse_number(cells[*column]);
      }
      if (header) {
        if (options.column_name.empty() && *column < cells.size()) data.column = trim(cells[*column]);
        continue;
      }
    }
    if (trim(line).empty()) {
      data.values.push_back(kMissing);
      continue;
    }
    if (*column >= cells.size())
      throw ConfigError(source + ": line " + std::to_string(line_no) + " has no column " + data.column);
    const std::string& cell = cells[*column];
    if (is_na(cell)) {
      data.values.push_back(kMissing);
      continue;
    }
    const auto v = parse_number(cell);
    if (!v) throw ConfigError(source + ": line " + std::to_string(line_no) + ": non-numeric value '" + cell + "'");
    double x = *v;
    if (options.transform == Transform::LogAbsolute) x = x == 0.0 ? kMissing : std::log(std::fabs(x));
    data.values.push_back(x);
  }

  data.missing = static_cast<std::size_t>(std::count_if(data.values.begin(), data.values.end(), is_missing));
  if (data.values.size() < 2) throw ConfigError(source + ": at least two rows are required");
  if (data.missing == data.values.size()) throw ConfigError(source + ": every value is missing");
  return data;
}

DataSet ingest(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  return parse_csv(in, options, path);
}

std::string format_double(double x) {
  if (std::isnan(x)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::shared_ptr<const SplineBasis> model_basis(const HmmModel& model) {
  std::shared_ptr<const SplineBasis> basis;
  for (const auto& e : model.emissions) {
    if (const auto* s = std::get_if<SplineDensity>(&e)) {
      if (!basis)
        basis = s->basis_ptr();
      else if (!(*basis == s->basis()))
        throw ConfigError("spline states must share one basis");
    }
  }
  return basis;
}

ModelStructure structure_of(const HmmModel& model) {
  ModelStructure s;
  s.basis = model_basis(model);
  for (const auto& e : model.emissions) s.families.push_back(family_of(e));
  return s;
}

std::string model_to_json(const ModelFile& file) {
  const HmmModel& m = file.model;
  json j;
  j["format"] = "splinehmm-model";
  j["version"] = kModelFormatVersion;
  j["states"] = m.states();
  if (const auto basis = model_basis(m)) {
    j["basis"] = {{"lower", basis->grid().lower()}, {"upper", basis->grid().upper()}, {"K", basis->half_width()}};
  } else {
    j["basis"] = nullptr;
  }
  json gamma = json::array();
  for (Eigen::Index i = 0; i < m.gamma.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.gamma.cols(); ++k) row.push_back(m.gamma(i, k));
    gamma.push_back(row);
  }
  j["gamma"] = gamma;
  j["delta"] = std::vector<double>(m.delta.data(), m.delta.data() + m.delta.size());
  json em = json::array();
  for (const auto& e : m.emissions) em.push_back(emission_to_json(e));
  j["emissions"] = em;
  j["penalty"] = {{"order", file.penalty.order}, {"lambda", file.penalty.lambda}};
  if (file.summary) {
    const FitSummary& s = *file.summary;
    j["diagnostics"] = {{"loglik", s.loglik},
                        {"penalized_loglik", s.penalized_loglik},
                        {"iterations", s.iterations},
                        {"best_restart", s.best_restart},
                        {"converged", s.converged},
                        {"degenerate_state", s.degenerate_state}};
  }
  return j.dump(2) + "\n";
}

ModelFile model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("model: invalid JSON: ") + e.what());
  }
  const std::string path = "model";
  check_keys(j, path, {"format", "version", "states", "basis", "gamma", "delta", "emissions", "penalty", "diagnostics"});
  for (const char* key : {"format", "version", "gamma", "emissions"})
    if (!j.contains(key)) fail(path + "." + key, "missing");
  if (as_string(j.at("format"), path + ".format") != "splinehmm-model") fail(path + ".format", "not a model file");
  if (as_int(j.at("version"), path + ".version") != kModelFormatVersion) fail(path + ".version", "unsupported version");

  std::shared_ptr<const SplineBasis> basis;
  if (j.contains("basis") && !j.at("basis").is_null()) {
    const json& b = j.at("basis");
    check_keys(b, path + ".basis", {"lower", "upper", "K"});
    for (const char* key : {"lower", "upper", "K"})
      if (!b.contains(key)) fail(path + ".basis." + key, "missing");
    try {
      basis = std::make_shared<const SplineBasis>(as_double(b.at("lower"), path + ".basis.lower"),
                                                  as_double(b.at("upper"), path + ".basis.upper"),
                                                  static_cast<int>(as_int(b.at("K"), path + ".basis.K")));
    } catch (const ConfigError& e) {
      fail(path + ".basis", e.what());
    }
  }

  const Matrix gamma = as_matrix(j.at("gamma"), path + ".gamma");
  const json& em = j.at("emissions");
  if (!em.is_array()) fail(path + ".emissions", "expected an array");
  std::vector<StateDensity> emissions;
  for (std::size_t i = 0; i < em.size(); ++i)
    emissions.push_back(emission_from_json(em[i], path + ".emissions[" + std::to_string(i) + "]", basis));
  if (j.contains("states") && as_count(j.at("states"), path + ".states") != emissions.size())
    fail(path + ".states", "does not match the number of emissions");

  ModelFile file;
  file.model = model_from(gamma, std::move(emissions), path);
  if (j.contains("delta")) {
    const std::vector<double> delta = as_doubles(j.at("delta"), path + ".delta");
    if (delta.size() != file.model.states()) fail(path + ".delta", "wrong length");
    // The stored vector is authoritative so reloaded models are bit-identical.
    for (std::size_t i = 0; i < delta.size(); ++i) file.model.delta(static_cast<Eigen::Index>(i)) = delta[i];
    try {
      file.model.validate();
    } catch (const Error& e) {
      fail(path + ".delta", e.what());
    }
  }
  if (j.contains("penalty")) {
    const json& p = j.at("penalty");
    check_keys(p, path + ".penalty", {"order", "lambda"});
    with(p, "order", path + ".penalty",
         [&](const json& v, const std::string& pp) { file.penalty.order = static_cast<int>(as_int(v, pp)); });
    with(p, "lambda", path + ".penalty", [&](const json& v, const std::string& pp) { file.penalty.lambda = as_doubles(v, pp); });
  }
  if (j.contains("diagnostics")) {
    const json& d = j.at("diagnostics");
    const std::string dp = path + ".diagnostics";
    check_keys(d, dp, {"loglik", "penalized_loglik", "iterations", "best_restart", "converged", "degenerate_state"});
    FitSummary s;
    with(d, "loglik", dp, [&](const json& v, const std::string& p) { s.loglik = as_double(v, p); });
    with(d, "penalized_loglik", dp, [&](const json& v, const std::string& p) { s.penalized_loglik = as_double(v, p); });
    with(d, "iterations", dp, [&](const json& v, const std::string& p) { s.iterations = static_cast<int>(as_int(v, p)); });
    with(d, "best_restart", dp, [&](const json& v, const std::string& p) { s.best_restart = as_count(v, p); });
    with(d, "converged", dp, [&](const json& v, const std::string& p) { s.converged = as_bool(v, p); });
    with(d, "degenerate_state", dp, [&](const json& v, const std::string& p) { s.degenerate_state = as_bool(v, p); });
    file.summary = s;
  }
  return file;
}

void save_model(const std::string& path, const ModelFile& file) { write_file(path, model_to_json(file)); }

ModelFile load_model(const std::string& path) { return model_from_json(read_file(path)); }

AppConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  const std::string root = "config";
  check_keys(j, root,
             {"seed", "threads", "data", "model", "lambda", "cv", "fit", "bootstrap", "diagnose", "select_states",
              "simulate", "scenario"});
  AppConfig c;
  with(j, "seed", root, [&](const json& v, const std::string& p) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      fail(p, "expected a non-negative integer");
    c.seed = v.get<std::uint64_t>();
  });
  with(j, "threads", root, [&](const json& v, const std::string& p) { c.threads = static_cast<unsigned>(as_count(v, p)); });

  with(j, "data", root, [&](const json& d, const std::string& p) {
    check_keys(d, p, {"path", "column", "delimiter", "header", "transform"});
    DataConfig dc;
    if (!d.contains("path")) fail(p + ".path", "missing");
    dc.path = as_string(d.at("path"), p + ".path");
    with(d, "column", p, [&](const json& v, const std::string& pp) {
      if (v.is_string())
        dc.csv.column_name = v.get<std::string>();
      else
        dc.csv.column = as_count(v, pp);
    });
    with(d, "delimiter", p, [&](const json& v, const std::string& pp) {
      const std::string s = as_string(v, pp);
      if (s.size() != 1) fail(pp, "expected a single character");
      dc.csv.delimiter = s[0];
    });
    with(d, "header", p, [&](const json& v, const std::string& pp) {
      if (v.is_string() && v.get<std::string>() == "auto")
        dc.csv.header.reset();
      else
        dc.csv.header = as_bool(v, pp);
    });
    with(d, "transform", p, [&](const json& v, const std::string& pp) {
      try {
        dc.csv.transform = parse_transform(as_string(v, pp));
      } catch (const ConfigError& e) {
        fail(pp, e.what());
      }
    });
    c.data = dc;
  });

  with(j, "model", root, [&](const json& m, const std::string& p) {
    check_keys(m, p, {"states", "K", "families", "order"});
    with(m, "states", p, [&](const json& v, const std::string& pp) { c.states = as_count(v, pp); });
    with(m, "K", p, [&](const json& v, const std::string& pp) { c.half_width = static_cast<int>(as_int(v, pp)); });
    with(m, "order", p, [&](const json& v, const std::string& pp) { c.order = static_cast<int>(as_int(v, pp)); });
    with(m, "families", p, [&](const json& v, const std::string& pp) {
      if (!v.is_array()) fail(pp, "expected an array");
      for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string ip = pp + "[" + std::to_string(i) + "]";
        try {
          c.families.push_back(parse_family(as_string(v[i], ip)));
        } catch (const ConfigError& e) {
          fail(ip, e.what());
        }
      }
    });
  });

  with(j, "lambda", root, [&](const json& v, const std::string& p) {
    if (v.is_string()) {
      if (v.get<std::string>() != "cv") fail(p, "expected an array of numbers or \"cv\"");
      c.lambda_cv = true;
    } else {
      c.lambda = as_doubles(v, p);
    }
  });

  with(j, "cv", root, [&](const json& v, const std::string& p) {
    check_keys(v, p, {"partitions", "calibration_fraction", "values", "diagonal", "start", "extend_boundary",
                      "max_lambda", "min_lambda"});
    with(v, "partitions", p, [&](const json& x, const std::string& pp) { c.partitions = as_count(x, pp); });
    with(v, "calibration_fraction", p,
         [&](const json& x, const std::string& pp) { c.calibration_fraction = as_double(x, pp); });
    with(v, "values", p, [&](const json& x, const std::string& pp) { c.search.values = as_doubles(x, pp); });
    with(v, "diagonal", p, [&](const json& x, const std::string& pp) { c.search.diagonal = as_doubles(x, pp); });
    with(v, "start", p, [&](const json& x, const std::string& pp) { c.search.start = as_doubles(x, pp); });
    with(v, "extend_boundary", p,
         [&](const json& x, const std::string& pp) { c.search.walk.extend_boundary = as_bool(x, pp); });
    with(v, "max_lambda", p, [&](const json& x, const std::string& pp) { c.search.walk.max_lambda = as_double(x, pp); });
    with(v, "min_lambda", p, [&](const json& x, const std::string& pp) { c.search.walk.min_lambda = as_double(x, pp); });
  });

  with(j, "fit", root, [&](const json& v, const std::string& p) {
    check_keys(v, p, {"restarts", "max_iterations", "rel_tolerance", "grad_tolerance"});
    with(v, "restarts", p, [&](const json& x, const std::string& pp) { c.restarts = static_cast<int>(as_int(x, pp)); });
    with(v, "max_iterations", p,
         [&](const json& x, const std::string& pp) { c.optimizer.max_iterations = static_cast<int>(as_int(x, pp)); });
    with(v, "rel_tolerance", p,
         [&](const json& x, const std::string& pp) { c.optimizer.rel_tolerance = as_double(x, pp); });
    with(v, "grad_tolerance", p,
         [&](const json& x, const std::string& pp) { c.optimizer.grad_tolerance = as_double(x, pp); });
  });

  with(j, "bootstrap", root, [&](const json& v, const std::string& p) {
    check_keys(v, p, {"replicates", "level", "grid_points"});
    with(v, "replicates", p, [&](const json& x, const std::string& pp) { c.bootstrap_replicates = as_count(x, pp); });
    with(v, "level", p, [&](const json& x, const std::string& pp) { c.level = as_double(x, pp); });
    with(v, "grid_points", p, [&](const json& x, const std::string& pp) { c.grid_points = as_count(x, pp); });
  });

  with(j, "diagnose", root, [&](const json& v, const std::string& p) {
    check_keys(v, p, {"max_lag", "grid_points"});
    with(v, "max_lag", p, [&](const json& x, const std::string& pp) { c.max_lag = static_cast<int>(as_int(x, pp)); });
    with(v, "grid_points", p, [&](const json& x, const std::string& pp) { c.grid_points = as_count(x, pp); });
  });

  with(j, "select_states", root, [&](const json& v, const std::string& p) {
    check_keys(v, p, {"candidates"});
    with(v, "candidates", p, [&](const json& x, const std::string& pp) { c.state_candidates = as_counts(x, pp); });
  });

  with(j, "simulate", root, [&](const json& v, const std::string& p) {
    check_keys(v, p, {"length"});
    with(v, "length", p, [&](const json& x, const std::string& pp) { c.simulate_length = as_count(x, pp); });
  });

  with(j, "scenario", root, [&](const json& v, const std::string& p) { c.scenario = scenario_from_json(v, p); });
  return c;
}

AppConfig load_config(const std::string& path) {
  AppConfig c = parse_config(read_file(path));
  // Relative data paths are taken relative to the config file.
  if (c.data && !c.data->path.empty()) {
    const std::filesystem::path data(c.data->path);
    if (data.is_relative()) c.data->path = (std::filesystem::path(path).parent_path() / data).lexically_normal().string();
  }
  return c;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << contents;
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

}  // namespace splinehmm
