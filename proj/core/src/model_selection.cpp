#include "splinehmm/model_selection.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "splinehmm/parallel.hpp"

namespace splinehmm {
namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t cell_seed(std::uint64_t master, const std::vector<double>& lambda, std::size_t partition) {
  std::uint64_t s = derive_seed(master, partition);
  for (double l : lambda) s = derive_seed(s, std::bit_cast<std::uint64_t>(l));
  return s;
}

double log_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double v = std::log1p(a[i]) - std::log1p(b[i]);
    d += v * v;
  }
  return d;
}

struct MeanScore {
  double mean = -std::numeric_limits<double>::infinity();
  std::size_t excluded = 0;
};

MeanScore mean_of(const std::vector<double>& scores) {
  MeanScore m;
  double sum = 0.0;
  std::size_t n = 0;
  for (double s : scores) {
    if (std::isfinite(s)) {
      sum += s;
      ++n;
    } else {
      ++m.excluded;
    }
  }
  if (n > 0) m.mean = sum / static_cast<double>(n);
  return m;
}

// Scores cached per lambda, one entry per partition.
class ScoreTable {
 public:
  ScoreTable(std::size_t partitions, const BatchScorer& scorer, CvReport& report)
      : partitions_(partitions), scorer_(scorer), report_(report) {}

  void seed(const CvReport& prior) {
    for (const auto& c : prior.cells) {
      auto& row = table_.try_emplace(c.lambda, std::vector<double>(partitions_, kNaN)).first->second;
      row[c.partition] = c.score;
    }
    for (const auto& [lambda, row] : table_) record_mean(lambda, row);
  }

  void ensure(const std::vector<std::vector<double>>& points) {
    std::vector<CellRequest> requests;
    std::set<std::vector<double>> pending;
    for (const auto& p : points) {
      if (table_.count(p) || pending.count(p)) {
        report_.cache_hits += partitions_;
        continue;
      }
      pending.insert(p);
      for (std::size_t c = 0; c < partitions_; ++c) requests.push_back({p, c});
    }
    if (requests.empty()) return;
    const std::vector<double> scores = scorer_(requests);
    if (scores.size() != requests.size()) throw Error("scorer returned the wrong number of scores");
    for (std::size_t r = 0; r < requests.size(); ++r) {
      auto& row = table_.try_emplace(requests[r].lambda, std::vector<double>(partitions_, kNaN)).first->second;
      row[requests[r].partition] = scores[r];
      report_.cells.push_back({requests[r].lambda, requests[r].partition, scores[r]});
      ++report_.evaluated_cells;
    }
    for (const auto& p : pending) record_mean(p, table_.at(p));
  }

  double mean(const std::vector<double>& lambda) const { return report_.mean_scores.at(lambda); }

 private:
  void record_mean(const std::vector<double>& lambda, const std::vector<double>& row) {
    const MeanScore m = mean_of(row);
    report_.mean_scores[lambda] = m.mean;
    report_.excluded_partitions[lambda] = m.excluded;
  }

  std::size_t partitions_;
  const BatchScorer& scorer_;
  CvReport& report_;
  std::map<std::vector<double>, std::vector<double>> table_;
};

}  // namespace

std::vector<Partition> make_partitions(std::size_t length, std::size_t count, double calibration_fraction,
                                       std::uint64_t seed) {
  if (count < 1) throw ConfigError("partition count must be >= 1");
  if (!(calibration_fraction > 0.0 && calibration_fraction < 1.0))
    throw ConfigError("calibration fraction must lie in (0, 1)");
  const auto validation =
      static_cast<std::size_t>(std::llround(static_cast<double>(length) * (1.0 - calibration_fraction)));
  if (validation == 0) throw ConfigError("validation set would be empty");
  if (validation >= length) throw ConfigError("calibration set would be empty");

  Rng rng(seed);
  std::vector<Partition> out;
  std::vector<std::size_t> idx(length);
  for (std::size_t c = 0; c < count; ++c) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Fisher-Yates on the first `validation` positions.
    for (std::size_t i = 0; i < validation; ++i) {
      const std::size_t span = length - i;
      const auto j = i + std::min(span - 1, static_cast<std::size_t>(uniform_open(rng) * static_cast<double>(span)));
      std::swap(idx[i], idx[j]);
    }
    Partition p;
    p.validation.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(validation));
    p.calibration.assign(idx.begin() + static_cast<std::ptrdiff_t>(validation), idx.end());
    std::sort(p.validation.begin(), p.validation.end());
    std::sort(p.calibration.begin(), p.calibration.end());
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<double> mask_series(Series series, std::span<const std::size_t> masked) {
  std::vector<double> out(series.begin(), series.end());
  for (std::size_t i : masked) {
    if (i >= out.size()) throw ConfigError("mask index out of range");
    out[i] = kMissing;
  }
  return out;
}

SmoothingGrid::SmoothingGrid(std::vector<std::vector<double>> candidates) : candidates_(std::move(candidates)) {
  if (candidates_.empty()) throw ConfigError("smoothing grid needs at least one dimension");
  for (const auto& list : candidates_) {
    if (list.empty()) throw ConfigError("smoothing grid has an empty candidate list");
    for (std::size_t k = 0; k < list.size(); ++k) {
      if (!(list[k] >= 0.0) || !std::isfinite(list[k])) throw ConfigError("smoothing candidates must be finite and >= 0");
      if (k > 0 && !(list[k] > list[k - 1])) throw ConfigError("smoothing candidates must be strictly increasing");
    }
  }
}

SmoothingGrid SmoothingGrid::shared(std::size_t states, std::vector<double> values) {
  return SmoothingGrid(std::vector<std::vector<double>>(states, std::move(values)));
}

std::vector<double> SmoothingGrid::at(const std::vector<std::size_t>& index) const {
  std::vector<double> out(index.size());
  for (std::size_t s = 0; s < index.size(); ++s) out[s] = candidates_[s].at(index[s]);
  return out;
}

std::vector<std::size_t> SmoothingGrid::index_of(const std::vector<double>& lambda) const {
  if (lambda.size() != candidates_.size()) throw ConfigError("lambda dimension does not match the grid");
  std::vector<std::size_t> idx(lambda.size());
  for (std::size_t s = 0; s < lambda.size(); ++s) {
    const auto it = std::find(candidates_[s].begin(), candidates_[s].end(), lambda[s]);
    if (it == candidates_[s].end()) throw ConfigError("lambda is not a grid point");
    idx[s] = static_cast<std::size_t>(it - candidates_[s].begin());
  }
  return idx;
}

void SmoothingGrid::extend(std::size_t state, bool upper) {
  auto& list = candidates_.at(state);
  if (upper) {
    list.push_back(list.back() > 0.0 ? 2.0 * list.back() : 1.0);
  } else {
    if (!(list.front() > 0.0)) throw ConfigError("cannot extend below zero");
    list.insert(list.begin(), 0.5 * list.front());
  }
}

CvReport grid_walk(SmoothingGrid grid, const std::vector<double>& start, std::size_t partitions,
                   const BatchScorer& scorer, const WalkOptions& options) {
  return grid_walk_seeded(std::move(grid), start, partitions, scorer, options, nullptr);
}

CvReport grid_walk_seeded(SmoothingGrid grid, const std::vector<double>& start, std::size_t partitions,
                          const BatchScorer& scorer, const WalkOptions& options, const CvReport* prior) {
  if (partitions == 0) throw ConfigError("grid walk needs at least one partition");
  grid.index_of(start);  // start must be on the grid

  CvReport report;
  ScoreTable table(partitions, scorer, report);
  if (prior) table.seed(*prior);

  std::vector<double> current = start;
  report.trajectory.push_back(current);
  constexpr int kMaxSteps = 10000;
  for (int step = 0; step < kMaxSteps; ++step) {
    if (options.extend_boundary) {
      for (std::size_t s = 0; s < grid.dimensions(); ++s) {
        const auto& list = grid.candidates(s);
        if (current[s] == list.back() && 2.0 * list.back() <= options.max_lambda && list.back() > 0.0) {
          grid.extend(s, true);
          report.extensions.push_back({s, grid.candidates(s).back()});
        }
        if (current[s] == list.front() && 0.5 * list.front() >= options.min_lambda) {
          grid.extend(s, false);
          report.extensions.push_back({s, grid.candidates(s).front()});
        }
      }
    }

    const std::vector<std::size_t> idx = grid.index_of(current);
    std::vector<std::vector<double>> points{current};
    for (std::size_t s = 0; s < grid.dimensions(); ++s) {
      if (idx[s] > 0) {
        auto down = idx;
        --down[s];
        points.push_back(grid.at(down));
      }
      if (idx[s] + 1 < grid.candidates(s).size()) {
        auto up = idx;
        ++up[s];
        points.push_back(grid.at(up));
      }
    }
    table.ensure(points);

    std::vector<double> best = current;
    double best_score = table.mean(current);
    for (std::size_t p = 1; p < points.size(); ++p) {
      const double s = table.mean(points[p]);
      if (s > best_score) {
        best_score = s;
        best = points[p];
      }
    }
    if (best == current) break;
    current = best;
    report.trajectory.push_back(current);
  }

  report.selected = current;
  report.selected_score = report.mean_scores.at(current);
  return report;
}

CvReport diagonal_scan(std::size_t states, const std::vector<double>& values, std::size_t partitions,
                       const BatchScorer& scorer) {
  if (values.empty()) throw ConfigError("diagonal scan needs at least one value");
  if (partitions == 0) throw ConfigError("diagonal scan needs at least one partition");
  CvReport report;
  ScoreTable table(partitions, scorer, report);
  std::vector<std::vector<double>> points;
  for (double v : values) points.emplace_back(states, v);
  table.ensure(points);

  std::size_t best = 0;
  for (std::size_t p = 1; p < points.size(); ++p)
    if (table.mean(points[p]) > table.mean(points[best])) best = p;
  report.selected = points[best];
  report.selected_score = table.mean(points[best]);
  report.trajectory.push_back(points[best]);
  return report;
}

CvFitScorer::CvFitScorer(std::vector<double> series, std::vector<Partition> partitions, FitConfig base,
                         unsigned threads, CvMasking masking)
    : series_(std::move(series)),
      partitions_(std::move(partitions)),
      base_(std::move(base)),
      threads_(threads),
      masking_(masking) {
  if (partitions_.empty()) throw ConfigError("cross-validation needs at least one partition");
  for (const auto& p : partitions_) {
    if (p.calibration.size() + p.validation.size() != series_.size() && masking_ == CvMasking::Standard)
      throw ConfigError("partition does not cover the series");
  }
}

std::vector<double> CvFitScorer::operator()(std::span<const CellRequest> cells) {
  const std::size_t n = cells.size();
  std::vector<std::vector<double>> warm(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (cells[r].partition >= partitions_.size()) throw ConfigError("partition index out of range");
    const std::vector<double>* nearest = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [key, working] : fitted_) {
      if (key.second != cells[r].partition || key.first.size() != cells[r].lambda.size()) continue;
      const double d = log_distance(key.first, cells[r].lambda);
      if (d < best) {
        best = d;
        nearest = &working;
      }
    }
    if (nearest) warm[r] = *nearest;
  }

  std::vector<double> scores(n, kNaN);
  std::vector<std::vector<double>> working(n);
  std::vector<char> failed(n, 0);
  parallel_for(n, threads_, [&](std::size_t r) {
    const CellRequest& cell = cells[r];
    const Partition& part = partitions_[cell.partition];
    FitConfig config = base_;
    config.penalty.lambda = cell.lambda;
    config.seed = cell_seed(base_.seed, cell.lambda, cell.partition);
    config.threads = 1;
    if (!warm[r].empty()) config.warm_starts.push_back(warm[r]);

    const bool mask = masking_ == CvMasking::Standard;
    const std::vector<double> calibration =
        mask ? mask_series(series_, part.validation) : series_;
    const std::vector<double> validation =
        mask ? mask_series(series_, part.calibration) : series_;
    try {
      FitResult fit_result = fit(calibration, config);
      const ForwardPass fp = forecast_state_probs(fit_result.model, validation);
      scores[r] = fp.log_likelihood;
      working[r] = std::move(fit_result.working);
    } catch (const NumericalError&) {
      failed[r] = 1;
    }
  });

  for (std::size_t r = 0; r < n; ++r) {
    if (failed[r] || !std::isfinite(scores[r])) {
      ++failures_;
      scores[r] = kNaN;
      continue;
    }
    fitted_[{cells[r].lambda, cells[r].partition}] = std::move(working[r]);
  }
  return scores;
}

BatchScorer CvFitScorer::as_batch_scorer() {
  return [this](std::span<const CellRequest> cells) { return (*this)(cells); };
}

CvScore cv_score(Series series, const std::vector<double>& lambda, const std::vector<Partition>& partitions,
                 const FitConfig& config, CvMasking masking, unsigned threads) {
  CvFitScorer scorer(std::vector<double>(series.begin(), series.end()), partitions, config, threads, masking);
  std::vector<CellRequest> cells;
  for (std::size_t c = 0; c < partitions.size(); ++c) cells.push_back({lambda, c});
  CvScore out;
  out.per_partition = scorer(cells);
  const MeanScore m = mean_of(out.per_partition);
  if (!std::isfinite(m.mean)) throw NumericalError("cross-validation failed on every partition");
  out.mean = m.mean;
  out.excluded = m.excluded;
  return out;
}

LambdaSelection select_lambda(CvFitScorer& scorer, std::size_t states, const LambdaSearch& search) {
  const std::size_t partitions = scorer.partitions().size();
  const BatchScorer batch = scorer.as_batch_scorer();
  LambdaSelection out;

  if (!scorer.base().structure.has_spline()) {
    // Smoothing parameters do not enter a purely parametric model.
    const std::vector<double> zeros(states, 0.0);
    out.walk = grid_walk(SmoothingGrid::shared(states, {0.0}), zeros, partitions, batch);
    out.lambda = out.walk.selected;
    out.score = out.walk.selected_score;
    return out;
  }

  const SmoothingGrid grid = SmoothingGrid::shared(states, search.values);
  std::vector<double> start;
  const CvReport* prior = nullptr;
  if (search.start) {
    start = *search.start;
  } else {
    const auto& diag = search.diagonal.empty() ? search.values : search.diagonal;
    out.diagonal = diagonal_scan(states, diag, partitions, batch);
    start = out.diagonal.selected;
    prior = &out.diagonal;
  }

  // The start may lie off the candidate lists (e.g. a wider diagonal scan).
  SmoothingGrid walk_grid = grid;
  std::vector<std::vector<double>> lists;
  for (std::size_t s = 0; s < states; ++s) {
    std::vector<double> list = grid.candidates(s);
    if (std::find(list.begin(), list.end(), start[s]) == list.end()) {
      list.push_back(start[s]);
      std::sort(list.begin(), list.end());
    }
    lists.push_back(std::move(list));
  }
  walk_grid = SmoothingGrid(lists);

  out.walk = grid_walk_seeded(walk_grid, start, partitions, batch, search.walk, prior);
  out.lambda = out.walk.selected;
  out.score = out.walk.selected_score;
  return out;
}

StateCountReport select_num_states(Series series, const std::vector<std::size_t>& candidates,
                                   const FitConfigFactory& factory, const LambdaSearch& search,
                                   const std::vector<Partition>& partitions, unsigned threads) {
  if (candidates.empty()) throw ConfigError("state-count selection needs at least one candidate");
  StateCountReport report;
  report.candidates = candidates;
  const std::vector<double> data(series.begin(), series.end());
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const std::size_t n = candidates[k];
    if (n == 0) throw ConfigError("state-count candidates must be >= 1");
    CvFitScorer scorer(data, partitions, factory(n), threads);
    const LambdaSelection sel = select_lambda(scorer, n, search);
    report.mean_scores.push_back(sel.score);
    report.lambdas.push_back(sel.lambda);
    if (!best || sel.score > report.mean_scores[*best]) best = k;
  }
  report.selected = candidates[*best];
  report.selected_score = report.mean_scores[*best];
  return report;
}

}  // namespace splinehmm
