#ifndef SPLINEHMM_MODEL_SELECTION_HPP
#define SPLINEHMM_MODEL_SELECTION_HPP

#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "splinehmm/common.hpp"
#include "splinehmm/estimation.hpp"

namespace splinehmm {

/// Calibration / validation split of time indices 0..T-1 (both sorted).
struct Partition {
  std::vector<std::size_t> calibration;
  std::vector<std::size_t> validation;
};

/// C uniform random partitions; the validation set has round(T (1 - f)) indices.
std::vector<Partition> make_partitions(std::size_t length, std::size_t count, double calibration_fraction,
                                       std::uint64_t seed);

/// Copy of the series with the given indices set missing.
std::vector<double> mask_series(Series series, std::span<const std::size_t> masked);

/// Per-state candidate lambda lists; the grid is their Cartesian product.
class SmoothingGrid {
 public:
  explicit SmoothingGrid(std::vector<std::vector<double>> candidates);

  /// The same candidate list for each of `states` coordinates.
  static SmoothingGrid shared(std::size_t states, std::vector<double> values);

  std::size_t dimensions() const { return candidates_.size(); }
  const std::vector<double>& candidates(std::size_t state) const { return candidates_[state]; }

  std::vector<double> at(const std::vector<std::size_t>& index) const;
  /// Index of an exact grid point; throws ConfigError if lambda is not on the grid.
  std::vector<std::size_t> index_of(const std::vector<double>& lambda) const;

  /// Appends 2 * last (upper = true) or prepends first / 2 to one coordinate's list.
  void extend(std::size_t state, bool upper);

 private:
  std::vector<std::vector<double>> candidates_;
};

/// One (lambda, partition) evaluation request.
struct CellRequest {
  std::vector<double> lambda;
  std::size_t partition = 0;
};

/// Scores a batch of cells; NaN marks a failed fit (excluded from the mean).
using BatchScorer = std::function<std::vector<double>(std::span<const CellRequest>)>;

struct WalkOptions {
  /// Extend a coordinate's candidate list when the walk selects its boundary
  /// value (doubling upward, halving downward).
  bool extend_boundary = false;
  double max_lambda = 1048576.0;
  double min_lambda = 1.0;
};

struct CellScore {
  std::vector<double> lambda;
  std::size_t partition = 0;
  double score = 0.0;
};

struct BoundaryExtension {
  std::size_t state = 0;
  double value = 0.0;
};

struct CvReport {
  std::vector<CellScore> cells;  ///< in evaluation order
  std::map<std::vector<double>, double> mean_scores;
  std::map<std::vector<double>, std::size_t> excluded_partitions;
  std::vector<double> selected;
  double selected_score = 0.0;
  std::vector<std::vector<double>> trajectory;  ///< lambda_0*, lambda_1*, ...
  std::vector<BoundaryExtension> extensions;
  std::size_t cache_hits = 0;
  std::size_t evaluated_cells = 0;
};

/// Greedy walk: score the current point and its direct neighbours (one grid
/// step in exactly one coordinate), move to the best, stop when the current
/// point is best. Every (lambda, partition) cell is scored at most once.
/// Ties keep the current point, then the first neighbour in enumeration
/// order (coordinate ascending, lower step first).
CvReport grid_walk(SmoothingGrid grid, const std::vector<double>& start, std::size_t partitions,
                   const BatchScorer& scorer, const WalkOptions& options = {});

/// As grid_walk, with cells already scored in `prior` reused instead of refitted.
CvReport grid_walk_seeded(SmoothingGrid grid, const std::vector<double>& start, std::size_t partitions,
                          const BatchScorer& scorer, const WalkOptions& options, const CvReport* prior);

/// Scores the diagonal points (v, ..., v) and returns the best, as a report
/// whose trajectory has a single entry.
CvReport diagonal_scan(std::size_t states, const std::vector<double>& values, std::size_t partitions,
                       const BatchScorer& scorer);

/// How the two stages mask data; `None` (nothing masked) exists for testing.
enum class CvMasking { Standard, None };

/// Fits on calibration data and scores validation data for given cells.
/// Keeps every fitted working vector so later fits for the same partition
/// warm-start from the nearest already-fitted lambda (log distance).
class CvFitScorer {
 public:
  CvFitScorer(std::vector<double> series, std::vector<Partition> partitions, FitConfig base,
              unsigned threads = 1, CvMasking masking = CvMasking::Standard);

  std::vector<double> operator()(std::span<const CellRequest> cells);

  BatchScorer as_batch_scorer();

  const std::vector<Partition>& partitions() const { return partitions_; }
  const FitConfig& base() const { return base_; }
  std::size_t failures() const { return failures_; }

 private:
  std::vector<double> series_;
  std::vector<Partition> partitions_;
  FitConfig base_;
  unsigned threads_;
  CvMasking masking_;
  std::map<std::pair<std::vector<double>, std::size_t>, std::vector<double>> fitted_;
  std::size_t failures_ = 0;
};

struct CvScore {
  double mean = 0.0;
  std::vector<double> per_partition;  ///< NaN for failed partitions
  std::size_t excluded = 0;
};

/// Mean validation log-likelihood for one lambda over the partitions.
CvScore cv_score(Series series, const std::vector<double>& lambda, const std::vector<Partition>& partitions,
                 const FitConfig& config, CvMasking masking = CvMasking::Standard, unsigned threads = 1);

/// Smoothing-parameter search settings shared by CV-based selection.
struct LambdaSearch {
  /// Candidate values per state (the grid is their product).
  std::vector<double> values = {256, 512, 1024, 2048, 4096, 8192, 16384};
  /// Values scanned on the diagonal to choose the walk's starting point;
  /// empty means `values`.
  std::vector<double> diagonal;
  /// Explicit start (skips the diagonal scan).
  std::optional<std::vector<double>> start;
  WalkOptions walk;
};

struct LambdaSelection {
  CvReport diagonal;  ///< empty when an explicit start was given
  CvReport walk;
  std::vector<double> lambda;
  double score = 0.0;
};

/// Diagonal scan (unless a start is given) followed by the grid walk, with
/// all fits sharing one CvFitScorer.
LambdaSelection select_lambda(CvFitScorer& scorer, std::size_t states, const LambdaSearch& search);

struct StateCountReport {
  std::vector<std::size_t> candidates;
  std::vector<double> mean_scores;
  std::vector<std::vector<double>> lambdas;
  std::size_t selected = 0;
  double selected_score = 0.0;
};

/// Builds the FitConfig used for N states (structure and defaults).
using FitConfigFactory = std::function<FitConfig(std::size_t states)>;

/// For each N: select lambda by CV and record the mean validation score on
/// the shared partitions; returns the N with the highest mean score.
StateCountReport select_num_states(Series series, const std::vector<std::size_t>& candidates,
                                   const FitConfigFactory& factory, const LambdaSearch& search,
                                   const std::vector<Partition>& partitions, unsigned threads = 1);

}  // namespace splinehmm

#endif  // SPLINEHMM_MODEL_SELECTION_HPP
