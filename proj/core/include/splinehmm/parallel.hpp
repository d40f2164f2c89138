#ifndef SPLINEHMM_PARALLEL_HPP
#define SPLINEHMM_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace splinehmm {

/// Runs fn(0..n-1) on up to `threads` workers. Each index runs exactly once;
/// the first exception (lowest index) is rethrown after all workers join.
/// threads == 0 means hardware concurrency.
void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t)>& fn);

unsigned resolve_threads(unsigned requested);

}  // namespace splinehmm

#endif  // SPLINEHMM_PARALLEL_HPP
