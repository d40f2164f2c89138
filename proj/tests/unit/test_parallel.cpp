#include <gtest/gtest.h>

#include <atomic>
#include <stdexcept>
#include <vector>

#include "splinehmm/parallel.hpp"

using namespace splinehmm;

TEST(ParallelFor, EachIndexRunsOnce) {
  for (unsigned threads : {1u, 2u, 4u, 0u}) {
    std::vector<std::atomic<int>> hits(257);
    parallel_for(hits.size(), threads, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1) << threads;
  }
}

TEST(ParallelFor, EmptyRangeIsNoOp) {
  bool called = false;
  parallel_for(0, 3, [&](std::size_t) { called = true; });
  EXPECT_FALSE(called);
}

TEST(ParallelFor, RethrowsLowestIndexAfterAllRun) {
  for (unsigned threads : {1u, 3u}) {
    std::atomic<int> ran{0};
    try {
      parallel_for(40, threads, [&](std::size_t i) {
        ++ran;
        if (i == 7 || i == 30) throw std::runtime_error(std::to_string(i));
      });
      FAIL();
    } catch (const std::runtime_error& e) {
      EXPECT_STREQ(e.what(), "7");
    }
    EXPECT_EQ(ran.load(), 40);
  }
}

TEST(ParallelFor, ResolveThreads) {
  EXPECT_EQ(resolve_threads(3), 3u);
  EXPECT_GE(resolve_threads(0), 1u);
}
