#pragma once

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

namespace torusmix {

inline int effective_threads(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/*
 * Static block partition of [0, n).  Results must be written to slots indexed
 * by i so that the outcome is identical for every thread count; reductions
 * happen afterwards in index order.
 */
template <typename Fn>
void parallel_for(std::int64_t n, int threads, Fn&& fn) {
  threads = std::min<std::int64_t>(effective_threads(threads), std::max<std::int64_t>(n, 1));
  if (threads <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  std::int64_t chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    std::int64_t lo = t * chunk;
    std::int64_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace torusmix
