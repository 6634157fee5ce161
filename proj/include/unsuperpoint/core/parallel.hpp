#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace unsuperpoint {

// Runs fn(i) for i in [0, n) on up to num_threads workers with a fixed
// block partition. Results must not depend on execution order; callers
// that reduce across i do so after the join, in index order, so output
// is identical for any thread count.
inline void parallel_for(std::size_t n, int num_threads, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (num_threads <= 0) num_threads = std::max(1, hw);
  num_threads = static_cast<int>(std::min<std::size_t>(num_threads, n));
  if (num_threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(num_threads);
  std::size_t chunk = (n + num_threads - 1) / num_threads;
  for (int t = 0; t < num_threads; ++t) {
    std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace unsuperpoint
