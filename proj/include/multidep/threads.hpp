#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace multidep {

// Effective worker count: MULTIDEP_THREADS overrides the requested value,
// 0 means "use what the hardware reports".
inline int thread_count(int requested = 0) {
  if (const char* env = std::getenv("MULTIDEP_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) requested = v;
  }
  if (requested <= 0) {
    unsigned hw = std::thread::hardware_concurrency();
    requested = hw > 0 ? static_cast<int>(hw) : 1;
  }
  return std::max(1, requested);
}

// Runs fn(i) for i in [0, count). Work is split into contiguous chunks so
// per-index RNG substreams keep results independent of the thread count.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn,
                         int requested_threads = 0) {
  int workers = thread_count(requested_threads);
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  workers = static_cast<int>(std::min<std::size_t>(workers, count));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::size_t chunk = (count + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    std::size_t lo = w * chunk;
    std::size_t hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace multidep
