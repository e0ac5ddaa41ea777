#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace crane {

/// Row-parallel execution is only allowed when `deterministic` is false.
struct Parallelism {
  bool deterministic = true;
  std::size_t threads = 1;

  std::size_t effective_threads() const {
    return deterministic ? 1 : std::max<std::size_t>(1, threads);
  }
};

/// Reads CRANE_THREADS; returns 1 when unset or invalid.
std::size_t threads_from_env();

/// Calls fn(begin, end) over contiguous chunks of [0, n). Each index is
/// visited by exactly one chunk, so per-row kernels give identical results in
/// both modes.
template <typename Fn>
void parallel_for(std::size_t n, const Parallelism& par, Fn&& fn) {
  const std::size_t workers = std::min(par.effective_threads(), n);
  if (workers <= 1) {
    if (n > 0) fn(std::size_t{0}, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace crane
