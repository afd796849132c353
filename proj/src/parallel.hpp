#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace elastovox::detail {

/// Runs fn(i) for i in [0, n) on up to `threads` threads in contiguous chunks.
/// Each index is handled by exactly one thread, so per-index writes stay
/// deterministic.
template <typename Fn> void parallel_for(int n, int threads, Fn&& fn) {
  threads = std::clamp(threads, 1, std::max(1, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  const int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int begin = t * chunk;
    const int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([begin, end, &fn] {
      for (int i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

} // namespace elastovox::detail
