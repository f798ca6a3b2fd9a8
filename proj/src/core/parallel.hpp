#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace ndr {

// Runs body(0..n-1) across up to `threads` workers. Callers own determinism:
// write results into per-index slots and reduce in index order.
inline void parallel_over(int n, int threads, const std::function<void(int)>& body) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  int workers = std::min(threads, n);
  pool.reserve(size_t(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace ndr
