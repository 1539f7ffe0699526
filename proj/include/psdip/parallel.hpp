#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace psdip {

namespace detail {
inline std::atomic<int>& thread_cap() {
  static std::atomic<int> cap{[] {
    const char* env = std::getenv("PSDIP_THREADS");
    if (env == nullptr) return 1;
    try {
      return std::max(1, std::stoi(env));
    } catch (...) {
      return 1;
    }
  }()};
  return cap;
}
}  // namespace detail

/// Worker-thread cap for data-parallel kernels. Initialized from PSDIP_THREADS (default 1).
inline int num_threads() { return detail::thread_cap().load(); }
inline void set_num_threads(int n) { detail::thread_cap().store(std::max(1, n)); }

/// Runs fn(i) for i in [0, n) over contiguous chunks. Each index is processed by exactly one
/// thread, so outputs that are written per index do not depend on the thread count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(num_threads()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace psdip
