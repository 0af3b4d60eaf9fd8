#pragma once

// Deterministic fork-join helper. Work items are split into contiguous index
// ranges; every element is computed by exactly one thread with a fixed inner
// order, so results do not depend on the thread count.

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace pkde {

inline int default_thread_count() {
  if (const char* env = std::getenv("PKDE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? int(hw) : 1;
}

template <typename Fn>
inline void parallel_for(long long n, int threads, const Fn& fn) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    fn(0ll, n);
    return;
  }
  const int used = int(std::min<long long>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(size_t(used));
  const long long chunk = (n + used - 1) / used;
  for (int t = 0; t < used; ++t) {
    const long long lo = t * chunk;
    const long long hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace pkde
