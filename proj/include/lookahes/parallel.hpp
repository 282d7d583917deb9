#ifndef LOOKAHES_PARALLEL_HPP
#define LOOKAHES_PARALLEL_HPP

// Slot-based work sharing: every task index owns its own output slot, so a
// run's results are byte-identical for any thread count; reductions happen
// afterwards in fixed index order.

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace lookahes {

// Thread-count resolution: explicit argument > LOOKAHES_THREADS > hardware.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("LOOKAHES_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Run fn(0..n-1), each index exactly once.  fn must write only to
// index-owned state.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  threads = resolve_threads(threads);
  if (threads <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  const int nthreads = std::min(threads, n);
  pool.reserve(nthreads - 1);
  for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

}  // namespace lookahes

#endif  // LOOKAHES_PARALLEL_HPP
