#include "descatter3d/threading.hpp"

#include <atomic>
#include <thread>
#include <vector>

namespace descatter3d {

namespace {
int g_threads = 1;
}

void set_thread_count(int n) {
  g_threads = n < 1 ? 1 : n;
}

int thread_count() { return g_threads; }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
  const int workers = static_cast<int>(std::min<std::int64_t>(g_threads, n));
  if (workers <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::int64_t i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= n) break;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace descatter3d
